//! Command-line front end: one subcommand per pipeline stage, explicit file
//! arguments throughout.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::analytics::{
    count_id_events, hotspot, los_series, track_centroids, transition_accuracy, write_los,
    EvalReport, IdMetrics,
};
use crate::descriptor_tracker::run_descriptor_tracking;
use crate::error::{Error, Result};
use crate::model::{BoutSegment, PipelineConfig, SegmentKind};
use crate::pose_tracker::{pose_frames, pose_rows_to_tracks, run_pose_tracking};
use crate::stream_io::{self, FrameRecord, GroundTruthRecord, PoseRow, TrackRow};
use crate::synth::{generate_session, preset, ScenarioSpec, PRESET_NAMES};
use crate::transition::segment_bouts;

/// Result of running one command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    /// 0 on success, 1 for usage or domain errors, 2 for I/O errors.
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CommandOutcome {
    fn ok(stdout: String) -> Self {
        Self {
            exit_code: 0,
            stdout,
            stderr: String::new(),
        }
    }

    fn failed(err: &Error) -> Self {
        Self {
            exit_code: if err.is_io() { 2 } else { 1 },
            stdout: String::new(),
            stderr: format!("error: {err}\n"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "boxtrack",
    version,
    about = "Bout segmentation and boxer re-identification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Descriptor,
    Pose,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic session.
    Synth {
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
        preset: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long)]
        bouts: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Split a session into bouts and rests.
    Segment {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        ring: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track boxers within every bout.
    Track {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        bouts: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the tracked poses (pose mode only).
        #[arg(long)]
        poses_out: Option<PathBuf>,
    },
    /// Score tracks and segments against ground truth.
    Eval {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        gt_segments: PathBuf,
        #[arg(long)]
        pred_segments: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Boundary tolerance in seconds.
        #[arg(long, default_value_t = 2.0)]
        tol_s: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the ring hotspot image and line-of-sight series.
    Analyze {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        poses: Option<PathBuf>,
        #[arg(long)]
        ring: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        hotspot: PathBuf,
        #[arg(long)]
        los: PathBuf,
    },
    /// Check a detections file against the schema.
    Validate {
        #[arg(long)]
        detections: PathBuf,
    },
}

/// Parses `argv` (program name first) and runs the selected subcommand.
pub fn dispatch<I, S>(argv: I) -> CommandOutcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                CommandOutcome {
                    exit_code: 1,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                CommandOutcome::ok(text)
            };
        }
    };
    match run(cli.command) {
        Ok(outcome) => outcome,
        Err(e) => CommandOutcome::failed(&e),
    }
}

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| with_path(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| with_path(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut sink = create(path)?;
    f(&mut sink)?;
    sink.flush().map_err(|e| with_path(path, e))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => stream_io::read_config(open(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(command: Command) -> Result<CommandOutcome> {
    match command {
        Command::Synth {
            preset: name,
            seed,
            fps,
            bouts,
            out,
        } => synth(&name, seed, fps, bouts, &out),
        Command::Segment {
            detections,
            ring,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let records: Vec<FrameRecord<f64>> = stream_io::read_detections(open(&detections)?)?;
            let ring = stream_io::read_ring(open(&ring)?)?;
            let segments = segment_bouts(&records, &ring, &cfg)?;
            write_with(&out, |w| stream_io::write_segments(&segments, w))?;
            let bouts = segments
                .iter()
                .filter(|s| s.kind == SegmentKind::Bout)
                .count();
            Ok(CommandOutcome::ok(format!(
                "{} segments, {bouts} bouts -> {}\n",
                segments.len(),
                out.display()
            )))
        }
        Command::Track {
            mode,
            detections,
            bouts,
            config,
            out,
            poses_out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let records: Vec<FrameRecord<f64>> = stream_io::read_detections(open(&detections)?)?;
            let segments = stream_io::read_segments(open(&bouts)?)?;
            let (tracks, poses) = track(mode.into(), &records, &segments, &cfg)?;
            write_with(&out, |w| stream_io::write_tracks(&tracks, w))?;
            if let Some(p) = &poses_out {
                write_with(p, |w| stream_io::write_poses(&poses, w))?;
            }
            let ids = tracks.iter().map(|r| r.id).max().unwrap_or(0);
            Ok(CommandOutcome::ok(format!(
                "{} rows, highest id {ids} -> {}\n",
                tracks.len(),
                out.display()
            )))
        }
        Command::Eval {
            tracks,
            gt,
            gt_segments,
            pred_segments,
            config,
            tol_s,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let tracks: Vec<TrackRow<f64>> = stream_io::read_tracks(open(&tracks)?)?;
            let gt: Vec<GroundTruthRecord<f64>> = stream_io::read_ground_truth(open(&gt)?)?;
            let gt_segments = stream_io::read_segments(open(&gt_segments)?)?;
            let pred = match &pred_segments {
                Some(p) => Some(stream_io::read_segments(open(p)?)?),
                None => None,
            };
            let report = evaluate(&tracks, &gt, &gt_segments, pred.as_deref(), &cfg, tol_s)?;
            write_with(&out, |w| report.write(w))?;
            let acc = report
                .transition_accuracy
                .map_or_else(|| "n/a".to_string(), |a| format!("{a:.3}"));
            Ok(CommandOutcome::ok(format!(
                "IDU {} IDS {} transition accuracy {acc}\n",
                report.idu, report.ids
            )))
        }
        Command::Analyze {
            tracks,
            poses,
            ring,
            config,
            hotspot: pgm,
            los,
        } => {
            let cfg = load_config(config.as_deref())?;
            let tracks: Vec<TrackRow<f64>> = stream_io::read_tracks(open(&tracks)?)?;
            let ring = stream_io::read_ring(open(&ring)?)?;
            let heat = hotspot(track_centroids(&tracks), &ring, cfg.hotspot_grid)?;
            write_with(&pgm, |w| heat.write_pgm(w))?;
            let poses: Vec<PoseRow<f64>> = match &poses {
                Some(p) => stream_io::read_poses(open(p)?)?,
                None => Vec::new(),
            };
            let series = los_series(&poses);
            write_with(&los, |w| write_los(&series, w))?;
            Ok(CommandOutcome::ok(format!(
                "{} in-ring centroids, {} line-of-sight rows\n",
                heat.total_count(),
                series.len()
            )))
        }
        Command::Validate { detections } => {
            let report = stream_io::validate_stream(open(&detections)?)?;
            let mut text = String::new();
            for v in &report.violations {
                text.push_str(&format!("{v}\n"));
            }
            if report.is_empty() {
                Ok(CommandOutcome::ok(format!(
                    "{}: no violations\n",
                    detections.display()
                )))
            } else {
                Ok(CommandOutcome {
                    exit_code: 1,
                    stdout: text,
                    stderr: format!("{} violations\n", report.len()),
                })
            }
        }
    }
}

fn synth(
    name: &str,
    seed: u64,
    fps: Option<f64>,
    bouts: Option<usize>,
    out: &Path,
) -> Result<CommandOutcome> {
    let mut spec = ScenarioSpec {
        seed,
        ..preset(name).ok_or_else(|| Error::InvalidConfig(format!("unknown preset {name}")))?
    };
    if let Some(f) = fps {
        spec.fps = f;
    }
    if let Some(n) = bouts {
        spec.n_bouts = n;
    }
    let session = generate_session(&spec)?;
    fs::create_dir_all(out).map_err(|e| with_path(out, e))?;
    write_with(&out.join("detections.jsonl"), |w| {
        stream_io::write_detections(&session.detections, w)
    })?;
    write_with(&out.join("gt.jsonl"), |w| {
        stream_io::write_ground_truth(&session.ground_truth, w)
    })?;
    write_with(&out.join("segments.json"), |w| {
        stream_io::write_segments(&session.segments, w)
    })?;
    write_with(&out.join("ring.json"), |w| {
        stream_io::write_ring(&spec.ring, w)
    })?;
    write_with(&out.join("config.json"), |w| {
        stream_io::write_config(&spec.pipeline_config(), w)
    })?;
    Ok(CommandOutcome::ok(format!(
        "{name}: {} frames, {} bouts -> {}\n",
        session.detections.len(),
        spec.n_bouts,
        out.display()
    )))
}

fn frames_in<'a, T>(records: &'a [T], seg: &BoutSegment, frame: impl Fn(&T) -> u64) -> &'a [T] {
    let lo = records.partition_point(|r| frame(r) < seg.start_frame);
    let hi = records.partition_point(|r| frame(r) <= seg.end_frame);
    &records[lo..hi.max(lo)]
}

/// Track rows plus, in pose mode, the pose rows they were derived from.
pub type Tracked = (Vec<TrackRow<f64>>, Vec<PoseRow<f64>>);

/// Tracks every bout separately; IDs of later bouts continue after the
/// largest ID of earlier ones.
pub fn track(
    mode: TrackMode,
    records: &[FrameRecord<f64>],
    segments: &[BoutSegment],
    cfg: &PipelineConfig,
) -> Result<Tracked> {
    let mut tracks = Vec::new();
    let mut poses = Vec::new();
    let mut offset = 0u64;
    for seg in segments.iter().filter(|s| s.kind == SegmentKind::Bout) {
        let bout = frames_in(records, seg, |r| r.frame_index);
        let (mut t, mut p) = match mode {
            TrackMode::Descriptor => (run_descriptor_tracking(bout, cfg)?, Vec::new()),
            TrackMode::Pose => {
                let p = run_pose_tracking(&pose_frames(bout), cfg)?;
                (pose_rows_to_tracks(&p), p)
            }
        };
        let max_id = t
            .iter()
            .map(|r| r.id)
            .chain(p.iter().map(|r| r.id))
            .max()
            .unwrap_or(0);
        t.iter_mut().for_each(|r| r.id += offset);
        p.iter_mut().for_each(|r| r.id += offset);
        offset += max_id;
        tracks.extend(t);
        poses.extend(p);
    }
    Ok((tracks, poses))
}

/// Which tracker [`track`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackMode {
    Descriptor,
    Pose,
}

impl From<Mode> for TrackMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Descriptor => TrackMode::Descriptor,
            Mode::Pose => TrackMode::Pose,
        }
    }
}

/// ID metrics summed over ground-truth bouts, plus boundary accuracy when
/// predicted segments are given.
pub fn evaluate(
    tracks: &[TrackRow<f64>],
    gt: &[GroundTruthRecord<f64>],
    gt_segments: &[BoutSegment],
    pred_segments: Option<&[BoutSegment]>,
    cfg: &PipelineConfig,
    tol_s: f64,
) -> Result<EvalReport> {
    let mut sorted_tracks = tracks.to_vec();
    sorted_tracks.sort_by_key(|r| r.frame_index);
    let mut sorted_gt = gt.to_vec();
    sorted_gt.sort_by_key(|g| g.frame_index);
    let metrics: IdMetrics = gt_segments
        .iter()
        .filter(|s| s.kind == SegmentKind::Bout)
        .map(|seg| {
            count_id_events(
                frames_in(&sorted_tracks, seg, |r| r.frame_index),
                frames_in(&sorted_gt, seg, |g| g.frame_index),
                cfg.gt_iou_threshold,
            )
        })
        .sum();
    let transition_accuracy = match pred_segments {
        Some(p) => Some(transition_accuracy(p, gt_segments, tol_s, cfg.fps)?),
        None => None,
    };
    Ok(EvalReport {
        idu: metrics.idu,
        ids: metrics.ids,
        transition_accuracy,
    })
}
