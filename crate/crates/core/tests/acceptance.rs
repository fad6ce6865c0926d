//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use boxtrack::analytics::{count_id_events, match_to_gt, transition_accuracy};
use boxtrack::assignment::CostMatrix;
use boxtrack::cli::{evaluate, track, TrackMode};
use boxtrack::descriptor_tracker::{
    appearance_cost, association_cost, blend, minmax_normalize, positional_cost,
    run_descriptor_tracking, solve_assignment, Track,
};
use boxtrack::model::{BBox, Detection, Point};
use boxtrack::pose_tracker::{
    integration_matching, pose_frames, run_pose_tracking, PoseFrame, PoseSample,
};
use boxtrack::stream_io::{FrameRecord, GroundTruthRecord, TrackRow};
use boxtrack::synth::{boxer_ids, generate_session, preset, ScenarioSpec, Session, PRESET_NAMES};
use boxtrack::transition::segment_bouts;
use boxtrack::{PipelineConfig, SegmentKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 9] = [
        ("transition detection", transition_detection),
        ("pose tracking", pose_tracking),
        ("descriptor tracking", descriptor_tracking),
        ("assignment optimality", assignment_optimality),
        ("normalization invariance", normalization_invariance),
        ("track-age policy", track_age_policy),
        ("mini-bout integration", minibout_integration),
        ("metric sanity", metric_sanity),
        ("end-to-end", end_to_end),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let v = std::panic::catch_unwind(check)
            .unwrap_or_else(|e| Verdict::new(false, format!("panicked: {}", panic_text(&e))));
        if !v.pass {
            failures += 1;
        }
        println!(
            "{} {name}: {} ({:.2} s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn session(
    name: &str,
    seed: u64,
    n_bouts: usize,
    bout_s: f64,
    rest_s: f64,
) -> (ScenarioSpec, Session) {
    let spec = ScenarioSpec {
        seed,
        n_bouts,
        ..preset(name).expect("known preset")
    }
    .with_durations(bout_s, rest_s);
    let s = generate_session(&spec).expect("valid scenario");
    (spec, s)
}

// ---------------------------------------------------------------------------

fn transition_detection() -> Verdict {
    let start = Instant::now();
    let names = ["clean", "early-entry", "rope-toucher"];
    let mut worst = f64::INFINITY;
    let mut total = 0.0;
    for seed in 0..20u64 {
        let (spec, s) = session(names[seed as usize % 3], seed, 5, 120.0, 60.0);
        let cfg = spec.pipeline_config();
        let pred = segment_bouts(&s.detections, &spec.ring, &cfg).expect("segmentation");
        let acc = transition_accuracy(&pred, &s.segments, 2.0, cfg.fps).expect("accuracy");
        worst = worst.min(acc);
        total += acc;
    }
    let elapsed = start.elapsed();
    Verdict::new(
        worst >= 0.90 && elapsed < Duration::from_secs(60),
        format!(
            "min accuracy {worst:.3}, mean {:.3} over 20 sessions in {:.1} s",
            total / 20.0,
            elapsed.as_secs_f64()
        ),
    )
}

fn tracking_sessions() -> Vec<(String, ScenarioSpec, Session)> {
    (0..20u64)
        .map(|seed| {
            let name = if seed % 2 == 0 {
                "clinch"
            } else {
                "identical-attire"
            };
            let (spec, s) = session(name, seed, 1, 60.0, 30.0);
            (name.to_string(), spec, s)
        })
        .collect()
}

fn id_events(mode: TrackMode, spec: &ScenarioSpec, s: &Session, lambda: f64) -> (u64, u64) {
    let cfg = PipelineConfig {
        lambda,
        ..spec.pipeline_config()
    };
    let (tracks, _) = track(mode, &s.detections, &s.segments, &cfg).expect("tracking");
    let report =
        evaluate(&tracks, &s.ground_truth, &s.segments, None, &cfg, 2.0).expect("evaluation");
    (report.idu, report.ids)
}

fn pose_tracking() -> Verdict {
    let mut bad = Vec::new();
    for (name, spec, s) in tracking_sessions() {
        let m = id_events(TrackMode::Pose, &spec, &s, 0.8);
        if m != (0, 0) {
            bad.push(format!("{name}/{}: IDU {} IDS {}", spec.seed, m.0, m.1));
        }
    }
    Verdict::new(
        bad.is_empty(),
        if bad.is_empty() {
            "IDU 0, IDS 0 on all 20 bouts".to_string()
        } else {
            bad.join("; ")
        },
    )
}

fn descriptor_tracking() -> Verdict {
    let mut bad = Vec::new();
    let (mut max_idu, mut max_ids) = (0, 0);
    let mut lambda_pairs = Vec::new();
    for (name, spec, s) in tracking_sessions() {
        let (idu, ids) = id_events(TrackMode::Descriptor, &spec, &s, 0.8);
        max_idu = max_idu.max(idu);
        max_ids = max_ids.max(ids);
        if idu > 3 || ids > 8 {
            bad.push(format!("{name}/{}: IDU {idu} IDS {ids}", spec.seed));
        }
        if name == "identical-attire" {
            let (a, b) = id_events(TrackMode::Descriptor, &spec, &s, 0.0);
            if a + b <= idu + ids {
                bad.push(format!(
                    "{name}/{}: appearance-only {} events vs blended {}",
                    spec.seed,
                    a + b,
                    idu + ids
                ));
            }
            lambda_pairs.push((a + b, idu + ids));
        }
    }
    let min_gap = lambda_pairs
        .iter()
        .map(|&(a, b)| a as i64 - b as i64)
        .min()
        .unwrap_or(0);
    Verdict::new(
        bad.is_empty(),
        if bad.is_empty() {
            format!("worst IDU {max_idu}, worst IDS {max_ids}; appearance-only exceeds blended by at least {min_gap} events")
        } else {
            bad.join("; ")
        },
    )
}

/// Exhaustive search over every partial matching of allowed pairs: most
/// pairs first, then smallest total.
fn brute_force(cost: &CostMatrix<f64>, gate: f64) -> (usize, f64) {
    fn go(
        cost: &CostMatrix<f64>,
        gate: f64,
        row: usize,
        used: &mut Vec<bool>,
        n: usize,
        sum: f64,
        best: &mut (usize, f64),
    ) {
        if row == cost.rows() {
            if n > best.0 || (n == best.0 && sum < best.1) {
                *best = (n, sum);
            }
            return;
        }
        go(cost, gate, row + 1, used, n, sum, best);
        for j in 0..cost.cols() {
            let c = cost.get(row, j);
            if !used[j] && c <= gate {
                used[j] = true;
                go(cost, gate, row + 1, used, n + 1, sum + c, best);
                used[j] = false;
            }
        }
    }
    let mut best = (0, f64::INFINITY);
    go(
        cost,
        gate,
        0,
        &mut vec![false; cost.cols()],
        0,
        0.0,
        &mut best,
    );
    if best.0 == 0 {
        best.1 = 0.0;
    }
    best
}

fn assignment_optimality() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for k in 0..1000 {
        let (r, c) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let cost = CostMatrix::from_fn(r, c, |_, _| rng.gen_range(0.0..1.0));
        let gate = if k % 2 == 0 {
            f64::INFINITY
        } else {
            rng.gen_range(0.2..1.0)
        };
        let pairs = solve_assignment(&cost, gate);
        let rows: HashSet<usize> = pairs.iter().map(|p| p.0).collect();
        let cols: HashSet<usize> = pairs.iter().map(|p| p.1).collect();
        let valid = rows.len() == pairs.len()
            && cols.len() == pairs.len()
            && pairs.iter().all(|&(i, j)| cost.get(i, j) <= gate);
        let (n, best) = brute_force(&cost, gate);
        if !valid || pairs.len() != n || (cost.total(&pairs) - best).abs() > 1e-9 {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    Verdict::new(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!(
            "{mismatches} mismatches in 1000 matrices up to 6x6, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn normalization_invariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut changed = 0;
    for _ in 0..200 {
        let (nt, nd, dim) = (
            rng.gen_range(1..=6),
            rng.gen_range(1..=6),
            rng.gen_range(2..=16),
        );
        let embedding = |rng: &mut ChaCha8Rng| {
            (0..dim)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect::<Vec<f64>>()
        };
        let tracks: Vec<Track<f64>> = (0..nt)
            .map(|_| {
                let pos = Point::new(rng.gen_range(0.0..800.0), rng.gen_range(0.0..800.0));
                let vel = Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
                Track::at(pos, vel).with_appearance(embedding(&mut rng))
            })
            .collect();
        let dets: Vec<Detection<f64>> = (0..nd)
            .map(|_| {
                let c = Point::new(rng.gen_range(0.0..800.0), rng.gen_range(0.0..800.0));
                Detection::new(0, BBox::centered(c, 40.0, 40.0), 0.9)
                    .with_embedding(embedding(&mut rng))
            })
            .collect();
        let lambda = rng.gen_range(0.0..=1.0);
        let reference = solve_assignment(
            &association_cost(&tracks, &dets, lambda).expect("cost"),
            1.0,
        );
        let pos = positional_cost(&tracks, &dets).expect("positional");
        let app = appearance_cost(&tracks, &dets).expect("appearance");
        let (a, b) = (rng.gen_range(0.001..1000.0), rng.gen_range(-1000.0..1000.0));
        let (pos_t, app_t) = if rng.gen_bool(0.5) {
            (pos.map(|v| a * v + b), app)
        } else {
            (pos, app.map(|v| a * v + b))
        };
        let blended =
            blend(&minmax_normalize(&pos_t), &minmax_normalize(&app_t), lambda).expect("blend");
        if solve_assignment(&blended, 1.0) != reference {
            changed += 1;
        }
    }
    Verdict::new(
        changed == 0,
        format!("{changed} of 200 matchings changed under affine rescaling"),
    )
}

/// The tracker ID covering ground-truth person `person` in `frame`.
fn id_of(rows: &[TrackRow<f64>], gt: &GroundTruthRecord<f64>, person: u64) -> Option<u64> {
    let pred: Vec<(u64, BBox<f64>)> = rows
        .iter()
        .filter(|r| r.frame_index == gt.frame_index)
        .map(|r| (r.id, r.bbox))
        .collect();
    match_to_gt(&pred, gt, 0.5)
        .into_iter()
        .find(|&(_, g)| g == person)
        .map(|(p, _)| p)
}

/// Hides one boxer for `gap` frames partway through a clean bout and
/// reports that boxer's ID just before and just after the gap.
fn dropout_ids(gap: u64, max_age: u64) -> (Option<u64>, Option<u64>) {
    let (spec, s) = session("clean", 5, 1, 60.0, 30.0);
    let bout = s
        .segments
        .iter()
        .find(|g| g.kind == SegmentKind::Bout)
        .expect("one bout");
    let person = boxer_ids(0)[0];
    let from = bout.start_frame + 100;
    let mut frames: Vec<FrameRecord<f64>> = s
        .detections
        .iter()
        .filter(|f| bout.contains(f.frame_index))
        .cloned()
        .collect();
    for (f, g) in frames.iter_mut().zip(
        s.ground_truth
            .iter()
            .filter(|g| bout.contains(g.frame_index)),
    ) {
        if (from..from + gap).contains(&f.frame_index) {
            let k = g
                .entries
                .iter()
                .position(|e| e.person_id == person)
                .expect("person present");
            f.detections.remove(k);
        }
    }
    let cfg = PipelineConfig {
        max_track_age_frames: max_age,
        ..spec.pipeline_config()
    };
    let rows = run_descriptor_tracking(&frames, &cfg).expect("tracking");
    let gt_at = |frame: u64| {
        s.ground_truth
            .iter()
            .find(|g| g.frame_index == frame)
            .expect("gt frame")
    };
    (
        id_of(&rows, gt_at(from - 1), person),
        id_of(&rows, gt_at(from + gap + 5), person),
    )
}

fn track_age_policy() -> Verdict {
    let max_age = 100;
    let (before_short, after_short) = dropout_ids(50, max_age);
    let (before_long, after_long) = dropout_ids(max_age + 1, max_age);
    let resumed = before_short.is_some() && before_short == after_short;
    let retired = before_long.is_some() && after_long.is_some() && before_long != after_long;
    Verdict::new(
        resumed && retired,
        format!(
            "max_age {max_age}: 50-frame gap {before_short:?} -> {after_short:?}, {}-frame gap {before_long:?} -> {after_long:?}",
            max_age + 1
        ),
    )
}

fn minibout_integration() -> Verdict {
    let m = CostMatrix::from_f64_rows(&[&[1.0, 2.0], &[2.0, 100.0]]).expect("matrix");
    let pairs = integration_matching(&m, f64::INFINITY);
    let anti_diagonal = pairs == vec![(0, 1), (1, 0)];

    let mut unchanged = 0;
    let mut total = 0;
    for (k, name) in ["clinch", "identical-attire", "clean"].iter().enumerate() {
        let (spec, s) = session(name, 40 + k as u64, 1, 60.0, 30.0);
        let bout = s
            .segments
            .iter()
            .find(|g| g.kind == SegmentKind::Bout)
            .expect("one bout");
        let frames: Vec<FrameRecord<f64>> = s
            .detections
            .iter()
            .filter(|f| bout.contains(f.frame_index))
            .cloned()
            .collect();
        let cfg = spec.pipeline_config();
        let base = pose_frames(&frames);
        let ids = |pf: &[PoseFrame<f64>]| -> Vec<(u64, u64)> {
            run_pose_tracking(pf, &cfg)
                .expect("pose tracking")
                .into_iter()
                .map(|r| (r.frame_index, r.id))
                .collect()
        };
        let reference = ids(&base);
        for (dx, dy) in [(256.0, -512.0), (-1024.0, 64.0), (3.0, 7.0)] {
            let moved: Vec<PoseFrame<f64>> = base
                .iter()
                .map(|f| PoseFrame {
                    frame_index: f.frame_index,
                    poses: f
                        .poses
                        .iter()
                        .map(|p| {
                            let mut k = p.keypoints;
                            for q in &mut k {
                                q.x += dx;
                                q.y += dy;
                            }
                            PoseSample::new(p.frame_index, k)
                        })
                        .collect(),
                })
                .collect();
            total += 1;
            if ids(&moved) == reference {
                unchanged += 1;
            }
        }
    }
    Verdict::new(
        anti_diagonal && unchanged == total,
        format!("anti-diagonal case -> {pairs:?}; {unchanged}/{total} translated sessions keep identical ID tables"),
    )
}

fn metric_sanity() -> Verdict {
    let mut bad = Vec::new();
    for (k, name) in PRESET_NAMES.iter().enumerate() {
        let (spec, s) = session(name, 100 + k as u64, 2, spec_bout(name), 6.0);
        let truth: Vec<TrackRow<f64>> = s
            .ground_truth
            .iter()
            .flat_map(|g| {
                g.entries.iter().map(move |e| TrackRow {
                    frame_index: g.frame_index,
                    id: e.person_id,
                    bbox: e.bbox,
                    confidence: 1.0,
                })
            })
            .collect();
        let m = count_id_events(&truth, &s.ground_truth, 0.5);
        if (m.idu, m.ids) != (0, 0) {
            bad.push(format!(
                "{name}: pred = gt gives IDU {} IDS {}",
                m.idu, m.ids
            ));
        }
        let cfg = PipelineConfig {
            lambda: 0.0,
            ..spec.pipeline_config()
        };
        let (rows, _) =
            track(TrackMode::Descriptor, &s.detections, &s.segments, &cfg).expect("tracking");
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let mut ids: Vec<u64> = rows
            .iter()
            .map(|r| r.id)
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        ids.sort_unstable();
        let mut targets: Vec<u64> = ids.iter().map(|i| 1000 + 3 * i).collect();
        for i in (1..targets.len()).rev() {
            targets.swap(i, rng.gen_range(0..=i));
        }
        let map: std::collections::HashMap<u64, u64> = ids.into_iter().zip(targets).collect();
        let renamed: Vec<TrackRow<f64>> = rows
            .iter()
            .map(|r| TrackRow {
                id: map[&r.id],
                ..*r
            })
            .collect();
        let (a, b) = (
            count_id_events(&rows, &s.ground_truth, 0.5),
            count_id_events(&renamed, &s.ground_truth, 0.5),
        );
        if a != b {
            bad.push(format!("{name}: relabeling changed {a:?} to {b:?}"));
        }
    }
    Verdict::new(
        bad.is_empty(),
        if bad.is_empty() {
            format!(
                "pred = gt gives (0,0) and relabeling is neutral on all {} presets",
                PRESET_NAMES.len()
            )
        } else {
            bad.join("; ")
        },
    )
}

fn spec_bout(name: &str) -> f64 {
    preset(name).expect("known preset").bout_s
}

fn pgm_is_nontrivial(text: &str) -> Result<(), String> {
    let mut tokens = text.split_ascii_whitespace();
    if tokens.next() != Some("P2") {
        return Err("missing P2 magic".into());
    }
    let mut number = |what: &str| -> Result<u64, String> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| format!("bad {what}"))
    };
    let (w, h, max) = (number("width")?, number("height")?, number("maxval")?);
    let values: Result<Vec<u64>, String> = (0..w * h).map(|_| number("pixel")).collect();
    let values = values?;
    if tokens.next().is_some() {
        return Err("trailing data".into());
    }
    if max != 255 || values.iter().any(|&v| v > max) {
        return Err("pixel out of range".into());
    }
    let distinct: HashSet<u64> = values.iter().copied().collect();
    if !values.contains(&255) || distinct.len() < 3 {
        return Err(format!(
            "trivial heatmap with {} distinct levels",
            distinct.len()
        ));
    }
    Ok(())
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_boxtrack"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`{}` exited {:?}: {}",
            args[0],
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn end_to_end_one(dir: &Path, name: &str, seed: u64) -> Result<(), String> {
    let f = |n: &str| dir.join(n).to_string_lossy().into_owned();
    let seed = seed.to_string();
    cli(&["synth", "--preset", name, "--seed", &seed, "--out", &f("")])?;
    cli(&[
        "segment",
        "--detections",
        &f("detections.jsonl"),
        "--ring",
        &f("ring.json"),
        "--config",
        &f("config.json"),
        "--out",
        &f("pred.json"),
    ])?;
    cli(&[
        "track",
        "--mode",
        "pose",
        "--detections",
        &f("detections.jsonl"),
        "--bouts",
        &f("pred.json"),
        "--config",
        &f("config.json"),
        "--out",
        &f("tracks.csv"),
        "--poses-out",
        &f("poses.jsonl"),
    ])?;
    cli(&[
        "eval",
        "--tracks",
        &f("tracks.csv"),
        "--gt",
        &f("gt.jsonl"),
        "--gt-segments",
        &f("segments.json"),
        "--pred-segments",
        &f("pred.json"),
        "--config",
        &f("config.json"),
        "--out",
        &f("metrics.json"),
    ])?;
    cli(&[
        "analyze",
        "--tracks",
        &f("tracks.csv"),
        "--poses",
        &f("poses.jsonl"),
        "--ring",
        &f("ring.json"),
        "--config",
        &f("config.json"),
        "--hotspot",
        &f("heat.pgm"),
        "--los",
        &f("los.csv"),
    ])?;
    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("metrics.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    if !metrics["idu"].is_u64() || !metrics["ids"].is_u64() {
        return Err(format!("malformed metrics {metrics}"));
    }
    let pgm = std::fs::read_to_string(dir.join("heat.pgm")).map_err(|e| e.to_string())?;
    if name == "clean" {
        pgm_is_nontrivial(&pgm)?;
    } else if !pgm.starts_with("P2\n") {
        return Err("heatmap is not a plain PGM".into());
    }
    Ok(())
}

fn end_to_end() -> Verdict {
    let mut bad = Vec::new();
    for (k, name) in PRESET_NAMES.iter().enumerate() {
        let dir = tempfile::tempdir().expect("temp dir");
        if let Err(e) = end_to_end_one(dir.path(), name, 9 + k as u64) {
            bad.push(format!("{name}: {e}"));
        }
    }
    Verdict::new(
        bad.is_empty(),
        if bad.is_empty() {
            format!(
                "all {} presets completed; clean heatmap is valid and non-trivial",
                PRESET_NAMES.len()
            )
        } else {
            bad.join("; ")
        },
    )
}
