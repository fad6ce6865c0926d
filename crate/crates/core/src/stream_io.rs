//! Readers and writers for the pipeline's on-disk formats.
//!
//! * detections: JSON Lines, one frame per line
//!   `{"frame": 0, "detections": [{"bbox": [x,y,w,h], "conf": 0.9, "embedding": [..]?, "keypoints": [[x,y,s] × 17]?}]}`
//! * ground truth: JSON Lines, `{"frame": 0, "entries": [{"pid": 1, "bbox": [x,y,w,h]}]}`
//! * poses: JSON Lines, `{"frame": 0, "poses": [{"id": 1, "keypoints": [[x,y,s] × 17]}]}`
//! * ring: `{"corners": [[x,y] × 4]}`
//! * config: a JSON object with any subset of [`PipelineConfig`] fields
//! * bouts: `{"segments": [{"start": 0, "end": 99, "kind": "bout"}]}`
//! * tracks: MOT CSV rows `frame,id,x,y,w,h,conf,-1,-1,-1`
//!
//! Reals are written rounded to six decimal places.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    BBox, BoutSegment, Detection, Keypoint, Keypoints, PipelineConfig, Point, RingGeometry,
};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord<T> {
    pub frame_index: u64,
    pub detections: Vec<Detection<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtEntry<T> {
    pub person_id: u64,
    pub bbox: BBox<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRecord<T> {
    pub frame_index: u64,
    pub entries: Vec<GtEntry<T>>,
}

/// One emitted `(frame, track id, box)` assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow<T> {
    pub frame_index: u64,
    pub id: u64,
    pub bbox: BBox<T>,
    pub confidence: T,
}

/// A globally identified pose in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRow<T> {
    pub frame_index: u64,
    pub id: u64,
    pub keypoints: Keypoints<T>,
}

pub(crate) fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Shortest decimal form of `v` rounded to six places (`3.000000` → `3`).
pub fn format_real(v: f64) -> String {
    let s = format!("{:.6}", round6(v));
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn format_confidence(v: f64) -> String {
    let s = format_real(v);
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

// ---------------------------------------------------------------------------
// wire structs

#[derive(Debug, Serialize, Deserialize)]
struct DetectionWire {
    bbox: [f64; 4],
    conf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keypoints: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameWire {
    frame: u64,
    #[serde(default)]
    detections: Vec<DetectionWire>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GtEntryWire {
    pid: u64,
    bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
struct GtFrameWire {
    frame: u64,
    #[serde(default)]
    entries: Vec<GtEntryWire>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseWire {
    id: u64,
    keypoints: Vec<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseFrameWire {
    frame: u64,
    #[serde(default)]
    poses: Vec<PoseWire>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RingWire {
    corners: [[f64; 2]; 4],
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentsWire {
    segments: Vec<BoutSegment>,
}

fn bbox_from_wire<T: Real>(b: [f64; 4]) -> BBox<T> {
    BBox::from_f64(b[0], b[1], b[2], b[3])
}

fn bbox_to_wire<T: Real>(b: &BBox<T>) -> [f64; 4] {
    [
        round6(b.x.as_f64()),
        round6(b.y.as_f64()),
        round6(b.w.as_f64()),
        round6(b.h.as_f64()),
    ]
}

fn keypoints_from_wire<T: Real>(kps: &[[f64; 3]]) -> std::result::Result<Keypoints<T>, String> {
    if kps.len() != crate::model::NUM_KEYPOINTS {
        return Err(format!(
            "expected {} keypoints, found {}",
            crate::model::NUM_KEYPOINTS,
            kps.len()
        ));
    }
    Ok(std::array::from_fn(|k| {
        let [x, y, s] = kps[k];
        Keypoint::new(T::lit(x), T::lit(y), T::lit(s))
    }))
}

fn keypoints_to_wire<T: Real>(kps: &Keypoints<T>) -> Vec<[f64; 3]> {
    kps.iter()
        .map(|k| {
            [
                round6(k.x.as_f64()),
                round6(k.y.as_f64()),
                round6(k.score.as_f64()),
            ]
        })
        .collect()
}

fn detection_from_wire<T: Real>(
    frame: u64,
    w: DetectionWire,
) -> std::result::Result<Detection<T>, String> {
    let keypoints = w
        .keypoints
        .as_deref()
        .map(keypoints_from_wire)
        .transpose()?;
    Ok(Detection {
        frame_index: frame,
        bbox: bbox_from_wire(w.bbox),
        confidence: T::lit(w.conf),
        embedding: w.embedding.map(|e| e.into_iter().map(T::lit).collect()),
        keypoints,
    })
}

fn detection_to_wire<T: Real>(d: &Detection<T>) -> DetectionWire {
    DetectionWire {
        bbox: bbox_to_wire(&d.bbox),
        conf: round6(d.confidence.as_f64()),
        embedding: d
            .embedding
            .as_ref()
            .map(|e| e.iter().map(|v| round6(v.as_f64())).collect()),
        keypoints: d.keypoints.as_ref().map(keypoints_to_wire),
    }
}

fn parse_err(line: usize, e: impl fmt::Display) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn write_json_line<W: Write, S: Serialize>(sink: &mut W, value: &S) -> Result<()> {
    serde_json::to_writer(&mut *sink, value).map_err(std::io::Error::from)?;
    sink.write_all(b"\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// detections

/// Streaming reader over a detections file; yields frames one at a time.
pub struct DetectionReader<R, T> {
    lines: std::io::Lines<R>,
    line_no: usize,
    last_frame: Option<u64>,
    embedding_dim: Option<usize>,
    _scalar: std::marker::PhantomData<T>,
}

impl<R: BufRead, T: Real> DetectionReader<R, T> {
    pub fn new(source: R) -> Self {
        Self {
            lines: source.lines(),
            line_no: 0,
            last_frame: None,
            embedding_dim: None,
            _scalar: std::marker::PhantomData,
        }
    }

    /// Embedding length declared by the first detection that carried one.
    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    fn parse_line(&mut self, text: &str) -> Result<FrameRecord<T>> {
        let line = self.line_no;
        let wire: FrameWire = serde_json::from_str(text).map_err(|e| parse_err(line, e))?;
        if let Some(prev) = self.last_frame {
            if wire.frame <= prev {
                return Err(Error::Ordering {
                    line,
                    frame: wire.frame,
                    previous: prev,
                });
            }
        }
        self.last_frame = Some(wire.frame);
        let mut detections = Vec::with_capacity(wire.detections.len());
        for d in wire.detections {
            if let Some(e) = &d.embedding {
                match self.embedding_dim {
                    None => self.embedding_dim = Some(e.len()),
                    Some(dim) if dim != e.len() => {
                        return Err(Error::Schema(format!(
                            "line {line}: embedding length {} differs from stream dimension {dim}",
                            e.len()
                        )))
                    }
                    _ => {}
                }
            }
            let det = detection_from_wire(wire.frame, d)
                .map_err(|m| Error::Schema(format!("line {line}: {m}")))?;
            detections.push(det);
        }
        Ok(FrameRecord {
            frame_index: wire.frame,
            detections,
        })
    }
}

impl<R: BufRead, T: Real> Iterator for DetectionReader<R, T> {
    type Item = Result<FrameRecord<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let text = match line {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            if text.trim().is_empty() {
                continue;
            }
            return Some(self.parse_line(&text));
        }
    }
}

/// Reads a whole detections file, stopping at the first error.
pub fn read_detections<T: Real, R: BufRead>(source: R) -> Result<Vec<FrameRecord<T>>> {
    DetectionReader::new(source).collect()
}

pub fn write_detections<T: Real, W: Write>(records: &[FrameRecord<T>], sink: &mut W) -> Result<()> {
    for r in records {
        let wire = FrameWire {
            frame: r.frame_index,
            detections: r.detections.iter().map(detection_to_wire).collect(),
        };
        write_json_line(sink, &wire)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// validation

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// 1-based line in the source file.
    pub line: usize,
    /// Index of the offending detection within its frame, if any.
    pub detection: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.detection {
            Some(d) => write!(f, "line {}, detection {}: {}", self.line, d, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    fn push(&mut self, line: usize, detection: Option<usize>, message: impl Into<String>) {
        self.violations.push(Violation {
            line,
            detection,
            message: message.into(),
        });
    }
}

/// Checks an in-memory stream; record `i` is reported as line `i + 1`.
pub fn validate_records<T: Real>(records: &[FrameRecord<T>]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut dim = None;
    let mut last = None;
    for (i, r) in records.iter().enumerate() {
        let line = i + 1;
        if let Some(prev) = last {
            if r.frame_index <= prev {
                report.push(
                    line,
                    None,
                    format!("frame {} does not follow frame {prev}", r.frame_index),
                );
            }
        }
        last = Some(r.frame_index);
        for (k, d) in r.detections.iter().enumerate() {
            check_detection(&mut report, line, k, d, &mut dim);
        }
    }
    report
}

fn check_detection<T: Real>(
    report: &mut ValidationReport,
    line: usize,
    k: usize,
    d: &Detection<T>,
    dim: &mut Option<usize>,
) {
    for m in d.violations() {
        report.push(line, Some(k), m);
    }
    if let Some(e) = &d.embedding {
        match *dim {
            None => *dim = Some(e.len()),
            Some(n) if n != e.len() => report.push(
                line,
                Some(k),
                format!(
                    "embedding length {} differs from stream dimension {n}",
                    e.len()
                ),
            ),
            _ => {}
        }
    }
}

/// Checks a detections file without stopping at the first problem.
pub fn validate_stream<R: BufRead>(source: R) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let mut dim = None;
    let mut last = None;
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let wire: FrameWire = match serde_json::from_str(&text) {
            Ok(w) => w,
            Err(e) => {
                report.push(line_no, None, format!("parse error: {e}"));
                continue;
            }
        };
        if let Some(prev) = last {
            if wire.frame <= prev {
                report.push(
                    line_no,
                    None,
                    format!("frame {} does not follow frame {prev}", wire.frame),
                );
            }
        }
        last = Some(wire.frame);
        for (k, dw) in wire.detections.into_iter().enumerate() {
            match detection_from_wire::<f64>(wire.frame, dw) {
                Ok(d) => check_detection(&mut report, line_no, k, &d, &mut dim),
                Err(m) => report.push(line_no, Some(k), m),
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// ground truth

pub fn read_ground_truth<T: Real, R: BufRead>(source: R) -> Result<Vec<GroundTruthRecord<T>>> {
    let mut out: Vec<GroundTruthRecord<T>> = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let wire: GtFrameWire = serde_json::from_str(&text).map_err(|e| parse_err(line_no, e))?;
        if let Some(prev) = out.last() {
            if wire.frame <= prev.frame_index {
                return Err(Error::Ordering {
                    line: line_no,
                    frame: wire.frame,
                    previous: prev.frame_index,
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for e in &wire.entries {
            if !seen.insert(e.pid) {
                return Err(Error::Schema(format!(
                    "line {line_no}: person id {} repeated in one frame",
                    e.pid
                )));
            }
        }
        out.push(GroundTruthRecord {
            frame_index: wire.frame,
            entries: wire
                .entries
                .into_iter()
                .map(|e| GtEntry {
                    person_id: e.pid,
                    bbox: bbox_from_wire(e.bbox),
                })
                .collect(),
        });
    }
    Ok(out)
}

pub fn write_ground_truth<T: Real, W: Write>(
    records: &[GroundTruthRecord<T>],
    sink: &mut W,
) -> Result<()> {
    for r in records {
        let wire = GtFrameWire {
            frame: r.frame_index,
            entries: r
                .entries
                .iter()
                .map(|e| GtEntryWire {
                    pid: e.person_id,
                    bbox: bbox_to_wire(&e.bbox),
                })
                .collect(),
        };
        write_json_line(sink, &wire)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// poses

pub fn read_poses<T: Real, R: BufRead>(source: R) -> Result<Vec<PoseRow<T>>> {
    let mut out = Vec::new();
    let mut last: Option<u64> = None;
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let wire: PoseFrameWire = serde_json::from_str(&text).map_err(|e| parse_err(line_no, e))?;
        if let Some(prev) = last {
            if wire.frame <= prev {
                return Err(Error::Ordering {
                    line: line_no,
                    frame: wire.frame,
                    previous: prev,
                });
            }
        }
        last = Some(wire.frame);
        for p in wire.poses {
            let keypoints = keypoints_from_wire(&p.keypoints)
                .map_err(|m| Error::Schema(format!("line {line_no}: {m}")))?;
            out.push(PoseRow {
                frame_index: wire.frame,
                id: p.id,
                keypoints,
            });
        }
    }
    Ok(out)
}

/// Writes pose rows grouped into one line per frame, frames ascending.
pub fn write_poses<T: Real, W: Write>(rows: &[PoseRow<T>], sink: &mut W) -> Result<()> {
    let mut sorted: Vec<&PoseRow<T>> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.frame_index, r.id));
    for chunk in sorted.chunk_by(|a, b| a.frame_index == b.frame_index) {
        let wire = PoseFrameWire {
            frame: chunk[0].frame_index,
            poses: chunk
                .iter()
                .map(|r| PoseWire {
                    id: r.id,
                    keypoints: keypoints_to_wire(&r.keypoints),
                })
                .collect(),
        };
        write_json_line(sink, &wire)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ring, config, segments

pub fn read_ring<T: Real, R: std::io::Read>(source: R) -> Result<RingGeometry<T>> {
    let wire: RingWire = serde_json::from_reader(source).map_err(|e| parse_err(e.line(), e))?;
    RingGeometry::new(wire.corners.map(|[x, y]| Point::from_f64(x, y)))
}

pub fn write_ring<T: Real, W: Write>(ring: &RingGeometry<T>, sink: &mut W) -> Result<()> {
    let wire = RingWire {
        corners: ring
            .corners()
            .map(|c| [round6(c.x.as_f64()), round6(c.y.as_f64())]),
    };
    write_json_line(sink, &wire)
}

/// Reads a config document; absent fields keep their defaults.
pub fn read_config<R: std::io::Read>(source: R) -> Result<PipelineConfig> {
    let cfg: PipelineConfig =
        serde_json::from_reader(source).map_err(|e| parse_err(e.line(), e))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_config<W: Write>(cfg: &PipelineConfig, sink: &mut W) -> Result<()> {
    serde_json::to_writer_pretty(&mut *sink, cfg).map_err(std::io::Error::from)?;
    sink.write_all(b"\n")?;
    Ok(())
}

pub fn read_segments<R: std::io::Read>(source: R) -> Result<Vec<BoutSegment>> {
    let wire: SegmentsWire = serde_json::from_reader(source).map_err(|e| parse_err(e.line(), e))?;
    Ok(wire.segments)
}

pub fn write_segments<W: Write>(segments: &[BoutSegment], sink: &mut W) -> Result<()> {
    write_json_line(
        sink,
        &SegmentsWire {
            segments: segments.to_vec(),
        },
    )
}

// ---------------------------------------------------------------------------
// tracks (MOT CSV)

/// Writes MOT-style rows sorted by `(frame, id)`.
pub fn write_tracks<T: Real, W: Write>(rows: &[TrackRow<T>], sink: &mut W) -> Result<()> {
    if let Some(r) = rows.iter().find(|r| r.id == 0) {
        return Err(Error::Schema(format!(
            "track id must be positive (frame {})",
            r.frame_index
        )));
    }
    let mut sorted: Vec<&TrackRow<T>> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.frame_index, r.id));
    for r in sorted {
        writeln!(
            sink,
            "{},{},{},{},{},{},{},-1,-1,-1",
            r.frame_index,
            r.id,
            format_real(r.bbox.x.as_f64()),
            format_real(r.bbox.y.as_f64()),
            format_real(r.bbox.w.as_f64()),
            format_real(r.bbox.h.as_f64()),
            format_confidence(r.confidence.as_f64()),
        )?;
    }
    Ok(())
}

pub fn read_tracks<T: Real, R: BufRead>(source: R) -> Result<Vec<TrackRow<T>>> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() < 7 {
            return Err(parse_err(
                line_no,
                format!("expected at least 7 fields, found {}", fields.len()),
            ));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| parse_err(line_no, e));
        let real = |s: &str| s.parse::<f64>().map_err(|e| parse_err(line_no, e));
        out.push(TrackRow {
            frame_index: int(fields[0])?,
            id: int(fields[1])?,
            bbox: BBox::from_f64(
                real(fields[2])?,
                real(fields[3])?,
                real(fields[4])?,
                real(fields[5])?,
            ),
            confidence: T::lit(real(fields[6])?),
        });
    }
    Ok(out)
}
