//! Identity metrics, bout-boundary accuracy and the two trait analytics:
//! ring-occupancy hotspots and line of sight.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assignment::{min_cost_assignment, solve_gated, CostMatrix};
use crate::error::{Error, Result};
use crate::model::{
    centroid, coco, inside_ring, BBox, BoutSegment, Centroid, Point, RingGeometry, SegmentKind,
};
use crate::pose_tracker::PoseSample;
use crate::scalar::Real;
use crate::stream_io::{format_real, GroundTruthRecord, PoseRow, TrackRow};

/// Counts of identity-continuity errors against ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMetrics {
    pub idu: u64,
    pub ids: u64,
}

impl IdMetrics {
    pub fn total(&self) -> u64 {
        self.idu + self.ids
    }
}

impl std::ops::Add for IdMetrics {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            idu: self.idu + rhs.idu,
            ids: self.ids + rhs.ids,
        }
    }
}

impl std::iter::Sum for IdMetrics {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// Contents of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub idu: u64,
    pub ids: u64,
    pub transition_accuracy: Option<f64>,
}

impl EvalReport {
    pub fn write<W: Write>(&self, sink: &mut W) -> Result<()> {
        serde_json::to_writer(&mut *sink, self).map_err(|e| Error::Schema(e.to_string()))?;
        writeln!(sink)?;
        Ok(())
    }
}

/// One-to-one matching of predicted boxes to ground-truth persons that
/// maximises total IoU over pairs with IoU at least `iou_min`.
///
/// Returns `(predicted id, person id)` pairs in prediction order.
pub fn match_to_gt<T: Real>(
    pred: &[(u64, BBox<T>)],
    gt: &GroundTruthRecord<T>,
    iou_min: T,
) -> Vec<(u64, u64)> {
    let iou = CostMatrix::from_fn(pred.len(), gt.entries.len(), |i, j| {
        pred[i].1.iou(&gt.entries[j].bbox)
    });
    // Forbidden pairs cost as much as leaving both sides unmatched.
    let cost = iou.map(|v| if v >= iou_min { T::one() - v } else { T::one() });
    min_cost_assignment(&cost)
        .into_iter()
        .filter(|&(i, j)| iou.get(i, j) >= iou_min)
        .map(|(i, j)| (pred[i].0, gt.entries[j].person_id))
        .collect()
}

/// Counts ID updation and ID switching events over one bout.
///
/// Prediction rows are grouped by frame and keep their relative order.
pub fn count_id_events<T: Real>(
    pred: &[TrackRow<T>],
    gt: &[GroundTruthRecord<T>],
    iou_min: T,
) -> IdMetrics {
    let mut by_frame: HashMap<u64, Vec<(u64, BBox<T>)>> = HashMap::new();
    for r in pred {
        by_frame
            .entry(r.frame_index)
            .or_default()
            .push((r.id, r.bbox));
    }
    let mut frames: Vec<&GroundTruthRecord<T>> = gt.iter().collect();
    frames.sort_by_key(|g| g.frame_index);

    let mut metrics = IdMetrics::default();
    let mut current: HashMap<u64, u64> = HashMap::new();
    let mut owners: HashMap<u64, HashSet<u64>> = HashMap::new();
    for g in frames {
        let Some(preds) = by_frame.get(&g.frame_index) else {
            continue;
        };
        let matches = match_to_gt(preds, g, iou_min);
        for &(id, person) in &matches {
            if let Some(prev) = current.insert(person, id) {
                if prev != id {
                    let stolen = owners
                        .get(&id)
                        .is_some_and(|o| o.iter().any(|&p| p != person));
                    if stolen {
                        metrics.ids += 1;
                    } else {
                        metrics.idu += 1;
                    }
                }
            }
        }
        for (id, person) in matches {
            owners.entry(id).or_default().insert(person);
        }
    }
    metrics
}

/// Fraction of ground-truth bouts recovered by some predicted bout whose
/// start and end both lie within `tol_s * fps` frames.
///
/// Each predicted bout recovers at most one ground-truth bout; the pairing
/// recovers as many as possible.
pub fn transition_accuracy(
    pred: &[BoutSegment],
    gt: &[BoutSegment],
    tol_s: f64,
    fps: f64,
) -> Result<f64> {
    if !(tol_s > 0.0 && fps > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tolerance and fps must be positive, got {tol_s} and {fps}"
        )));
    }
    let bouts = |s: &[BoutSegment]| -> Vec<BoutSegment> {
        let mut v: Vec<BoutSegment> = s
            .iter()
            .copied()
            .filter(|b| b.kind == SegmentKind::Bout)
            .collect();
        v.sort_by_key(|b| b.start_frame);
        v
    };
    let (gt, pred) = (bouts(gt), bouts(pred));
    if gt.is_empty() {
        return Err(Error::UndefinedMetric("ground truth has no bouts".into()));
    }
    let tol = tol_s * fps;
    let dev = |g: &BoutSegment, p: &BoutSegment| {
        (g.start_frame.abs_diff(p.start_frame) as f64).max(g.end_frame.abs_diff(p.end_frame) as f64)
    };
    let cost = CostMatrix::<f64>::from_fn(gt.len(), pred.len(), |i, j| dev(&gt[i], &pred[j]));
    let recovered = solve_gated(&cost, |i, j| cost.get(i, j) <= tol).len();
    Ok(recovered as f64 / gt.len() as f64)
}

/// Ring-occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    counts: Vec<u64>,
}

impl Heatmap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            counts: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Raw centroid count of cell `(col, row)`.
    pub fn count(&self, col: usize, row: usize) -> u64 {
        self.counts[row * self.width + col]
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts scaled so the busiest cell is 1; row-major.
    pub fn cells(&self) -> Vec<f64> {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        if max == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|&c| c as f64 / max as f64).collect()
    }

    pub fn cell(&self, col: usize, row: usize) -> f64 {
        self.cells()[row * self.width + col]
    }

    /// Plain (P2) grayscale image, one pixel per cell.
    pub fn write_pgm<W: Write>(&self, sink: &mut W) -> Result<()> {
        writeln!(sink, "P2")?;
        writeln!(sink, "{} {}", self.width, self.height)?;
        writeln!(sink, "255")?;
        let cells = self.cells();
        for row in cells.chunks(self.width) {
            let line: Vec<String> = row
                .iter()
                .map(|c| ((c * 255.0).round() as u8).to_string())
                .collect();
            writeln!(sink, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Accumulates in-ring centroids on a `grid` laid over the ring's bounding box.
pub fn hotspot<T: Real>(
    centroids: impl IntoIterator<Item = Centroid<T>>,
    ring: &RingGeometry<T>,
    grid: (usize, usize),
) -> Result<Heatmap> {
    let (gw, gh) = grid;
    if gw == 0 || gh == 0 {
        return Err(Error::InvalidConfig(
            "hotspot grid dimensions must be positive".into(),
        ));
    }
    let (lo, hi) = ring.bounds();
    let span_x = (hi.x - lo.x).as_f64();
    let span_y = (hi.y - lo.y).as_f64();
    let cell = |v: f64, span: f64, n: usize| {
        (((v / span) * n as f64).floor().max(0.0) as usize).min(n - 1)
    };
    let mut map = Heatmap::new(gw, gh);
    for c in centroids {
        if !inside_ring(c, ring) {
            continue;
        }
        let col = cell((c.x - lo.x).as_f64(), span_x, gw);
        let row = cell((c.y - lo.y).as_f64(), span_y, gh);
        map.counts[row * gw + col] += 1;
    }
    Ok(map)
}

/// Box centres of every track row with a usable box.
pub fn track_centroids<T: Real>(rows: &[TrackRow<T>]) -> Vec<Centroid<T>> {
    rows.iter().filter_map(|r| centroid(&r.bbox).ok()).collect()
}

fn unit<T: Real>(v: Point<T>) -> Option<Point<T>> {
    let n = v.x.hypot(v.y);
    (n > T::zero() && n.is_finite()).then(|| Point::new(v.x / n, v.y / n))
}

fn dot<T: Real>(a: Point<T>, b: Point<T>) -> T {
    a.x * b.x + a.y * b.y
}

/// Top-view facing direction: the unit normal of the left→right shoulder
/// segment.
///
/// The sign is chosen to point toward the nose when it is visible, otherwise
/// along `velocity`, otherwise along `prev_los`. Without any usable reference
/// the normal `(-dy, dx)` is kept.
pub fn line_of_sight<T: Real>(
    pose: &PoseSample<T>,
    prev_los: Option<Point<T>>,
    velocity: Option<Point<T>>,
) -> Result<Point<T>> {
    if !(pose.is_valid(coco::LEFT_SHOULDER) && pose.is_valid(coco::RIGHT_SHOULDER)) {
        return Err(Error::DegeneratePose(
            "shoulder landmarks are not visible".into(),
        ));
    }
    let l = pose.keypoints[coco::LEFT_SHOULDER].point();
    let r = pose.keypoints[coco::RIGHT_SHOULDER].point();
    let normal = unit(Point::new(l.y - r.y, r.x - l.x))
        .ok_or_else(|| Error::DegeneratePose("shoulder landmarks coincide".into()))?;

    let half = T::lit(0.5);
    let nose = pose.is_valid(coco::NOSE).then(|| {
        let n = pose.keypoints[coco::NOSE].point();
        Point::new(n.x - (l.x + r.x) * half, n.y - (l.y + r.y) * half)
    });
    for reference in [nose, velocity, prev_los].into_iter().flatten() {
        let d = dot(normal, reference);
        if d > T::zero() {
            return Ok(normal);
        }
        if d < T::zero() {
            return Ok(Point::new(-normal.x, -normal.y));
        }
    }
    Ok(normal)
}

/// One line of the line-of-sight file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosRow<T> {
    pub frame_index: u64,
    pub id: u64,
    pub direction: Point<T>,
}

/// Line of sight for every pose, following each ID through time.
///
/// Velocity is the displacement of the shoulder midpoint since the ID's
/// previous pose. A degenerate pose repeats the last direction, or is skipped
/// when there is none yet.
pub fn los_series<T: Real>(rows: &[PoseRow<T>]) -> Vec<LosRow<T>> {
    let mut per_id: BTreeMap<u64, Vec<&PoseRow<T>>> = BTreeMap::new();
    for r in rows {
        per_id.entry(r.id).or_default().push(r);
    }
    let mut out = Vec::new();
    for (id, mut poses) in per_id {
        poses.sort_by_key(|p| p.frame_index);
        let mut last: Option<Point<T>> = None;
        let mut prev_mid: Option<Point<T>> = None;
        for p in poses {
            let sample = PoseSample::new(p.frame_index, p.keypoints);
            let mid = (sample.is_valid(coco::LEFT_SHOULDER)
                && sample.is_valid(coco::RIGHT_SHOULDER))
            .then(|| {
                let (l, r) = (
                    p.keypoints[coco::LEFT_SHOULDER],
                    p.keypoints[coco::RIGHT_SHOULDER],
                );
                Point::new((l.x + r.x) * T::lit(0.5), (l.y + r.y) * T::lit(0.5))
            });
            let velocity = mid
                .zip(prev_mid)
                .map(|(m, q)| Point::new(m.x - q.x, m.y - q.y));
            let direction = line_of_sight(&sample, last, velocity).ok().or(last);
            if let Some(d) = direction {
                out.push(LosRow {
                    frame_index: p.frame_index,
                    id,
                    direction: d,
                });
                last = Some(d);
            }
            if mid.is_some() {
                prev_mid = mid;
            }
        }
    }
    out.sort_by_key(|r| (r.frame_index, r.id));
    out
}

pub fn write_los<T: Real, W: Write>(rows: &[LosRow<T>], sink: &mut W) -> Result<()> {
    writeln!(sink, "frame,id,ux,uy")?;
    for r in rows {
        writeln!(
            sink,
            "{},{},{},{}",
            r.frame_index,
            r.id,
            format_real(r.direction.x.as_f64()),
            format_real(r.direction.y.as_f64())
        )?;
    }
    Ok(())
}
