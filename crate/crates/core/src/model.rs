//! Domain types shared across the pipeline and the elementary geometry behind
//! the rope-crossing cue and the in-ring filter.
//!
//! Coordinates are image pixels: x grows right, y grows down. Bounding boxes
//! are anchored at their top-left corner, `(x, y, w, h)`, matching the MOT
//! interchange format.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Number of body landmarks per pose (COCO ordering).
pub const NUM_KEYPOINTS: usize = 17;

pub mod coco {
    pub const NOSE: usize = 0;
    pub const LEFT_SHOULDER: usize = 5;
    pub const RIGHT_SHOULDER: usize = 6;
    pub const LEFT_HIP: usize = 11;
    pub const RIGHT_HIP: usize = 12;

    /// Landmarks used to correlate poses across frames and mini-bouts.
    pub const TORSO: [usize; 4] = [LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP, RIGHT_HIP];
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn from_f64(x: f64, y: f64) -> Self {
        Self::new(T::lit(x), T::lit(y))
    }

    pub fn distance(self, other: Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn offset(self, dx: T, dy: T) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

/// Box centre; the boxer's position `(B_x, B_y)` for every ring cue.
pub type Centroid<T> = Point<T>;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Real> BBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_f64(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(T::lit(x), T::lit(y), T::lit(w), T::lit(h))
    }

    /// Box of size `w × h` centred on `c`.
    pub fn centered(c: Point<T>, w: T, h: T) -> Self {
        let half = T::lit(0.5);
        Self::new(c.x - w * half, c.y - h * half, w, h)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.w > T::zero() && self.h > T::zero())
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn iou(&self, other: &Self) -> T {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= T::zero() || iy <= T::zero() {
            return T::zero();
        }
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= T::zero() {
            T::zero()
        } else {
            inter / union
        }
    }

    pub fn translated(&self, dx: T, dy: T) -> Self {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }
}

/// Centre of a bounding box.
pub fn centroid<T: Real>(bbox: &BBox<T>) -> Result<Centroid<T>> {
    if bbox.is_degenerate() {
        return Err(Error::InvalidGeometry(format!(
            "bbox with non-positive size ({}, {})",
            bbox.w, bbox.h
        )));
    }
    let half = T::lit(0.5);
    Ok(Point::new(bbox.x + bbox.w * half, bbox.y + bbox.h * half))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Keypoint<T> {
    pub x: T,
    pub y: T,
    pub score: T,
}

impl<T: Real> Keypoint<T> {
    pub fn new(x: T, y: T, score: T) -> Self {
        Self { x, y, score }
    }

    pub fn point(&self) -> Point<T> {
        Point::new(self.x, self.y)
    }
}

pub type Keypoints<T> = [Keypoint<T>; NUM_KEYPOINTS];

/// One person observed by the detector in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub frame_index: u64,
    pub bbox: BBox<T>,
    pub confidence: T,
    pub embedding: Option<Vec<T>>,
    pub keypoints: Option<Keypoints<T>>,
}

impl<T: Real> Detection<T> {
    pub fn new(frame_index: u64, bbox: BBox<T>, confidence: T) -> Self {
        Self {
            frame_index,
            bbox,
            confidence,
            embedding: None,
            keypoints: None,
        }
    }

    pub fn with_embedding(mut self, embedding: Vec<T>) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn with_keypoints(mut self, keypoints: Keypoints<T>) -> Self {
        self.keypoints = Some(keypoints);
        self
    }

    pub fn centroid(&self) -> Result<Centroid<T>> {
        centroid(&self.bbox)
    }

    /// Human-readable descriptions of every invariant this detection breaks.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.bbox.w > T::zero()) {
            out.push(format!("bbox width {} is not positive", self.bbox.w));
        }
        if !(self.bbox.h > T::zero()) {
            out.push(format!("bbox height {} is not positive", self.bbox.h));
        }
        if !(self.confidence >= T::zero() && self.confidence <= T::one()) {
            out.push(format!("confidence {} outside [0, 1]", self.confidence));
        }
        if let Some(kps) = &self.keypoints {
            for (k, kp) in kps.iter().enumerate() {
                if !(kp.score >= T::zero() && kp.score <= T::one()) {
                    out.push(format!("keypoint {k} score {} outside [0, 1]", kp.score));
                }
            }
        }
        out
    }
}

/// A straight segment between two points; the rope lines are instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment<T> {
    pub a: Point<T>,
    pub b: Point<T>,
}

impl<T: Real> LineSegment<T> {
    pub fn new(a: Point<T>, b: Point<T>) -> Self {
        Self { a, b }
    }
}

/// Signed doubled area of the triangle (a, b, c).
#[inline]
pub(crate) fn orient<T: Real>(a: Point<T>, b: Point<T>, c: Point<T>) -> T {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

#[inline]
fn sign<T: Real>(v: T) -> i8 {
    if v > T::zero() {
        1
    } else if v < T::zero() {
        -1
    } else {
        0
    }
}

fn on_segment<T: Real>(p: Point<T>, seg: &LineSegment<T>) -> bool {
    orient(seg.a, seg.b, p) == T::zero()
        && p.x >= seg.a.x.min(seg.b.x)
        && p.x <= seg.a.x.max(seg.b.x)
        && p.y >= seg.a.y.min(seg.b.y)
        && p.y <= seg.a.y.max(seg.b.y)
}

/// Whether the motion `prev → cur` crosses `line`.
///
/// True on a proper intersection of the two segments, or when either motion
/// endpoint lies exactly on the line (a centroid standing on the rope).
pub fn crosses_line<T: Real>(prev: Point<T>, cur: Point<T>, line: &LineSegment<T>) -> Result<bool> {
    if line.a == line.b {
        return Err(Error::InvalidGeometry(
            "virtual line has coincident endpoints".into(),
        ));
    }
    if on_segment(prev, line) || on_segment(cur, line) {
        return Ok(true);
    }
    let o1 = sign(orient(line.a, line.b, prev));
    let o2 = sign(orient(line.a, line.b, cur));
    let o3 = sign(orient(prev, cur, line.a));
    let o4 = sign(orient(prev, cur, line.b));
    Ok(o1 * o2 < 0 && o3 * o4 < 0)
}

/// The ring as seen from above: a convex quadrilateral whose edges carry the
/// four virtual rope lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RingGeometry<T> {
    corners: [Point<T>; 4],
    virtual_lines: [LineSegment<T>; 4],
}

impl<T: Real> RingGeometry<T> {
    /// Builds a ring from four corners listed in order around the ring.
    ///
    /// Clockwise order (in image coordinates) is the convention; the reverse
    /// winding is accepted as well. Non-convex, self-intersecting or
    /// collinear corner sets are rejected.
    pub fn new(corners: [Point<T>; 4]) -> Result<Self> {
        if corners.iter().any(|c| !c.x.is_finite() || !c.y.is_finite()) {
            return Err(Error::InvalidGeometry("ring corner is not finite".into()));
        }
        let turns: Vec<i8> = (0..4)
            .map(|i| {
                sign(orient(
                    corners[i],
                    corners[(i + 1) % 4],
                    corners[(i + 2) % 4],
                ))
            })
            .collect();
        let all_pos = turns.iter().all(|&s| s > 0);
        let all_neg = turns.iter().all(|&s| s < 0);
        if !(all_pos || all_neg) {
            return Err(Error::InvalidGeometry(
                "ring corners must form a convex, non-degenerate quadrilateral".into(),
            ));
        }
        let virtual_lines =
            std::array::from_fn(|i| LineSegment::new(corners[i], corners[(i + 1) % 4]));
        Ok(Self {
            corners,
            virtual_lines,
        })
    }

    /// Axis-aligned square ring with top-left corner `(x0, y0)` and side `side`.
    pub fn square(x0: T, y0: T, side: T) -> Result<Self> {
        Self::new([
            Point::new(x0, y0),
            Point::new(x0 + side, y0),
            Point::new(x0 + side, y0 + side),
            Point::new(x0, y0 + side),
        ])
    }

    pub fn corners(&self) -> &[Point<T>; 4] {
        &self.corners
    }

    pub fn virtual_lines(&self) -> &[LineSegment<T>; 4] {
        &self.virtual_lines
    }

    /// Axis-aligned bounding box of the ring as (min corner, max corner).
    pub fn bounds(&self) -> (Point<T>, Point<T>) {
        let mut lo = self.corners[0];
        let mut hi = self.corners[0];
        for c in &self.corners[1..] {
            lo = Point::new(lo.x.min(c.x), lo.y.min(c.y));
            hi = Point::new(hi.x.max(c.x), hi.y.max(c.y));
        }
        (lo, hi)
    }

    pub fn area(&self) -> T {
        let mut twice = T::zero();
        for i in 0..4 {
            let (a, b) = (self.corners[i], self.corners[(i + 1) % 4]);
            twice = twice + a.x * b.y - b.x * a.y;
        }
        (twice * T::lit(0.5)).abs()
    }
}

/// Whether `p` lies inside the ring or on its boundary.
///
/// Detections failing this test are the "peripheral" people that the
/// in-ring cues ignore.
pub fn inside_ring<T: Real>(p: Point<T>, ring: &RingGeometry<T>) -> bool {
    let mut seen_pos = false;
    let mut seen_neg = false;
    for line in ring.virtual_lines() {
        match sign(orient(line.a, line.b, p)) {
            1 => seen_pos = true,
            -1 => seen_neg = true,
            _ => {}
        }
    }
    !(seen_pos && seen_neg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Bout,
    Rest,
}

/// A contiguous run of frames, `start_frame..=end_frame`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoutSegment {
    #[serde(rename = "start")]
    pub start_frame: u64,
    #[serde(rename = "end")]
    pub end_frame: u64,
    pub kind: SegmentKind,
}

impl BoutSegment {
    pub fn new(start_frame: u64, end_frame: u64, kind: SegmentKind) -> Self {
        Self {
            start_frame,
            end_frame,
            kind,
        }
    }

    pub fn contains(&self, frame: u64) -> bool {
        frame >= self.start_frame && frame <= self.end_frame
    }

    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Checks ordering, non-overlap, `start < end` and kind alternation.
pub fn check_segments(segments: &[BoutSegment]) -> Result<()> {
    for (i, s) in segments.iter().enumerate() {
        if s.start_frame >= s.end_frame {
            return Err(Error::Schema(format!(
                "segment {i} has start {} >= end {}",
                s.start_frame, s.end_frame
            )));
        }
        if i > 0 {
            let prev = &segments[i - 1];
            if s.start_frame <= prev.end_frame {
                return Err(Error::Schema(format!(
                    "segment {i} overlaps or precedes segment {}",
                    i - 1
                )));
            }
            if s.kind == prev.kind {
                return Err(Error::Schema(format!(
                    "segments {} and {i} do not alternate in kind",
                    i - 1
                )));
            }
        }
    }
    Ok(())
}

/// Tunables for the whole pipeline. Defaults reproduce the recorded sessions:
/// 70 FPS video, two-minute bouts with one-minute rests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fps: f64,
    pub bout_duration_s: f64,
    pub rest_duration_s: f64,
    /// Boxers closer than this (inclusive) are "in close proximity".
    pub proximity_threshold_px: f64,
    /// In-ring head count during a bout: two boxers and the referee.
    pub expected_in_ring_count: usize,
    /// Weight of the positional cost in the descriptor tracker's blend.
    pub lambda: f64,
    pub max_track_age_frames: u64,
    pub minibout_len_frames: u64,
    pub vote_min: usize,
    pub boundary_refractory_s: f64,
    pub cue_window_frames: usize,
    pub gate_threshold: f64,
    pub gt_iou_threshold: f64,
    pub hotspot_grid: (usize, usize),
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fps: 70.0,
            bout_duration_s: 120.0,
            rest_duration_s: 60.0,
            proximity_threshold_px: 40.0,
            expected_in_ring_count: 3,
            lambda: 0.8,
            max_track_age_frames: 10_000,
            minibout_len_frames: 120,
            vote_min: 2,
            boundary_refractory_s: 60.0,
            cue_window_frames: 70,
            gate_threshold: 1.0,
            gt_iou_threshold: 0.5,
            hotspot_grid: (32, 32),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fps", self.fps),
            ("bout_duration_s", self.bout_duration_s),
            ("rest_duration_s", self.rest_duration_s),
            ("proximity_threshold_px", self.proximity_threshold_px),
            ("boundary_refractory_s", self.boundary_refractory_s),
            ("gt_iou_threshold", self.gt_iou_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.gate_threshold > 0.0 && self.gate_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gate_threshold must lie in (0, 1], got {}",
                self.gate_threshold
            )));
        }
        if self.gt_iou_threshold > 1.0 {
            return Err(Error::InvalidConfig(
                "gt_iou_threshold must not exceed 1".into(),
            ));
        }
        if !(1..=3).contains(&self.vote_min) {
            return Err(Error::InvalidConfig(format!(
                "vote_min must be 1, 2 or 3, got {}",
                self.vote_min
            )));
        }
        if self.expected_in_ring_count == 0
            || self.max_track_age_frames == 0
            || self.cue_window_frames == 0
            || self.hotspot_grid.0 == 0
            || self.hotspot_grid.1 == 0
        {
            return Err(Error::InvalidConfig(
                "counts and grid dimensions must be positive".into(),
            ));
        }
        if self.minibout_len_frames < 2 {
            return Err(Error::InvalidConfig(
                "minibout_len_frames must be at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Minimum spacing between two transition events, in frames.
    pub fn refractory_frames(&self) -> u64 {
        ((self.boundary_refractory_s * self.fps).round() as u64).max(2)
    }
}
