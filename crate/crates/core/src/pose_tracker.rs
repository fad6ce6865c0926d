//! Pose-based re-identification over short mini-bouts.
//!
//! A bout is cut into fixed-length mini-bouts. Inside each one, poses are
//! chained frame to frame by optimal matching on the mean distance between
//! shoulder and hip landmarks. The mini-bouts are then stitched left to
//! right: each mini-bout's tracks at its first frame are matched against the
//! previous mini-bout's tracks at its last frame with the same distance, and
//! matched tracks inherit the earlier global ID.

use std::ops::RangeInclusive;

use crate::assignment::{solve_gated, CostMatrix};
use crate::error::{Error, Result};
use crate::model::{coco, BBox, Keypoints, PipelineConfig};
use crate::scalar::Real;
use crate::stream_io::{FrameRecord, PoseRow, TrackRow};

/// Minimum keypoint score for a landmark to count as detected.
pub const LANDMARK_MIN_SCORE: f64 = 0.05;

/// How far from a mini-bout edge a track's sample may be and still stand in
/// for the edge frame.
pub const BOUNDARY_FALLBACK_FRAMES: u64 = 10;

/// Distance gate for pose association, in multiples of the proximity threshold.
pub const GATE_PROXIMITY_MULTIPLE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample<T> {
    pub frame_index: u64,
    pub keypoints: Keypoints<T>,
}

impl<T: Real> PoseSample<T> {
    pub fn new(frame_index: u64, keypoints: Keypoints<T>) -> Self {
        Self {
            frame_index,
            keypoints,
        }
    }

    pub fn is_valid(&self, k: usize) -> bool {
        self.keypoints[k].score >= T::lit(LANDMARK_MIN_SCORE)
    }

    /// Tight box around the valid keypoints, if it has positive area.
    pub fn bbox(&self) -> Option<BBox<T>> {
        let mut valid = self
            .keypoints
            .iter()
            .filter(|k| k.score >= T::lit(LANDMARK_MIN_SCORE));
        let first = valid.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
        for k in valid {
            x0 = x0.min(k.x);
            y0 = y0.min(k.y);
            x1 = x1.max(k.x);
            y1 = y1.max(k.y);
        }
        let b = BBox::new(x0, y0, x1 - x0, y1 - y0);
        (!b.is_degenerate()).then_some(b)
    }

    pub fn mean_valid_score(&self) -> T {
        let valid: Vec<T> = self
            .keypoints
            .iter()
            .map(|k| k.score)
            .filter(|&s| s >= T::lit(LANDMARK_MIN_SCORE))
            .collect();
        if valid.is_empty() {
            T::zero()
        } else {
            valid.iter().copied().sum::<T>() / T::from_count(valid.len())
        }
    }
}

/// All poses observed in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame<T> {
    pub frame_index: u64,
    pub poses: Vec<PoseSample<T>>,
}

/// Extracts the keypoint-carrying detections of each frame.
pub fn pose_frames<T: Real>(records: &[FrameRecord<T>]) -> Vec<PoseFrame<T>> {
    records
        .iter()
        .map(|r| PoseFrame {
            frame_index: r.frame_index,
            poses: r
                .detections
                .iter()
                .filter_map(|d| d.keypoints.map(|k| PoseSample::new(r.frame_index, k)))
                .collect(),
        })
        .collect()
}

/// Mean Euclidean distance over the shoulder/hip landmarks valid in both.
pub fn landmark_mean_distance<T: Real>(a: &PoseSample<T>, b: &PoseSample<T>) -> Result<T> {
    let mut sum = T::zero();
    let mut n = 0usize;
    for k in coco::TORSO {
        if a.is_valid(k) && b.is_valid(k) {
            sum = sum + a.keypoints[k].point().distance(b.keypoints[k].point());
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Incomparable);
    }
    Ok(sum / T::from_count(n))
}

/// Splits `frames` into consecutive chunks of `len` frames. A trailing
/// remainder of one frame joins the previous chunk.
pub fn partition_minibouts(
    frames: RangeInclusive<u64>,
    len: u64,
) -> Result<Vec<RangeInclusive<u64>>> {
    if len < 2 {
        return Err(Error::InvalidConfig(format!(
            "mini-bout length must be at least 2, got {len}"
        )));
    }
    let (start, end) = (*frames.start(), *frames.end());
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut s = start;
    loop {
        let remaining = end - s + 1;
        if remaining <= len {
            if remaining == 1 && !out.is_empty() {
                let prev: RangeInclusive<u64> = out.pop().expect("checked non-empty");
                out.push(*prev.start()..=end);
            } else {
                out.push(s..=end);
            }
            break;
        }
        out.push(s..=s + len - 1);
        s += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrack<T> {
    pub local_id: usize,
    pub samples: Vec<PoseSample<T>>,
}

impl<T: Real> LocalTrack<T> {
    fn last(&self) -> &PoseSample<T> {
        self.samples.last().expect("local tracks are never empty")
    }

    /// Latest sample no earlier than `edge - BOUNDARY_FALLBACK_FRAMES`.
    fn tail_sample(&self, edge: u64) -> Option<&PoseSample<T>> {
        let s = self.last();
        (s.frame_index + BOUNDARY_FALLBACK_FRAMES >= edge).then_some(s)
    }

    /// Earliest sample no later than `edge + BOUNDARY_FALLBACK_FRAMES`.
    fn head_sample(&self, edge: u64) -> Option<&PoseSample<T>> {
        let s = &self.samples[0];
        (s.frame_index <= edge + BOUNDARY_FALLBACK_FRAMES).then_some(s)
    }
}

/// Locally tracked poses of one mini-bout; local ids index `tracks`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBout<T> {
    pub range: RangeInclusive<u64>,
    pub tracks: Vec<LocalTrack<T>>,
}

fn distance_cost<T: Real>(
    a: &[&PoseSample<T>],
    b: &[&PoseSample<T>],
) -> (CostMatrix<T>, Vec<bool>) {
    let mut ok = Vec::with_capacity(a.len() * b.len());
    let cost = CostMatrix::from_fn(a.len(), b.len(), |i, j| {
        match landmark_mean_distance(a[i], b[j]) {
            Ok(d) => {
                ok.push(true);
                d
            }
            Err(_) => {
                ok.push(false);
                T::zero()
            }
        }
    });
    (cost, ok)
}

/// Chains poses frame to frame inside one mini-bout.
///
/// A track continues only from the immediately preceding frame; a pose that
/// finds no partner within `gate` starts a new local track.
pub fn track_minibout<T: Real>(
    range: RangeInclusive<u64>,
    frames: &[PoseFrame<T>],
    gate: T,
) -> MiniBout<T> {
    let mut tracks: Vec<LocalTrack<T>> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    for frame in frames.iter().filter(|f| range.contains(&f.frame_index)) {
        let prev: Vec<&PoseSample<T>> = active.iter().map(|&t| tracks[t].last()).collect();
        let cur: Vec<&PoseSample<T>> = frame.poses.iter().collect();
        let (cost, ok) = distance_cost(&prev, &cur);
        let cols = cur.len();
        let matches = solve_gated(&cost, |i, j| ok[i * cols + j] && cost.get(i, j) <= gate);
        let mut next_active = Vec::with_capacity(cur.len());
        let mut taken = vec![false; cur.len()];
        for (i, j) in matches {
            tracks[active[i]].samples.push(cur[j].clone());
            taken[j] = true;
            next_active.push(active[i]);
        }
        for (j, pose) in cur.iter().enumerate() {
            if !taken[j] {
                let id = tracks.len();
                tracks.push(LocalTrack {
                    local_id: id,
                    samples: vec![(*pose).clone()],
                });
                next_active.push(id);
            }
        }
        active = next_active;
    }
    MiniBout { range, tracks }
}

/// Optimal one-to-one matching on a boundary distance matrix, restricted
/// to finite entries within `gate`.
pub fn integration_matching<T: Real>(distances: &CostMatrix<T>, gate: T) -> Vec<(usize, usize)> {
    solve_gated(distances, |i, j| {
        let d = distances.get(i, j);
        d.is_finite() && d <= gate
    })
}

/// Maps every local track of `next` to a global ID.
///
/// `prev_global[i]` is the global ID of `prev`'s local track `i`. Tracks of
/// `next` that cannot be matched get fresh IDs drawn from `next_fresh`.
pub fn integrate_minibouts<T: Real>(
    prev: &MiniBout<T>,
    prev_global: &[u64],
    next: &MiniBout<T>,
    gate: T,
    next_fresh: &mut u64,
) -> Vec<u64> {
    let prev_edge = *prev.range.end();
    let next_edge = *next.range.start();
    let prev_cand: Vec<(usize, &PoseSample<T>)> = prev
        .tracks
        .iter()
        .filter_map(|t| t.tail_sample(prev_edge).map(|s| (t.local_id, s)))
        .collect();
    let next_cand: Vec<(usize, &PoseSample<T>)> = next
        .tracks
        .iter()
        .filter_map(|t| t.head_sample(next_edge).map(|s| (t.local_id, s)))
        .collect();

    let distances = CostMatrix::from_fn(prev_cand.len(), next_cand.len(), |i, j| {
        landmark_mean_distance(prev_cand[i].1, next_cand[j].1).unwrap_or(T::infinity())
    });
    let mut global = vec![0u64; next.tracks.len()];
    for (i, j) in integration_matching(&distances, gate) {
        global[next_cand[j].0] = prev_global[prev_cand[i].0];
    }
    for g in global.iter_mut().filter(|g| **g == 0) {
        *g = *next_fresh;
        *next_fresh += 1;
    }
    global
}

/// Tracks every pose of a bout with continuous global IDs.
///
/// Rows are ordered by frame, then global ID.
pub fn run_pose_tracking<T: Real>(
    bout: &[PoseFrame<T>],
    cfg: &PipelineConfig,
) -> Result<Vec<PoseRow<T>>> {
    cfg.validate()?;
    let (Some(first), Some(last)) = (bout.first(), bout.last()) else {
        return Ok(Vec::new());
    };
    if bout
        .windows(2)
        .any(|w| w[1].frame_index <= w[0].frame_index)
    {
        return Err(Error::Ordering {
            line: 0,
            frame: last.frame_index,
            previous: first.frame_index,
        });
    }
    let gate = T::lit(GATE_PROXIMITY_MULTIPLE * cfg.proximity_threshold_px);
    let ranges = partition_minibouts(
        first.frame_index..=last.frame_index,
        cfg.minibout_len_frames,
    )?;
    let minibouts: Vec<MiniBout<T>> = ranges
        .into_iter()
        .map(|r| track_minibout(r, bout, gate))
        .collect();

    let mut rows = Vec::new();
    let mut fresh = 1u64;
    let mut prev: Option<(&MiniBout<T>, Vec<u64>)> = None;
    for mb in &minibouts {
        let ids: Vec<u64> = match &prev {
            None => mb
                .tracks
                .iter()
                .map(|_| {
                    fresh += 1;
                    fresh - 1
                })
                .collect(),
            Some((p, p_ids)) => integrate_minibouts(p, p_ids, mb, gate, &mut fresh),
        };
        for t in &mb.tracks {
            for s in &t.samples {
                rows.push(PoseRow {
                    frame_index: s.frame_index,
                    id: ids[t.local_id],
                    keypoints: s.keypoints,
                });
            }
        }
        prev = Some((mb, ids));
    }
    rows.sort_by_key(|r| (r.frame_index, r.id));
    Ok(rows)
}

/// Converts pose rows into MOT rows using each pose's keypoint box.
pub fn pose_rows_to_tracks<T: Real>(rows: &[PoseRow<T>]) -> Vec<TrackRow<T>> {
    rows.iter()
        .filter_map(|r| {
            let sample = PoseSample::new(r.frame_index, r.keypoints);
            sample.bbox().map(|bbox| TrackRow {
                frame_index: r.frame_index,
                id: r.id,
                bbox,
                confidence: sample.mean_valid_score(),
            })
        })
        .collect()
}
