//! Tracking-by-detection with a blended positional/appearance cost.
//!
//! Both raw cost matrices (Euclidean centroid distance and Euclidean
//! embedding distance) are min-max normalised before blending, so neither
//! term dominates just because its units are larger. The blend weight
//! `lambda` favours position, which keeps identities stable when both boxers
//! wear the same kit.

use crate::assignment::solve_gated;
pub use crate::assignment::CostMatrix;
use crate::error::{Error, Result};
use crate::model::{Centroid, Detection, PipelineConfig, Point};
use crate::scalar::Real;
use crate::stream_io::{FrameRecord, TrackRow};

/// Consecutive matched frames before a tentative track gets an ID.
pub const CONFIRM_HITS: u32 = 3;

/// Weight of the newest displacement in the velocity estimate.
pub const VELOCITY_SMOOTHING: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Tentative,
    Confirmed,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track<T> {
    /// Assigned on confirmation; tentative tracks have none.
    pub id: Option<u64>,
    pub state: TrackState,
    pub position: Centroid<T>,
    /// Pixels per frame.
    pub velocity: Point<T>,
    /// Running mean of the matched embeddings.
    pub appearance: Option<Vec<T>>,
    pub last_seen: u64,
    pub age_since_seen: u64,
    pub hits: u64,
    consecutive_hits: u32,
    appearance_samples: usize,
}

impl<T: Real> Track<T> {
    /// A fresh tentative track seeded from one detection.
    pub fn spawn(det: &Detection<T>) -> Result<Self> {
        Ok(Self {
            id: None,
            state: TrackState::Tentative,
            position: det.centroid()?,
            velocity: Point::default(),
            appearance: det.embedding.clone(),
            last_seen: det.frame_index,
            age_since_seen: 0,
            hits: 1,
            consecutive_hits: 1,
            appearance_samples: usize::from(det.embedding.is_some()),
        })
    }

    /// A track at `position` moving with `velocity`, for tests and replays.
    pub fn at(position: Centroid<T>, velocity: Point<T>) -> Self {
        Self {
            id: None,
            state: TrackState::Confirmed,
            position,
            velocity,
            appearance: None,
            last_seen: 0,
            age_since_seen: 0,
            hits: 1,
            consecutive_hits: 1,
            appearance_samples: 0,
        }
    }

    pub fn with_appearance(mut self, embedding: Vec<T>) -> Self {
        self.appearance = Some(embedding);
        self.appearance_samples = 1;
        self
    }

    fn absorb(&mut self, det: &Detection<T>, centroid: Centroid<T>) {
        let elapsed = T::from_u64(det.frame_index.saturating_sub(self.last_seen).max(1))
            .unwrap_or_else(T::one);
        let alpha = T::lit(VELOCITY_SMOOTHING);
        let measured = Point::new(
            (centroid.x - self.position.x) / elapsed,
            (centroid.y - self.position.y) / elapsed,
        );
        self.velocity = Point::new(
            alpha * measured.x + (T::one() - alpha) * self.velocity.x,
            alpha * measured.y + (T::one() - alpha) * self.velocity.y,
        );
        self.position = centroid;
        if let Some(e) = &det.embedding {
            match &mut self.appearance {
                Some(mean) if mean.len() == e.len() => {
                    self.appearance_samples += 1;
                    let n = T::from_count(self.appearance_samples);
                    for (m, &v) in mean.iter_mut().zip(e) {
                        *m = *m + (v - *m) / n;
                    }
                }
                _ => {
                    self.appearance = Some(e.clone());
                    self.appearance_samples = 1;
                }
            }
        }
        self.last_seen = det.frame_index;
        self.age_since_seen = 0;
        self.hits += 1;
        self.consecutive_hits += 1;
    }

    fn miss(&mut self, frame: u64) {
        self.age_since_seen = frame.saturating_sub(self.last_seen);
        self.consecutive_hits = 0;
        // A lost track waits where it was last seen.
        self.velocity = Point::default();
        if self.state == TrackState::Confirmed {
            self.state = TrackState::Lost;
        }
    }
}

/// One-frame constant-velocity extrapolation.
pub fn predict<T: Real>(track: &Track<T>) -> Centroid<T> {
    track.position.offset(track.velocity.x, track.velocity.y)
}

/// Distance from each track's predicted position to each detection centroid.
pub fn positional_cost<T: Real>(
    tracks: &[Track<T>],
    detections: &[Detection<T>],
) -> Result<CostMatrix<T>> {
    let centroids = detections
        .iter()
        .map(Detection::centroid)
        .collect::<Result<Vec<_>>>()?;
    let predicted: Vec<Centroid<T>> = tracks.iter().map(predict).collect();
    Ok(CostMatrix::from_fn(
        tracks.len(),
        detections.len(),
        |i, j| predicted[i].distance(centroids[j]),
    ))
}

fn euclidean<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

/// Distance from each track's mean embedding to each detection embedding.
pub fn appearance_cost<T: Real>(
    tracks: &[Track<T>],
    detections: &[Detection<T>],
) -> Result<CostMatrix<T>> {
    let mut track_emb = Vec::with_capacity(tracks.len());
    for (i, t) in tracks.iter().enumerate() {
        track_emb.push(
            t.appearance
                .as_deref()
                .ok_or_else(|| Error::Schema(format!("track {i} has no appearance")))?,
        );
    }
    let mut det_emb = Vec::with_capacity(detections.len());
    for (j, d) in detections.iter().enumerate() {
        det_emb.push(
            d.embedding
                .as_deref()
                .ok_or_else(|| Error::Schema(format!("detection {j} has no embedding")))?,
        );
    }
    for (i, t) in track_emb.iter().enumerate() {
        for (j, d) in det_emb.iter().enumerate() {
            if t.len() != d.len() {
                return Err(Error::Schema(format!(
                    "track {i} embedding has {} dimensions, detection {j} has {}",
                    t.len(),
                    d.len()
                )));
            }
        }
    }
    Ok(CostMatrix::from_fn(
        tracks.len(),
        detections.len(),
        |i, j| euclidean(track_emb[i], det_emb[j]),
    ))
}

/// Rescales entries to `[0, 1]`; a constant matrix maps to all zeros.
pub fn minmax_normalize<T: Real>(m: &CostMatrix<T>) -> CostMatrix<T> {
    match m.min_max() {
        Some((lo, hi)) if hi > lo => {
            let range = hi - lo;
            m.map(|v| (v - lo) / range)
        }
        _ => m.map(|_| T::zero()),
    }
}

/// `lambda · positional + (1 − lambda) · appearance`, entrywise.
pub fn blend<T: Real>(
    pos_n: &CostMatrix<T>,
    app_n: &CostMatrix<T>,
    lambda: T,
) -> Result<CostMatrix<T>> {
    if pos_n.shape() != app_n.shape() {
        return Err(Error::Shape(format!(
            "positional {:?} vs appearance {:?}",
            pos_n.shape(),
            app_n.shape()
        )));
    }
    let rest = T::one() - lambda;
    Ok(CostMatrix::from_fn(pos_n.rows(), pos_n.cols(), |i, j| {
        lambda * pos_n.get(i, j) + rest * app_n.get(i, j)
    }))
}

/// Minimum-cost one-to-one matching over the pairs whose cost is at most
/// `gate`. The matching has as many pairs as the gate allows; among those it
/// has the smallest total. Pairs come back sorted by row.
pub fn solve_assignment<T: Real>(cost: &CostMatrix<T>, gate: T) -> Vec<(usize, usize)> {
    solve_gated(cost, |i, j| cost.get(i, j) <= gate)
}

/// The association cost the tracker uses for one frame.
pub fn association_cost<T: Real>(
    tracks: &[Track<T>],
    detections: &[Detection<T>],
    lambda: T,
) -> Result<CostMatrix<T>> {
    let pos_n = minmax_normalize(&positional_cost(tracks, detections)?);
    let have_appearance = tracks.iter().all(|t| t.appearance.is_some())
        && detections.iter().all(|d| d.embedding.is_some());
    if !have_appearance {
        return Ok(pos_n);
    }
    let app_n = minmax_normalize(&appearance_cost(tracks, detections)?);
    blend(&pos_n, &app_n, lambda)
}

/// Frame-by-frame descriptor tracker for one bout.
#[derive(Debug, Clone)]
pub struct DescriptorTracker<T> {
    cfg: PipelineConfig,
    tracks: Vec<Track<T>>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl<T: Real> DescriptorTracker<T> {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    /// Advances the tracker by one frame and returns the confirmed
    /// `(id, box)` assignments for it.
    pub fn step(&mut self, frame: &FrameRecord<T>) -> Result<Vec<TrackRow<T>>> {
        if let Some(prev) = self.last_frame {
            if frame.frame_index <= prev {
                return Err(Error::Ordering {
                    line: 0,
                    frame: frame.frame_index,
                    previous: prev,
                });
            }
        }
        self.last_frame = Some(frame.frame_index);
        let t = frame.frame_index;
        let max_age = self.cfg.max_track_age_frames;
        // Frames skipped by the stream still age the tracks.
        self.tracks
            .retain(|tr| t.saturating_sub(tr.last_seen).saturating_sub(1) <= max_age);

        let owned: Vec<Detection<T>> = frame
            .detections
            .iter()
            .filter(|d| !d.bbox.is_degenerate())
            .cloned()
            .collect();
        let cost = association_cost(&self.tracks, &owned, T::lit(self.cfg.lambda))?;
        let matches = solve_assignment(&cost, T::lit(self.cfg.gate_threshold));

        let mut track_matched = vec![false; self.tracks.len()];
        let mut det_matched = vec![false; owned.len()];
        let mut out = Vec::new();
        for &(ti, di) in &matches {
            track_matched[ti] = true;
            det_matched[di] = true;
            let det = &owned[di];
            let c = det.centroid()?;
            let track = &mut self.tracks[ti];
            track.absorb(det, c);
            match track.state {
                TrackState::Tentative if track.consecutive_hits >= CONFIRM_HITS => {
                    track.state = TrackState::Confirmed;
                    track.id = Some(self.next_id);
                    self.next_id += 1;
                }
                TrackState::Lost => track.state = TrackState::Confirmed,
                _ => {}
            }
            if let (TrackState::Confirmed, Some(id)) = (track.state, track.id) {
                out.push(TrackRow {
                    frame_index: t,
                    id,
                    bbox: det.bbox,
                    confidence: det.confidence,
                });
            }
        }
        for (ti, matched) in track_matched.iter().enumerate() {
            if !matched {
                self.tracks[ti].miss(t);
            }
        }
        self.tracks.retain(|tr| tr.age_since_seen <= max_age);
        for (di, matched) in det_matched.iter().enumerate() {
            if !matched {
                self.tracks.push(Track::spawn(&owned[di])?);
            }
        }
        out.sort_by_key(|r| r.id);
        Ok(out)
    }
}

/// Runs the descriptor tracker over a whole bout.
pub fn run_descriptor_tracking<T: Real>(
    bout: &[FrameRecord<T>],
    cfg: &PipelineConfig,
) -> Result<Vec<TrackRow<T>>> {
    let mut tracker = DescriptorTracker::new(cfg.clone())?;
    let mut rows = Vec::new();
    for frame in bout {
        rows.extend(tracker.step(frame)?);
    }
    Ok(rows)
}
