//! Bout/rest segmentation of a session stream.
//!
//! Three per-frame cues are computed from the detections: a rope crossing,
//! two in-ring people in close proximity, and the in-ring head count hitting
//! its bout value. Each cue is smoothed by a trailing majority window, the
//! smoothed cues vote, and a transition is declared where the vote passes
//! and the refractory period since the previous transition has elapsed.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::crosses_line;
use crate::model::{
    inside_ring, BoutSegment, Centroid, Detection, PipelineConfig, RingGeometry, SegmentKind,
};
use crate::scalar::Real;
use crate::stream_io::FrameRecord;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CueVector {
    pub ring_crossing: bool,
    pub close_proximity: bool,
    pub person_count: bool,
}

impl CueVector {
    pub fn new(ring_crossing: bool, close_proximity: bool, person_count: bool) -> Self {
        Self {
            ring_crossing,
            close_proximity,
            person_count,
        }
    }

    pub fn active(&self) -> u8 {
        self.ring_crossing as u8 + self.close_proximity as u8 + self.person_count as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionEvent {
    pub frame_index: u64,
    pub cues_active: u8,
}

/// Pairs each current centroid with its mutual nearest previous centroid.
fn mutual_nearest<T: Real>(prev: &[Centroid<T>], cur: &[Centroid<T>]) -> Vec<(usize, usize)> {
    let nearest = |p: Centroid<T>, pool: &[Centroid<T>]| -> Option<usize> {
        pool.iter()
            .enumerate()
            .min_by(|a, b| {
                p.distance(*a.1)
                    .partial_cmp(&p.distance(*b.1))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(i, _)| i)
    };
    cur.iter()
        .enumerate()
        .filter_map(|(j, &c)| {
            let i = nearest(c, prev)?;
            (nearest(prev[i], cur) == Some(j)).then_some((i, j))
        })
        .collect()
}

/// True iff a matched centroid moved across (or onto) any rope line.
pub fn cue_ring_crossing<T: Real>(
    prev: &[Centroid<T>],
    cur: &[Centroid<T>],
    ring: &RingGeometry<T>,
) -> bool {
    mutual_nearest(prev, cur).into_iter().any(|(i, j)| {
        ring.virtual_lines()
            .iter()
            .any(|line| crosses_line(prev[i], cur[j], line).unwrap_or(false))
    })
}

/// True iff some pair of the given centroids is within `threshold_px`
/// (inclusive). Callers pass in-ring centroids only.
pub fn cue_close_proximity<T: Real>(centroids: &[Centroid<T>], threshold_px: T) -> bool {
    centroids.iter().enumerate().any(|(i, a)| {
        centroids[i + 1..]
            .iter()
            .any(|b| a.distance(*b) <= threshold_px)
    })
}

/// Number of detections whose centroid lies in the ring (boundary included).
pub fn in_ring_count<T: Real>(detections: &[Detection<T>], ring: &RingGeometry<T>) -> usize {
    detections
        .iter()
        .filter_map(|d| d.centroid().ok())
        .filter(|&c| inside_ring(c, ring))
        .count()
}

/// True iff exactly `expected` detections stand in the ring.
pub fn cue_person_count<T: Real>(
    detections: &[Detection<T>],
    ring: &RingGeometry<T>,
    expected: usize,
) -> bool {
    in_ring_count(detections, ring) == expected
}

pub fn vote(cues: CueVector, vote_min: usize) -> bool {
    cues.active() as usize >= vote_min
}

fn centroids<T: Real>(detections: &[Detection<T>]) -> Vec<Centroid<T>> {
    detections
        .iter()
        .filter_map(|d| d.centroid().ok())
        .collect()
}

/// Unsmoothed cues for one frame, together with its in-ring head count.
pub fn raw_cues<T: Real>(
    prev: Option<&FrameRecord<T>>,
    cur: &FrameRecord<T>,
    ring: &RingGeometry<T>,
    cfg: &PipelineConfig,
) -> (CueVector, usize) {
    let cur_c = centroids(&cur.detections);
    let in_ring: Vec<Centroid<T>> = cur_c
        .iter()
        .copied()
        .filter(|&c| inside_ring(c, ring))
        .collect();
    let crossing = prev.is_some_and(|p| cue_ring_crossing(&centroids(&p.detections), &cur_c, ring));
    let proximity = cue_close_proximity(&in_ring, T::lit(cfg.proximity_threshold_px));
    let count = in_ring.len() == cfg.expected_in_ring_count;
    (CueVector::new(crossing, proximity, count), in_ring.len())
}

/// Trailing-window majority filter over a boolean signal.
#[derive(Debug, Clone)]
pub struct MajorityWindow {
    window: usize,
    values: VecDeque<bool>,
    trues: usize,
}

impl MajorityWindow {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            values: VecDeque::with_capacity(window),
            trues: 0,
        }
    }

    /// Pushes a raw value and returns whether strictly more than half of the
    /// values currently in the window are true.
    pub fn push(&mut self, v: bool) -> bool {
        if self.values.len() == self.window && self.values.pop_front() == Some(true) {
            self.trues -= 1;
        }
        self.values.push_back(v);
        self.trues += v as usize;
        2 * self.trues > self.values.len()
    }
}

/// Per-frame trace of the segmentation fold, useful for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CueTrace {
    pub frame_index: u64,
    pub raw: CueVector,
    pub smoothed: CueVector,
    pub in_ring: usize,
}

pub fn trace_cues<T: Real>(
    stream: &[FrameRecord<T>],
    ring: &RingGeometry<T>,
    cfg: &PipelineConfig,
) -> Vec<CueTrace> {
    let mut crossing = MajorityWindow::new(cfg.cue_window_frames);
    let mut proximity = MajorityWindow::new(cfg.cue_window_frames);
    let mut count = MajorityWindow::new(cfg.cue_window_frames);
    let mut out = Vec::with_capacity(stream.len());
    for (i, rec) in stream.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| &stream[p]);
        let (raw, in_ring) = raw_cues(prev, rec, ring, cfg);
        let smoothed = CueVector::new(
            crossing.push(raw.ring_crossing),
            proximity.push(raw.close_proximity),
            count.push(raw.person_count),
        );
        out.push(CueTrace {
            frame_index: rec.frame_index,
            raw,
            smoothed,
            in_ring,
        });
    }
    out
}

fn check_stream<T>(stream: &[FrameRecord<T>]) -> Result<()> {
    if stream.is_empty() {
        return Err(Error::EmptyInput("session stream has no frames".into()));
    }
    for w in stream.windows(2) {
        if w[1].frame_index <= w[0].frame_index {
            return Err(Error::Ordering {
                line: 0,
                frame: w[1].frame_index,
                previous: w[0].frame_index,
            });
        }
    }
    Ok(())
}

fn events_from_trace(trace: &[CueTrace], cfg: &PipelineConfig) -> Vec<TransitionEvent> {
    let Some((first, last)) = trace
        .first()
        .zip(trace.last())
        .map(|(a, b)| (a.frame_index, b.frame_index))
    else {
        return Vec::new();
    };
    let refractory = cfg.refractory_frames();
    let mut events: Vec<TransitionEvent> = Vec::new();
    for t in trace {
        // Both neighbouring segments must keep at least two frames.
        if t.frame_index < first + 2 || t.frame_index >= last {
            continue;
        }
        if !vote(t.smoothed, cfg.vote_min) {
            continue;
        }
        if events
            .last()
            .is_some_and(|e| t.frame_index - e.frame_index < refractory)
        {
            continue;
        }
        events.push(TransitionEvent {
            frame_index: t.frame_index,
            cues_active: t.smoothed.active(),
        });
    }
    events
}

/// Transition events for a whole session.
pub fn detect_transitions<T: Real>(
    stream: &[FrameRecord<T>],
    ring: &RingGeometry<T>,
    cfg: &PipelineConfig,
) -> Result<Vec<TransitionEvent>> {
    cfg.validate()?;
    check_stream(stream)?;
    Ok(events_from_trace(&trace_cues(stream, ring, cfg), cfg))
}

fn median(values: &mut [usize]) -> usize {
    values.sort_unstable();
    values[values.len() / 2]
}

/// Splits a session into alternating bout and rest segments.
///
/// Consecutive events delimit segments; a segment whose median in-ring head
/// count equals the expected bout count is a bout, anything else a rest.
/// Neighbouring segments of the same kind are merged, so the result always
/// alternates.
pub fn segment_bouts<T: Real>(
    stream: &[FrameRecord<T>],
    ring: &RingGeometry<T>,
    cfg: &PipelineConfig,
) -> Result<Vec<BoutSegment>> {
    cfg.validate()?;
    check_stream(stream)?;
    let first = stream[0].frame_index;
    let last = stream[stream.len() - 1].frame_index;
    if first == last {
        return Err(Error::EmptyInput(
            "session stream must span at least two frames".into(),
        ));
    }
    let trace = trace_cues(stream, ring, cfg);
    let events = events_from_trace(&trace, cfg);

    let mut bounds: Vec<(u64, u64)> = Vec::with_capacity(events.len() + 1);
    let mut start = first;
    for e in &events {
        bounds.push((start, e.frame_index - 1));
        start = e.frame_index;
    }
    bounds.push((start, last));

    let mut segments: Vec<BoutSegment> = Vec::with_capacity(bounds.len());
    let mut cursor = 0;
    for (s, e) in bounds {
        let mut counts = Vec::new();
        while cursor < trace.len() && trace[cursor].frame_index <= e {
            counts.push(trace[cursor].in_ring);
            cursor += 1;
        }
        let kind = if !counts.is_empty() && median(&mut counts) == cfg.expected_in_ring_count {
            SegmentKind::Bout
        } else {
            SegmentKind::Rest
        };
        match segments.last_mut() {
            Some(prev) if prev.kind == kind => prev.end_frame = e,
            _ => segments.push(BoutSegment::new(s, e, kind)),
        }
    }
    Ok(segments)
}
