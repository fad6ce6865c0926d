//! Deterministic synthetic training sessions with known answers.
//!
//! A session alternates bouts and rests, starting and ending with a bout.
//! Every bout has two boxers and a referee in the ring; two bystanders walk
//! along the outside of the bottom and right ropes. Between bouts the pair
//! climbs out through the left ropes and the next pair climbs in. Detections
//! are derived from the ground truth with optional jitter and dropout.
//!
//! Randomness comes from ChaCha streams keyed by `(seed, frame, agent)`, so
//! the same spec always yields byte-identical output.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::NUM_KEYPOINTS;
use crate::model::{
    BBox, BoutSegment, Detection, Keypoint, Keypoints, PipelineConfig, Point, RingGeometry,
    SegmentKind,
};
use crate::stream_io::{FrameRecord, GroundTruthRecord, GtEntry};

/// Side of every agent's ground-truth box.
pub const AGENT_BOX_PX: f64 = 40.0;
/// Distance between boxers' centroids while clinched.
pub const CLINCH_GAP_PX: f64 = 24.0;
/// Standard deviation of the per-dimension embedding noise.
pub const EMBEDDING_NOISE: f64 = 0.05;
pub const KEYPOINT_SCORE: f64 = 0.95;

pub const REFEREE_ID: u64 = 0;
pub const BYSTANDER_BOTTOM_ID: u64 = 100;
pub const BYSTANDER_RIGHT_ID: u64 = 101;

/// Person ids of the two boxers of bout `k` (zero-based).
pub fn boxer_ids(k: usize) -> [u64; 2] {
    [2 * k as u64 + 1, 2 * k as u64 + 2]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub n_bouts: usize,
    pub fps: f64,
    pub bout_s: f64,
    pub rest_s: f64,
    /// Axis-aligned rectangular ring at least 400 px on each side.
    pub ring: RingGeometry<f64>,
    /// Typical per-frame displacement of a boxer during free movement.
    pub boxer_speed_px: f64,
    pub clinch_events: usize,
    pub proximity_threshold_px: f64,
    pub dropout_prob: f64,
    pub bbox_jitter_px: f64,
    pub identical_attire: bool,
    pub bystander_rope_touch: bool,
    pub embedding_dim: usize,
    pub emit_keypoints: bool,
    /// When the next pair reaches the ropes, relative to the end of the rest.
    /// Zero means on time; negative values mean the pair is early.
    pub entry_offset_s: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_bouts: 3,
            fps: 10.0,
            bout_s: 12.0,
            rest_s: 6.0,
            ring: RingGeometry::square(100.0, 100.0, 600.0).expect("valid default ring"),
            boxer_speed_px: 3.0,
            clinch_events: 0,
            proximity_threshold_px: 40.0,
            dropout_prob: 0.0,
            bbox_jitter_px: 1.0,
            identical_attire: false,
            bystander_rope_touch: false,
            embedding_dim: 16,
            emit_keypoints: true,
            entry_offset_s: 0.0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_bouts == 0 {
            return bad("n_bouts must be positive".into());
        }
        for (name, v) in [
            ("fps", self.fps),
            ("bout_s", self.bout_s),
            ("rest_s", self.rest_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.boxer_speed_px > 0.0 && self.proximity_threshold_px > CLINCH_GAP_PX) {
            return bad(
                "boxer speed must be positive and the proximity threshold above the clinch gap"
                    .into(),
            );
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return bad(format!(
                "dropout_prob must lie in [0, 1), got {}",
                self.dropout_prob
            ));
        }
        if !(self.bbox_jitter_px >= 0.0 && self.bbox_jitter_px.is_finite()) {
            return bad(format!(
                "bbox_jitter_px must be non-negative, got {}",
                self.bbox_jitter_px
            ));
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        if !(self.entry_offset_s <= 0.0 && -self.entry_offset_s < self.rest_s) {
            return bad(format!(
                "entry_offset_s must lie in (-rest_s, 0], got {}",
                self.entry_offset_s
            ));
        }
        let c = self.ring.corners();
        let axis_aligned = (0..4).all(|i| {
            let (a, b) = (c[i], c[(i + 1) % 4]);
            a.x == b.x || a.y == b.y
        });
        let (lo, hi) = self.ring.bounds();
        if !axis_aligned || hi.x - lo.x < 400.0 || hi.y - lo.y < 400.0 {
            return bad(
                "synthetic sessions need an axis-aligned ring of at least 400 x 400 px".into(),
            );
        }
        for k in 0..self.n_bouts {
            let t = Timeline::new(self, k);
            if t.clinch_starts(self).is_none() {
                return bad(format!(
                    "bout {k} is too short for {} clinches",
                    self.clinch_events
                ));
            }
        }
        Ok(())
    }

    pub fn frames(&self, seconds: f64) -> u64 {
        (seconds * self.fps).round() as u64
    }

    pub fn bout_frames(&self) -> u64 {
        self.frames(self.bout_s)
    }

    pub fn rest_frames(&self) -> u64 {
        self.frames(self.rest_s)
    }

    pub fn bout_start(&self, k: usize) -> u64 {
        k as u64 * (self.bout_frames() + self.rest_frames())
    }

    pub fn total_frames(&self) -> u64 {
        self.bout_start(self.n_bouts - 1) + self.bout_frames()
    }

    /// Ground-truth bout/rest segmentation.
    pub fn segments(&self) -> Vec<BoutSegment> {
        let mut out = Vec::with_capacity(2 * self.n_bouts);
        for k in 0..self.n_bouts {
            let s = self.bout_start(k);
            let e = s + self.bout_frames() - 1;
            out.push(BoutSegment::new(s, e, SegmentKind::Bout));
            if k + 1 < self.n_bouts {
                out.push(BoutSegment::new(
                    e + 1,
                    self.bout_start(k + 1) - 1,
                    SegmentKind::Rest,
                ));
            }
        }
        out
    }

    /// Replaces the bout and rest durations, keeping an early entry at the
    /// same fraction of the rest.
    pub fn with_durations(mut self, bout_s: f64, rest_s: f64) -> Self {
        self.entry_offset_s *= rest_s / self.rest_s;
        self.bout_s = bout_s;
        self.rest_s = rest_s;
        self
    }

    /// Pipeline settings matched to this session's timing.
    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            fps: self.fps,
            bout_duration_s: self.bout_s,
            rest_duration_s: self.rest_s,
            proximity_threshold_px: self.proximity_threshold_px,
            boundary_refractory_s: self.rest_s,
            cue_window_frames: (self.fps.round() as usize).max(1),
            ..PipelineConfig::default()
        }
    }
}

pub const PRESET_NAMES: [&str; 6] = [
    "clean",
    "clinch",
    "identical-attire",
    "dropout",
    "rope-toucher",
    "early-entry",
];

/// Named scenarios at desk scale.
pub fn scenario_presets() -> Vec<(&'static str, ScenarioSpec)> {
    PRESET_NAMES
        .iter()
        .map(|&n| (n, preset(n).expect("known preset")))
        .collect()
}

pub fn preset(name: &str) -> Option<ScenarioSpec> {
    let base = ScenarioSpec::default();
    let spec = match name {
        "clean" => ScenarioSpec {
            bbox_jitter_px: 0.0,
            ..base
        },
        "clinch" => ScenarioSpec {
            clinch_events: 2,
            bout_s: 30.0,
            ..base
        },
        "identical-attire" => ScenarioSpec {
            identical_attire: true,
            clinch_events: 1,
            bout_s: 30.0,
            ..base
        },
        "dropout" => ScenarioSpec {
            dropout_prob: 0.05,
            ..base
        },
        "rope-toucher" => ScenarioSpec {
            bystander_rope_touch: true,
            bbox_jitter_px: 0.0,
            ..base
        },
        "early-entry" => ScenarioSpec {
            entry_offset_s: -base.rest_s / 3.0,
            bbox_jitter_px: 0.0,
            ..base
        },
        _ => return None,
    };
    Some(spec)
}

/// Everything a generated session consists of.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub detections: Vec<FrameRecord<f64>>,
    pub ground_truth: Vec<GroundTruthRecord<f64>>,
    pub segments: Vec<BoutSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Agent {
    pid: u64,
    pos: Point<f64>,
    heading: f64,
}

const STREAM_MOTION: u64 = 1;
const STREAM_DETECTION: u64 = 2;
const STREAM_ATTIRE: u64 = 3;

fn keyed_rng(seed: u64, purpose: u64, frame: u64, agent: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(frame);
    rng.set_word_pos(u128::from(agent) << 32);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn lerp(a: Point<f64>, b: Point<f64>, t: f64) -> Point<f64> {
    if t >= 1.0 {
        return b;
    }
    Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
}

fn sub(a: Point<f64>, b: Point<f64>) -> Point<f64> {
    Point::new(a.x - b.x, a.y - b.y)
}

fn norm(v: Point<f64>) -> f64 {
    v.x.hypot(v.y)
}

/// Key positions of the choreography, derived from the ring's bounds.
#[derive(Debug, Clone, Copy)]
struct Layout {
    lo: Point<f64>,
    hi: Point<f64>,
    centre: Point<f64>,
    arena_radius: f64,
}

impl Layout {
    fn new(ring: &RingGeometry<f64>) -> Self {
        let (lo, hi) = ring.bounds();
        let centre = Point::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0);
        let arena_radius = 0.283 * (hi.x - lo.x).min(hi.y - lo.y);
        Self {
            lo,
            hi,
            centre,
            arena_radius,
        }
    }

    fn exit_staging(&self) -> [Point<f64>; 2] {
        let x = self.lo.x + 60.0;
        [
            Point::new(x, self.centre.y - 150.0),
            Point::new(x, self.centre.y - 50.0),
        ]
    }

    fn exit_line(&self) -> [Point<f64>; 2] {
        let h = CLINCH_GAP_PX / 2.0;
        [
            Point::new(self.lo.x, self.centre.y - 100.0 - h),
            Point::new(self.lo.x, self.centre.y - 100.0 + h),
        ]
    }

    fn exit_outside(&self) -> [Point<f64>; 2] {
        self.exit_line().map(|p| Point::new(self.lo.x - 80.0, p.y))
    }

    fn entry_line(&self) -> [Point<f64>; 2] {
        let h = CLINCH_GAP_PX / 2.0;
        [
            Point::new(self.lo.x, self.centre.y + 100.0 - h),
            Point::new(self.lo.x, self.centre.y + 100.0 + h),
        ]
    }

    fn entry_outside(&self) -> [Point<f64>; 2] {
        self.entry_line().map(|p| Point::new(self.lo.x - 80.0, p.y))
    }

    fn entry_inside(&self) -> [Point<f64>; 2] {
        self.entry_line().map(|p| Point::new(self.lo.x + 70.0, p.y))
    }

    fn fight_positions(&self) -> [Point<f64>; 2] {
        [
            Point::new(self.centre.x - 100.0, self.centre.y),
            Point::new(self.centre.x + 100.0, self.centre.y),
        ]
    }

    fn referee_home(&self) -> Point<f64> {
        Point::new(self.hi.x - 60.0, self.lo.y + 60.0)
    }
}

/// How a scripted phase picks its destinations.
#[derive(Debug, Clone, Copy)]
enum Target {
    Fixed([Point<f64>; 2]),
    /// Destinations sorted by y go to the boxers sorted by y.
    ByHeight([Point<f64>; 2]),
    ClinchIn,
    ClinchOut,
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Script {
        start: u64,
        end: u64,
        target: Target,
    },
    Free {
        start: u64,
        end: u64,
    },
}

impl Phase {
    fn span(&self) -> (u64, u64) {
        match *self {
            Phase::Script { start, end, .. } | Phase::Free { start, end } => (start, end),
        }
    }
}

/// Frame boundaries of one pair's time on screen.
#[derive(Debug, Clone, Copy)]
struct Timeline {
    appear: u64,
    vanish: u64,
    free_start: u64,
    free_end: u64,
}

impl Timeline {
    fn new(spec: &ScenarioSpec, k: usize) -> Self {
        let f = |s: f64| spec.frames(s);
        let start = spec.bout_start(k);
        let end = start + spec.bout_frames();
        let (appear, free_start) = if k == 0 {
            (0, 0)
        } else {
            let line = start.saturating_sub(f(-spec.entry_offset_s));
            let separate = start.max(line + f(2.0));
            (line.saturating_sub(f(3.0)), separate + f(2.0))
        };
        let (free_end, vanish) = if k + 1 == spec.n_bouts {
            (end, end)
        } else {
            (end.saturating_sub(f(4.0)), end + f(3.0))
        };
        Self {
            appear,
            vanish,
            free_start,
            free_end,
        }
    }

    /// First frame of each clinch, spread evenly over the free period.
    fn clinch_starts(&self, spec: &ScenarioSpec) -> Option<Vec<u64>> {
        let n = spec.clinch_events as u64;
        let len = spec.frames(5.0);
        let gap = spec.frames(1.0);
        let free = self.free_end.checked_sub(self.free_start)?;
        if n == 0 {
            return Some(Vec::new());
        }
        if free < n * len + (n + 1) * gap {
            return None;
        }
        Some(
            (1..=n)
                .map(|i| {
                    let centre = self.free_start + i * free / (n + 1);
                    centre.saturating_sub(len / 2).max(self.free_start + gap)
                })
                .collect(),
        )
    }
}

fn pair_phases(spec: &ScenarioSpec, layout: &Layout, k: usize, t: &Timeline) -> Vec<Phase> {
    let f = |s: f64| spec.frames(s);
    let start = spec.bout_start(k);
    let end = start + spec.bout_frames();
    let mut phases = Vec::new();
    if k > 0 {
        let line = t.appear + f(3.0);
        let separate = t.free_start - f(2.0);
        phases.push(Phase::Script {
            start: t.appear,
            end: line,
            target: Target::Fixed(layout.entry_line()),
        });
        phases.push(Phase::Script {
            start: line,
            end: line + f(1.0),
            target: Target::Fixed(layout.entry_line()),
        });
        phases.push(Phase::Script {
            start: line + f(1.0),
            end: line + f(2.0),
            target: Target::Fixed(layout.entry_inside()),
        });
        phases.push(Phase::Script {
            start: line + f(2.0),
            end: separate,
            target: Target::Fixed(layout.entry_inside()),
        });
        phases.push(Phase::Script {
            start: separate,
            end: t.free_start,
            target: Target::Fixed(layout.fight_positions()),
        });
    }
    let mut cursor = t.free_start;
    let hold = f(3.0);
    let step = f(1.0);
    for c in t.clinch_starts(spec).unwrap_or_default() {
        phases.push(Phase::Free {
            start: cursor,
            end: c,
        });
        phases.push(Phase::Script {
            start: c,
            end: c + step,
            target: Target::ClinchIn,
        });
        phases.push(Phase::Script {
            start: c + step,
            end: c + step + hold,
            target: Target::ClinchIn,
        });
        phases.push(Phase::Script {
            start: c + step + hold,
            end: c + 2 * step + hold,
            target: Target::ClinchOut,
        });
        cursor = c + 2 * step + hold;
    }
    phases.push(Phase::Free {
        start: cursor,
        end: t.free_end,
    });
    if k + 1 < spec.n_bouts {
        let exit = [
            (end - f(4.0), end - f(1.0), layout.exit_staging()),
            (end - f(1.0), end, layout.exit_line()),
            (end, end + f(1.0), layout.exit_line()),
            (end + f(1.0), t.vanish, layout.exit_outside()),
        ];
        for (s, e, p) in exit {
            phases.push(Phase::Script {
                start: s,
                end: e,
                target: Target::ByHeight(p),
            });
        }
    }
    phases.retain(|p| {
        let (s, e) = p.span();
        e > s
    });
    phases
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI
}

fn turn_towards(heading: f64, target: f64, max_step: f64) -> f64 {
    heading + wrap_angle(target - heading).clamp(-max_step, max_step)
}

const MAX_TURN_RAD: f64 = 0.15;
const MIN_SEPARATION_PX: f64 = 60.0;

/// Positions and headings of bout `k`'s boxers for every frame on screen.
fn simulate_pair(spec: &ScenarioSpec, layout: &Layout, k: usize) -> Vec<(u64, [Agent; 2])> {
    let t = Timeline::new(spec, k);
    let ids = boxer_ids(k);
    let phases = pair_phases(spec, layout, k, &t);
    let mut pos = if k == 0 {
        layout.fight_positions()
    } else {
        layout.entry_outside()
    };
    let face = |p: [Point<f64>; 2]| {
        let d = sub(p[1], p[0]);
        let a = d.y.atan2(d.x);
        [a, wrap_angle(a + std::f64::consts::PI)]
    };
    let mut heading = face(pos);
    let mut vel = [Point::new(0.0, 0.0); 2];
    let mut out = Vec::with_capacity((t.vanish - t.appear) as usize);

    for phase in phases {
        match phase {
            Phase::Script { start, end, target } => {
                let from = pos;
                let to = match target {
                    Target::Fixed(p) => p,
                    Target::ByHeight(mut p) => {
                        p.sort_by(|a, b| a.y.total_cmp(&b.y));
                        if from[0].y <= from[1].y {
                            p
                        } else {
                            [p[1], p[0]]
                        }
                    }
                    Target::ClinchIn | Target::ClinchOut => {
                        let mid = lerp(from[0], from[1], 0.5);
                        let d = sub(from[1], from[0]);
                        let n = norm(d).max(1e-9);
                        let half = if matches!(target, Target::ClinchIn) {
                            CLINCH_GAP_PX / 2.0
                        } else {
                            40.0
                        };
                        let u = Point::new(d.x / n * half, d.y / n * half);
                        [sub(mid, u), mid.offset(u.x, u.y)]
                    }
                };
                let len = (end - start) as f64;
                for frame in start..end {
                    let s = (frame - start + 1) as f64 / len;
                    pos = [lerp(from[0], to[0], s), lerp(from[1], to[1], s)];
                    let want = face(pos);
                    heading = [0, 1].map(|i| turn_towards(heading[i], want[i], MAX_TURN_RAD));
                    out.push((
                        frame,
                        [0, 1].map(|i| Agent {
                            pid: ids[i],
                            pos: pos[i],
                            heading: heading[i],
                        }),
                    ));
                }
                vel = [Point::new(0.0, 0.0); 2];
            }
            Phase::Free { start, end } => {
                for frame in start..end {
                    let prev = pos;
                    for i in 0..2 {
                        let mut rng = keyed_rng(spec.seed, STREAM_MOTION, frame, ids[i]);
                        let speed = spec.boxer_speed_px;
                        let mut acc = Point::new(
                            normal(&mut rng) * speed * 0.35,
                            normal(&mut rng) * speed * 0.35,
                        );
                        let to_centre = sub(layout.centre, prev[i]);
                        let r = norm(to_centre);
                        if r > layout.arena_radius {
                            acc = acc.offset(
                                to_centre.x / r * speed * 0.5,
                                to_centre.y / r * speed * 0.5,
                            );
                        }
                        let d = sub(prev[1 - i], prev[i]);
                        let dist = norm(d).max(1e-9);
                        let pull = if dist < MIN_SEPARATION_PX + 10.0 {
                            -0.6
                        } else if dist > 150.0 {
                            0.3
                        } else {
                            0.0
                        };
                        acc = acc.offset(d.x / dist * speed * pull, d.y / dist * speed * pull);
                        let mut v = Point::new(0.85 * vel[i].x + acc.x, 0.85 * vel[i].y + acc.y);
                        let vn = norm(v);
                        if vn > 2.0 * speed {
                            v = Point::new(v.x / vn * 2.0 * speed, v.y / vn * 2.0 * speed);
                        }
                        vel[i] = v;
                        pos[i] = prev[i].offset(v.x, v.y);
                    }
                    let d = sub(pos[1], pos[0]);
                    let dist = norm(d);
                    if dist < MIN_SEPARATION_PX {
                        let push = (MIN_SEPARATION_PX - dist) / 2.0 / dist.max(1e-9);
                        pos[0] = pos[0].offset(-d.x * push, -d.y * push);
                        pos[1] = pos[1].offset(d.x * push, d.y * push);
                    }
                    let want = face(pos);
                    heading = [0, 1].map(|i| turn_towards(heading[i], want[i], MAX_TURN_RAD));
                    out.push((
                        frame,
                        [0, 1].map(|i| Agent {
                            pid: ids[i],
                            pos: pos[i],
                            heading: heading[i],
                        }),
                    ));
                }
            }
        }
    }
    out
}

/// Bounded random walk around `home`, one step per frame.
fn wander(
    spec: &ScenarioSpec,
    pid: u64,
    home: Point<f64>,
    lo: Point<f64>,
    hi: Point<f64>,
    step_px: f64,
) -> Vec<Point<f64>> {
    let mut pos = home;
    let mut vel = Point::new(0.0, 0.0);
    let mut out = Vec::with_capacity(spec.total_frames() as usize);
    for frame in 0..spec.total_frames() {
        let mut rng = keyed_rng(spec.seed, STREAM_MOTION, frame, pid);
        let pull = sub(home, pos);
        vel = Point::new(
            0.9 * vel.x + normal(&mut rng) * step_px * 0.3 + pull.x * 0.01,
            0.9 * vel.y + normal(&mut rng) * step_px * 0.3 + pull.y * 0.01,
        );
        pos = Point::new(
            (pos.x + vel.x).clamp(lo.x, hi.x),
            (pos.y + vel.y).clamp(lo.y, hi.y),
        );
        out.push(pos);
    }
    out
}

fn people(spec: &ScenarioSpec) -> Vec<Vec<Agent>> {
    let layout = Layout::new(&spec.ring);
    let total = spec.total_frames();
    let mut frames: Vec<Vec<Agent>> = vec![Vec::new(); total as usize];

    let home = layout.referee_home();
    let referee = wander(
        spec,
        REFEREE_ID,
        home,
        home.offset(-30.0, -30.0),
        home.offset(30.0, 30.0),
        1.0,
    );
    for (f, p) in referee.into_iter().enumerate() {
        let heading = sub(layout.centre, p).y.atan2(sub(layout.centre, p).x);
        frames[f].push(Agent {
            pid: REFEREE_ID,
            pos: p,
            heading,
        });
    }

    for k in 0..spec.n_bouts {
        for (f, pair) in simulate_pair(spec, &layout, k) {
            if f < total {
                frames[f as usize].extend(pair);
            }
        }
    }

    let (lo, hi) = (layout.lo, layout.hi);
    let bottom_y = hi.y + 45.0;
    let bottom_home = Point::new(layout.centre.x, bottom_y);
    let bottom = wander(
        spec,
        BYSTANDER_BOTTOM_ID,
        bottom_home,
        Point::new(lo.x + 50.0, bottom_y),
        Point::new(hi.x - 50.0, bottom_y),
        1.5,
    );
    let right_x = hi.x + 45.0;
    let right_home = Point::new(right_x, layout.centre.y);
    let right = wander(
        spec,
        BYSTANDER_RIGHT_ID,
        right_home,
        Point::new(right_x, lo.y + 50.0),
        Point::new(right_x, hi.y - 50.0),
        1.5,
    );
    let touch = rope_touch_offsets(spec, bottom_y - hi.y);
    for f in 0..total as usize {
        let mut b = bottom[f];
        if let Some(&(anchor, dy)) = touch.get(&(f as u64)) {
            b = Point::new(bottom[anchor as usize].x, bottom_y - dy);
        }
        frames[f].push(Agent {
            pid: BYSTANDER_BOTTOM_ID,
            pos: b,
            heading: -FRAC_PI_2,
        });
        frames[f].push(Agent {
            pid: BYSTANDER_RIGHT_ID,
            pos: right[f],
            heading: std::f64::consts::PI,
        });
    }
    frames
}

/// For frames where the bottom bystander leans on the rope: the frame whose
/// x position is frozen and the upward displacement.
fn rope_touch_offsets(
    spec: &ScenarioSpec,
    reach: f64,
) -> std::collections::HashMap<u64, (u64, f64)> {
    let mut out = std::collections::HashMap::new();
    if !spec.bystander_rope_touch {
        return out;
    }
    let step = spec.frames(1.0).max(1);
    let hold = spec.frames(2.0);
    for k in 0..spec.n_bouts {
        let t0 = spec.bout_start(k) + (spec.bout_frames() as f64 * 0.4) as u64;
        let anchor = t0.saturating_sub(1);
        for i in 0..step {
            out.insert(t0 + i, (anchor, reach * (i + 1) as f64 / step as f64));
        }
        for i in 0..hold {
            out.insert(t0 + step + i, (anchor, reach));
        }
        for i in 0..step {
            out.insert(
                t0 + step + hold + i,
                (anchor, reach * (step - 1 - i) as f64 / step as f64),
            );
        }
    }
    out
}

/// Offsets of the 17 landmarks as (angle relative to heading, radius).
const BODY_PLAN: [(f64, f64); NUM_KEYPOINTS] = [
    (0.0, 12.0),
    (0.35, 13.0),
    (-0.35, 13.0),
    (0.9, 12.0),
    (-0.9, 12.0),
    (FRAC_PI_2, 16.0),
    (-FRAC_PI_2, 16.0),
    (1.05, 19.0),
    (-1.05, 19.0),
    (0.35, 18.0),
    (-0.35, 18.0),
    (FRAC_PI_2, 10.0),
    (-FRAC_PI_2, 10.0),
    (1.95, 12.0),
    (-1.95, 12.0),
    (2.2, 14.0),
    (-2.2, 14.0),
];

fn keypoints_for(agent: &Agent, shift: Point<f64>) -> Keypoints<f64> {
    std::array::from_fn(|i| {
        let (angle, radius) = BODY_PLAN[i];
        let a = agent.heading + angle;
        Keypoint::new(
            agent.pos.x + shift.x + radius * a.cos(),
            agent.pos.y + shift.y + radius * a.sin(),
            KEYPOINT_SCORE,
        )
    })
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn attire_key(spec: &ScenarioSpec, pid: u64) -> u64 {
    if spec.identical_attire && pid != REFEREE_ID && pid < BYSTANDER_BOTTOM_ID {
        pid.div_ceil(2)
    } else {
        1000 + pid
    }
}

/// Simulates a session. Errors only on an invalid spec.
pub fn generate_session(spec: &ScenarioSpec) -> Result<Session> {
    spec.validate()?;
    let frames = people(spec);
    let mut attire: std::collections::BTreeMap<u64, Vec<f64>> = std::collections::BTreeMap::new();
    let mut detections = Vec::with_capacity(frames.len());
    let mut ground_truth = Vec::with_capacity(frames.len());

    for (f, agents) in frames.iter().enumerate() {
        let frame = f as u64;
        let mut gt = Vec::with_capacity(agents.len());
        let mut dets = Vec::with_capacity(agents.len());
        for a in agents {
            let bbox = BBox::centered(a.pos, AGENT_BOX_PX, AGENT_BOX_PX);
            gt.push(GtEntry {
                person_id: a.pid,
                bbox,
            });

            let mut rng = keyed_rng(spec.seed, STREAM_DETECTION, frame, a.pid);
            let dropped = rng.gen::<f64>() < spec.dropout_prob;
            let shift = if spec.bbox_jitter_px > 0.0 {
                Point::new(
                    normal(&mut rng) * spec.bbox_jitter_px,
                    normal(&mut rng) * spec.bbox_jitter_px,
                )
            } else {
                Point::new(0.0, 0.0)
            };
            let confidence = 0.85 + 0.1 * rng.gen::<f64>();
            let key = attire_key(spec, a.pid);
            let mean = attire.entry(key).or_insert_with(|| {
                unit_vector(
                    &mut keyed_rng(spec.seed, STREAM_ATTIRE, 0, key),
                    spec.embedding_dim,
                )
            });
            let embedding: Vec<f64> = mean
                .iter()
                .map(|m| m + normal(&mut rng) * EMBEDDING_NOISE)
                .collect();
            if dropped {
                continue;
            }
            let mut d = Detection::new(frame, bbox.translated(shift.x, shift.y), confidence)
                .with_embedding(embedding);
            if spec.emit_keypoints {
                d = d.with_keypoints(keypoints_for(a, shift));
            }
            dets.push(d);
        }
        gt.sort_by_key(|e| e.person_id);
        ground_truth.push(GroundTruthRecord {
            frame_index: frame,
            entries: gt,
        });
        detections.push(FrameRecord {
            frame_index: frame,
            detections: dets,
        });
    }
    Ok(Session {
        detections,
        ground_truth,
        segments: spec.segments(),
    })
}
