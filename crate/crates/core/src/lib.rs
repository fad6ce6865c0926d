//! Bout segmentation and boxer re-identification for top-view boxing
//! training sessions.
//!
//! The pipeline reads per-frame person detections, splits a session into
//! bouts and rests from ring-level cues, keeps a stable identity for each
//! boxer within a bout (either with a descriptor tracker or with pose
//! matching over short mini-bouts), and scores the result against ground
//! truth. A deterministic generator produces synthetic sessions with known
//! answers.
//!
//! Every numeric routine is generic over [`Real`]; the aliases at the crate
//! root fix the scalar to `f64`.

pub mod analytics;
pub mod assignment;
pub mod cli;
pub mod descriptor_tracker;
pub mod error;
pub mod model;
pub mod pose_tracker;
pub mod scalar;
pub mod stream_io;
pub mod synth;
pub mod transition;

pub use error::{Error, Result};
pub use model::{BoutSegment, PipelineConfig, SegmentKind};
pub use scalar::Real;

pub type Point = model::Point<f64>;
pub type Centroid = model::Centroid<f64>;
pub type BBox = model::BBox<f64>;
pub type Keypoint = model::Keypoint<f64>;
pub type Keypoints = model::Keypoints<f64>;
pub type Detection = model::Detection<f64>;
pub type LineSegment = model::LineSegment<f64>;
pub type RingGeometry = model::RingGeometry<f64>;
pub type FrameRecord = stream_io::FrameRecord<f64>;
pub type GroundTruthRecord = stream_io::GroundTruthRecord<f64>;
pub type TrackRow = stream_io::TrackRow<f64>;
pub type PoseRow = stream_io::PoseRow<f64>;
pub type CostMatrix = assignment::CostMatrix<f64>;
pub type Track = descriptor_tracker::Track<f64>;
pub type DescriptorTracker = descriptor_tracker::DescriptorTracker<f64>;
pub type PoseSample = pose_tracker::PoseSample<f64>;
pub type PoseFrame = pose_tracker::PoseFrame<f64>;
pub type MiniBout = pose_tracker::MiniBout<f64>;
