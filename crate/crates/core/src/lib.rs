//! Stereo event-camera visual odometry.
//!
//! Events from a calibrated stereo pair feed per-pixel timestamp maps with a
//! refractory reference rule. Corners are detected event-per-event by an
//! arc test on the reference map, described by windows of exponential-decay
//! time surfaces, matched across the four current/previous left/right
//! surfaces with ZNCC and a circular consistency check, and the surviving
//! features drive RANSAC-seeded Gauss-Newton minimization of the stereo
//! reprojection error. Estimation frequency adapts to the event rate: a pose
//! comes out every N events, with a maximum-interval override.
//!
//! The crate also ships a synthetic wireframe event generator with exact
//! ground truth and a relative-pose-error evaluator, so the whole loop can
//! be verified end to end without camera hardware.

pub mod calib;
pub mod detector;
pub mod eval;
pub mod event;
pub mod io;
pub mod matcher;
pub mod motion;
pub mod pipeline;
pub mod rectify;
pub mod se3;
pub mod surface;
pub mod synth;

pub use calib::{CalibError, CameraIntrinsics, StereoRig};
pub use event::{CameraSide, Event, Polarity};
pub use pipeline::{run, Pipeline, PipelineConfig, PipelineError, SliceReport, SliceTrigger};
pub use se3::{EstimateQuality, Pose, TimedPose};
