//! Active viewpoint selection for 2D human pose estimation from a drone.
//!
//! The crate covers the whole loop:
//!
//! * [`skeleton`]: capsule body model, forward kinematics, pinhole projection
//!   and a simulated keypoint detector with geometric self-occlusion.
//! * [`viewsphere`]: the hemispherical grid of camera views and the
//!   Monte-Carlo pose-error oracle that labels it.
//! * [`normalize`]: spine-based similarity normalization of 2D keypoints.
//! * [`poseerrnet`]: the autoencoder mapping normalized keypoints to a
//!   per-view error field, with its trainer and dataset builder.
//! * [`pesdf`]: occupancy, exact Euclidean distance fields, and the
//!   pose-enhanced distance field merging viewing quality with clearance.
//! * [`planner`]: trajectory costs, gradient-based optimization, line of
//!   sight and best/second-best viewpoint selection.
//! * [`harness`]: scenarios, closed-loop episodes, baselines and metrics.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod normalize;
pub mod pesdf;
pub mod planner;
pub mod poseerrnet;
pub mod rng;
pub mod skeleton;
pub mod viewsphere;

pub use error::{Error, Result};
