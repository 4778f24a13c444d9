//! Closed-loop simulation: scripted scenarios, the full perception-planning
//! loop, fixed-bearing baselines, and PCK/MSE scoring.

mod canned;
mod episode;
mod metrics;
mod scenario;
mod suite;

pub use canned::{WallScene, WALL_BEST_CELL, WALL_SECOND_CELL};
pub use episode::{
    baseline_elevation, run_baseline, run_episode, Episode, Guidance, Mode, Simulator, MAX_STALE_TICKS, SUBJECT_CONTACT, SUBJECT_RADIUS,
    WINDOW_EXTENT,
};
pub use metrics::{keypoint_mse, pck, spine_pixels, EpisodeMetrics, PCK_ALPHA};
pub use scenario::{BoxObstacle, Column, DroneStart, Environment, Keyframe, Posture, Scenario, SubjectScript, World};
pub use suite::{evaluate_suite, write_metrics_csv, Score, SuiteReport, SuiteRow, ALL_COLUMN, SUITE_CSV_HEADER};

use crate::error::Result;
use crate::poseerrnet::{generate_dataset, sample_gait_poses, train, ObservationPolicy, TrainConfig, TrainResult};
use crate::rng::derive;
use crate::skeleton::{build_canonical_skeleton, DetectorParams};
use crate::viewsphere::{make_grid, DEFAULT_N_AZ, DEFAULT_N_EL, DEFAULT_RADIUS};

/// Gait poses in the default training set.
pub const DEFAULT_POSES: usize = 500;
/// Detector trials per cell when labelling the default training set.
pub const DEFAULT_LABEL_TRIALS: usize = 40;

/// Train the perception net used by the simulator from scratch: synthetic
/// gait poses, oracle-labelled fields, default trainer settings.
pub fn train_default_net(seed: u64) -> Result<TrainResult> {
    let base = build_canonical_skeleton(1.8)?;
    let grid = make_grid(DEFAULT_N_AZ, DEFAULT_N_EL, DEFAULT_RADIUS)?;
    let poses = sample_gait_poses(&base, DEFAULT_POSES, derive(seed, 0));
    let data = generate_dataset(&base, &poses, &grid, &DetectorParams::default(), ObservationPolicy::UniformRandom, DEFAULT_LABEL_TRIALS, derive(seed, 1))?;
    train(&data.pairs, &TrainConfig { seed: derive(seed, 2), ..Default::default() })
}
