//! The pose-error autoencoder: normalized 2D keypoints in, predicted
//! per-view error field out.

mod dataset;
mod net;
mod robustness;
mod train;

pub use dataset::{generate_dataset, read_dataset, sample_gait_poses, write_dataset, Dataset, ObservationPolicy};
pub use net::{data_loss, loss_and_grad, read_net, softplus, write_net, DatasetPair, PerceptionNet, DEFAULT_LAYERS};
pub use robustness::{
    perturb_frame, perturb_robustness, synthetic_frames, Application, Level, PerturbMode, RobustnessReport, ROBUSTNESS_BINS, ROBUSTNESS_FRAMES,
};
pub use train::{split_indices, train, EpochLoss, TrainConfig, TrainResult, MOMENTUM};
