//! Training and evaluation of spectral operator networks.

pub mod adam;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::{Schedule, TrainConfig};
pub use error::{Result, TrainError};
pub use gradcheck::{gradient_check, gradient_check_with, GradCheckReport};
pub use loss::{relative_l2, relative_l2_per_sample, relative_l2_tape};
pub use trainer::{evaluate, split_indices, train, train_split, EpochRecord, TrainReport};
