//! Action recognition with a self-supervised motion-segmentation side task:
//! model, synthetic data, training, evaluation and the ablation harness.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod optim;
pub mod preprocess;
pub mod synth;
pub mod train;

pub use config::Config;
pub use error::{CoreError, Result};
