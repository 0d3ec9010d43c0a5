//! Synthetic scenes, a detection-loss oracle standing in for the detector,
//! and the joint training loop.
//!
//! The simulator runs in `f64`; the generic machinery it drives is
//! exercised in other precisions by its own tests.

mod evaluate;
mod oracle;
mod scene;
mod train;

use thiserror::Error;

use crate::losses::LossError;
use crate::predictor::PredictorError;
use crate::scale::ScaleError;

pub use evaluate::{evaluate, pearson, predict_all, EvalConfig, EvalMetrics, PhiHistogram, SizeBucket};
pub use oracle::{oracle_loss, OracleConfig};
pub use scene::{
    format_dataset, format_scene, generate_dataset, mean_std, parse_dataset, parse_scene,
    scene_features, DatasetConfig, Scene, SceneObject,
};
pub use train::{beta_state, train, BoundaryPoint, IterationRecord, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("dataset parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged {
        iteration: usize,
        reason: String,
        report: Box<TrainReport>,
    },
}
