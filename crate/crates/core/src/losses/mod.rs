//! Scale loss, distribution loss and their building blocks.

mod beta;
mod distribution;
mod histogram;
mod scale_loss;
mod wasserstein;
mod weighting;
mod xi;

use thiserror::Error;

use crate::autodiff::DomainError;
use crate::scale::ScaleError;

pub use beta::{beta_moments, beta_pdf_histogram, boundaries_from_beta, BetaParams};
pub use distribution::{
    distribution_loss, lpf, smoothed_target, target_distribution, DistributionLoss,
    DistributionSettings, ObjectLossRecord, SmoothedTarget, TargetForm, DEFAULT_BINS,
    DEFAULT_LAMBDA_BASE,
};
pub use histogram::{BinEdges, Histogram, MASS_TOLERANCE};
pub use scale_loss::{
    bce, scale_loss_batch, scale_loss_object, BoxSize, ImageScaleInput, ScaleLossSettings,
    DEFAULT_BCE_EPSILON,
};
pub use wasserstein::wasserstein_1d;
pub use weighting::{weighted_total_loss, Coupling, LossTerms, LossWeights, WeightedLoss};
pub use xi::{tie_break_keys, xi_correlation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("invalid Beta parameters alpha={alpha}, beta={beta}")]
    InvalidParameter { alpha: f64, beta: f64 },
    #[error("every image in the batch is empty")]
    EmptyBatch,
    #[error("target distribution has zero total mass")]
    DegenerateTarget,
    #[error("histograms are defined on different bins")]
    IncompatibleSupport,
    #[error("need at least two samples, got {0}")]
    InsufficientData(usize),
    #[error("bin edges must be strictly ascending inside [0, 1]")]
    InvalidEdges,
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("negative or NaN mass")]
    NegativeMass,
    #[error("masses sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("invalid loss record: area {area} must lie in (0, 1) and loss {loss} must be finite and >= 0")]
    InvalidRecord { area: f64, loss: f64 },
    #[error("non-finite input")]
    NonFinite,
}
