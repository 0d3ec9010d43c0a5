//! Learnable image-resolution machinery: per-image scale-factor
//! prediction trained by a boundary-driven scale loss and a
//! Wasserstein distribution loss over a learnable Beta density.
//!
//! The numeric modules are generic over the scalar type ([`Scalar`]:
//! `f32`/`f64`) and over [`Real`], which is implemented both by plain
//! scalars and by tape variables ([`autodiff::Var`]). Every loss is
//! written once and evaluated either way. The aliases below fix the
//! scalar to `f64` or `f32`.

// Validation is written as `!(x > 0.0)` on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod losses;
pub mod predictor;
mod scalar;
pub mod scale;
pub mod simulator;
pub mod verify;

pub use scalar::{logistic, Real, Scalar};

pub type ScaleConfig64 = scale::ScaleConfig<f64>;
pub type ScaleConfig32 = scale::ScaleConfig<f32>;
pub type Boundaries64 = scale::Boundaries<f64>;
pub type Boundaries32 = scale::Boundaries<f32>;
pub type BetaParams64 = losses::BetaParams<f64>;
pub type BetaParams32 = losses::BetaParams<f32>;
pub type BinEdges64 = losses::BinEdges<f64>;
pub type BinEdges32 = losses::BinEdges<f32>;
pub type Histogram64 = losses::Histogram<f64>;
pub type Histogram32 = losses::Histogram<f32>;
pub type ObjectLossRecord64 = losses::ObjectLossRecord<f64>;
pub type Tape64 = autodiff::Tape<f64>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Var64<'t> = autodiff::Var<'t, f64>;
pub type PredictorParams64 = predictor::PredictorParams<f64>;
pub type PredictorParams32 = predictor::PredictorParams<f32>;
