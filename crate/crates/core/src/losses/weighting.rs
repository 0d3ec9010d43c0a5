use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::scalar::{Real, Scalar};

/// Base loss weights. `scale` and `dist` are multiplied by the detached
/// detection-loss magnitude before use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights<T> {
    pub cls: T,
    pub loc: T,
    pub scale: T,
    pub dist: T,
}

impl<T: Scalar> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            cls: T::one(),
            loc: T::one(),
            scale: T::one(),
            dist: T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossTerms<R> {
    pub cls: R,
    pub loc: R,
    pub scale: R,
    pub dist: R,
}

/// Batch means of the detection losses, used without gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling<T> {
    pub cls_mean: T,
    pub loc_mean: T,
}

impl<T: Scalar> Coupling<T> {
    pub fn detached<R: Real<Base = T>>(terms: &LossTerms<R>) -> Self {
        Self {
            cls_mean: terms.cls.value(),
            loc_mean: terms.loc.value(),
        }
    }

    pub fn magnitude(&self) -> T {
        self.cls_mean + self.loc_mean
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WeightedLoss<R: Real> {
    pub total: R,
    pub lambda_scale: R::Base,
    pub lambda_dist: R::Base,
}

/// `λ_cls L_cls + λ_loc L_loc + λ_scale L_scale + λ_dist L_dist` where
/// `λ_{scale,dist} = (L̄'_cls + L̄'_loc) · base`.
///
/// A term whose effective weight is zero is left out altogether, so a
/// non-finite value there cannot leak into the total.
pub fn weighted_total_loss<R: Real>(
    terms: &LossTerms<R>,
    coupling: Coupling<R::Base>,
    weights: &LossWeights<R::Base>,
) -> WeightedLoss<R> {
    let magnitude = coupling.magnitude();
    let lambda_scale = magnitude * weights.scale;
    let lambda_dist = magnitude * weights.dist;
    let mut total = terms.cls * weights.cls + terms.loc * weights.loc;
    if lambda_scale != R::Base::zero() {
        total = total + terms.scale * lambda_scale;
    }
    if lambda_dist != R::Base::zero() {
        total = total + terms.dist * lambda_dist;
    }
    WeightedLoss {
        total,
        lambda_scale,
        lambda_dist,
    }
}
