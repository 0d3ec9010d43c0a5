use num_traits::{Float, One, Zero};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::losses::{
    beta_pdf_histogram, wasserstein_1d, xi_correlation, BetaParams, BinEdges, Histogram,
    LossError,
};
use crate::scalar::{Real, Scalar};

/// Normalized area of one object and the detection loss it incurred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectLossRecord<T> {
    pub area: T,
    pub loss: T,
}

impl<T: Scalar> ObjectLossRecord<T> {
    pub fn new(area: T, loss: T) -> Result<Self, LossError> {
        let r = Self { area, loss };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let area_ok = self.area > T::zero() && self.area < T::one();
        let loss_ok = self.loss >= T::zero() && self.loss.is_finite();
        if area_ok && loss_ok {
            Ok(())
        } else {
            Err(LossError::InvalidRecord {
                area: self.area.to_f64_lossy(),
                loss: self.loss.to_f64_lossy(),
            })
        }
    }
}

/// How per-object losses become target weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetForm {
    /// `exp(−loss)`: detectable likelihood.
    Likelihood,
    /// The raw loss.
    Plain,
}

impl TargetForm {
    pub fn weight<T: Scalar>(self, loss: T) -> T {
        match self {
            TargetForm::Likelihood => Float::exp(-loss),
            TargetForm::Plain => loss,
        }
    }
}

impl fmt::Display for TargetForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetForm::Likelihood => "likelihood",
            TargetForm::Plain => "plain",
        })
    }
}

impl FromStr for TargetForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "likelihood" | "l" => Ok(TargetForm::Likelihood),
            "plain" | "p" => Ok(TargetForm::Plain),
            other => Err(format!("unknown target form {other:?}, expected likelihood or plain")),
        }
    }
}

/// Per-bin sum of record weights, divided by the grand total.
pub fn target_distribution<T: Scalar>(
    records: &[ObjectLossRecord<T>],
    edges: &BinEdges<T>,
    form: TargetForm,
) -> Result<Histogram<T>, LossError> {
    if records.is_empty() {
        return Err(LossError::InsufficientData(0));
    }
    let mut sums = vec![T::zero(); edges.bins()];
    for r in records {
        r.validate()?;
        let k = edges.bin_of(r.area);
        sums[k] = sums[k] + form.weight(r.loss);
    }
    Histogram::from_weights(edges.clone(), sums)
}

/// `λ·x′ + (1 − λ)·x`, renormalized; `λ` is clamped to `[0, 1]`.
///
/// The endpoints return the corresponding input unchanged.
pub fn lpf<R: Real>(
    lambda: R::Base,
    x_prime: &Histogram<R>,
    x: &Histogram<R>,
) -> Result<Histogram<R>, LossError> {
    x_prime.same_support(x.edges())?;
    let zero = R::Base::zero();
    let one = R::Base::one();
    let lambda = if lambda.is_nan() { zero } else { lambda.max(zero).min(one) };
    if lambda == one {
        return Ok(x_prime.clone());
    }
    if lambda == zero {
        return Ok(x.clone());
    }
    let blended = x_prime
        .masses()
        .iter()
        .zip(x.masses())
        .map(|(&a, &b)| a * lambda + b * (one - lambda))
        .collect();
    Histogram::from_weights(x.edges().clone(), blended)
}

/// Settings shared by [`smoothed_target`] and [`distribution_loss`].
#[derive(Debug, Clone)]
pub struct DistributionSettings<T> {
    pub edges: BinEdges<T>,
    pub form: TargetForm,
    /// Base blend coefficient, scaled by `|ξ|`.
    pub lambda_base: T,
    /// When false the measured target is used as is (blend coefficient 1).
    pub lpf: bool,
    pub tie_seed: u64,
}

impl<T: Scalar> DistributionSettings<T> {
    pub fn new(edges: BinEdges<T>, form: TargetForm) -> Self {
        Self {
            edges,
            form,
            lambda_base: T::lit(DEFAULT_LAMBDA_BASE),
            lpf: true,
            tie_seed: 0,
        }
    }
}

pub const DEFAULT_LAMBDA_BASE: f64 = 0.9;
pub const DEFAULT_BINS: usize = 32;

/// Target after ξ-gated smoothing, with the quantities that produced it.
#[derive(Debug, Clone)]
pub struct SmoothedTarget<R: Real> {
    pub histogram: Histogram<R>,
    /// Target built from the records alone.
    pub measured: Histogram<R::Base>,
    /// ξ between record areas and weights; NaN when it was not needed and
    /// could not be computed (fewer than two records with the filter off).
    pub xi: R::Base,
    /// Effective blend coefficient applied to `measured`.
    pub coefficient: R::Base,
}

/// `LPF(c, T, f)` with `c = clamp(λ_base·|ξ(areas, weights)|, 0, 1)`,
/// `T` the measured target and `f` the current Beta histogram.
///
/// `T` is a constant; `f` keeps its dependence on the Beta parameters.
pub fn smoothed_target<R: Real>(
    records: &[ObjectLossRecord<R::Base>],
    params: &BetaParams<R>,
    settings: &DistributionSettings<R::Base>,
) -> Result<SmoothedTarget<R>, LossError> {
    let beta_hist = beta_pdf_histogram(params, &settings.edges)?;
    smooth_with(records, &beta_hist, settings)
}

fn smooth_with<R: Real>(
    records: &[ObjectLossRecord<R::Base>],
    beta_hist: &Histogram<R>,
    settings: &DistributionSettings<R::Base>,
) -> Result<SmoothedTarget<R>, LossError> {
    let measured = target_distribution(records, &settings.edges, settings.form)?;
    let areas: Vec<R::Base> = records.iter().map(|r| r.area).collect();
    let weights: Vec<R::Base> = records.iter().map(|r| settings.form.weight(r.loss)).collect();
    let xi = match xi_correlation(&areas, &weights, settings.tie_seed) {
        Ok(v) => v,
        Err(LossError::InsufficientData(_)) if !settings.lpf => R::Base::nan(),
        Err(e) => return Err(e),
    };
    let coefficient = if settings.lpf {
        (settings.lambda_base * Float::abs(xi))
            .max(R::Base::zero())
            .min(R::Base::one())
    } else {
        R::Base::one()
    };
    let anchor = beta_hist.masses()[0];
    let histogram = lpf(coefficient, &measured.lift_into(&anchor), beta_hist)?;
    Ok(SmoothedTarget {
        histogram,
        measured,
        xi,
        coefficient,
    })
}

#[derive(Debug, Clone)]
pub struct DistributionLoss<R: Real> {
    pub loss: R,
    pub beta_histogram: Histogram<R>,
    pub target: SmoothedTarget<R>,
}

/// Wasserstein distance between the Beta histogram and the smoothed
/// target.
pub fn distribution_loss<R: Real>(
    records: &[ObjectLossRecord<R::Base>],
    params: &BetaParams<R>,
    settings: &DistributionSettings<R::Base>,
) -> Result<DistributionLoss<R>, LossError> {
    let beta_histogram = beta_pdf_histogram(params, &settings.edges)?;
    let target = smooth_with(records, &beta_histogram, settings)?;
    let loss = wasserstein_1d(&beta_histogram, &target.histogram)?;
    Ok(DistributionLoss {
        loss,
        beta_histogram,
        target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(area: f64, loss: f64) -> ObjectLossRecord<f64> {
        ObjectLossRecord::new(area, loss).unwrap()
    }

    #[test]
    fn record_validation() {
        assert!(ObjectLossRecord::new(0.0, 1.0).is_err());
        assert!(ObjectLossRecord::new(1.0, 1.0).is_err());
        assert!(ObjectLossRecord::new(0.5, -1.0).is_err());
        assert!(ObjectLossRecord::new(0.5, f64::INFINITY).is_err());
    }

    #[test]
    fn single_record_is_point_mass() {
        let e = BinEdges::uniform(4).unwrap();
        let h = target_distribution(&[rec(0.6, 2.0)], &e, TargetForm::Likelihood).unwrap();
        assert_eq!(h.masses(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn equal_losses_split_evenly() {
        let e = BinEdges::uniform(2).unwrap();
        let h = target_distribution(&[rec(0.1, 0.7), rec(0.9, 0.7)], &e, TargetForm::Likelihood)
            .unwrap();
        assert_eq!(h.masses(), &[0.5, 0.5]);
    }

    #[test]
    fn plain_zero_losses_are_degenerate() {
        let e = BinEdges::uniform(2).unwrap();
        let r = target_distribution(&[rec(0.1, 0.0), rec(0.9, 0.0)], &e, TargetForm::Plain);
        assert!(matches!(r, Err(LossError::DegenerateTarget)));
        assert!(target_distribution::<f64>(&[], &e, TargetForm::Plain).is_err());
    }

    #[test]
    fn lpf_examples() {
        let e = BinEdges::<f64>::uniform(2).unwrap();
        let a = Histogram::point_mass(e.clone(), 0).unwrap();
        let b = Histogram::point_mass(e, 1).unwrap();
        assert_eq!(lpf(1.0, &a, &b).unwrap().masses(), a.masses());
        assert_eq!(lpf(0.0, &a, &b).unwrap().masses(), b.masses());
        assert_eq!(lpf(7.0, &a, &b).unwrap().masses(), a.masses());
        let m = lpf(0.3, &a, &b).unwrap();
        assert!((m.masses()[0] - 0.3).abs() < 1e-15);
        assert!((m.masses()[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_returns_beta_histogram() {
        let e = BinEdges::uniform(8).unwrap();
        let p = BetaParams::new(2.0, 3.0).unwrap();
        let recs = [rec(0.1, 0.2), rec(0.5, 1.0), rec(0.7, 0.4)];
        let mut s = DistributionSettings::new(e.clone(), TargetForm::Likelihood);
        s.lambda_base = 0.0;
        let t = smoothed_target(&recs, &p, &s).unwrap();
        let beta = beta_pdf_histogram(&p, &e).unwrap();
        assert_eq!(t.histogram.masses(), beta.masses());
        assert_eq!(t.coefficient, 0.0);
        let d = distribution_loss(&recs, &p, &s).unwrap();
        assert_eq!(d.loss, 0.0);
    }

    #[test]
    fn perfect_dependence_with_unit_lambda_returns_measured() {
        let e = BinEdges::uniform(8).unwrap();
        let p = BetaParams::new(2.0, 3.0).unwrap();
        // Loss strictly increasing in area: ξ = (n − 2)/(n + 1); use enough
        // records that λ_base·|ξ| saturates only with λ_base large.
        let recs: Vec<_> = (1..=20).map(|i| rec(f64::from(i) / 21.0, f64::from(i))).collect();
        let mut s = DistributionSettings::new(e, TargetForm::Plain);
        s.lambda_base = 2.0;
        let t = smoothed_target(&recs, &p, &s).unwrap();
        assert_eq!(t.coefficient, 1.0);
        assert_eq!(t.histogram.masses(), t.measured.masses());
    }

    #[test]
    fn disabled_filter_uses_measured_target() {
        let e = BinEdges::uniform(2).unwrap();
        let p = BetaParams::new(1.0, 1.0).unwrap();
        let mut s = DistributionSettings::new(e, TargetForm::Likelihood);
        s.lpf = false;
        let d = distribution_loss(&[rec(0.2, 0.5)], &p, &s).unwrap();
        assert_eq!(d.loss, 0.25);
        assert!(d.target.xi.is_nan());
        s.lpf = true;
        assert!(distribution_loss(&[rec(0.2, 0.5)], &p, &s).is_err());
    }

    #[test]
    fn form_parsing() {
        assert_eq!("Likelihood".parse::<TargetForm>().unwrap(), TargetForm::Likelihood);
        assert_eq!("plain".parse::<TargetForm>().unwrap(), TargetForm::Plain);
        assert!("mixed".parse::<TargetForm>().is_err());
        assert_eq!(TargetForm::Plain.to_string(), "plain");
    }
}
