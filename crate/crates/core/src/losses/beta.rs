use num_traits::{Float, One, Zero};
use crate::losses::{BinEdges, Histogram, LossError};
use crate::scalar::{Real, Scalar};
use crate::scale::Boundaries;

/// Shape parameters of a Beta distribution over normalized object area.
#[derive(Debug, Clone, Copy)]
pub struct BetaParams<R> {
    pub alpha: R,
    pub beta: R,
}

impl<R: Real> BetaParams<R> {
    pub fn new(alpha: R, beta: R) -> Result<Self, LossError> {
        let p = Self { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    /// `(exp(log_alpha), exp(log_beta))`, positive by construction.
    pub fn from_log(log_alpha: R, log_beta: R) -> Result<Self, LossError> {
        Self::new(log_alpha.exp(), log_beta.exp())
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let (a, b) = (self.alpha.value(), self.beta.value());
        if a > R::Base::zero() && b > R::Base::zero() && a.is_finite() && b.is_finite() {
            Ok(())
        } else {
            Err(LossError::InvalidParameter {
                alpha: a.to_f64_lossy(),
                beta: b.to_f64_lossy(),
            })
        }
    }

    pub fn detach(&self) -> BetaParams<R::Base> {
        BetaParams {
            alpha: self.alpha.value(),
            beta: self.beta.value(),
        }
    }
}

/// Closed-form mean and standard deviation.
pub fn beta_moments<T: Scalar>(params: &BetaParams<T>) -> Result<(T, T), LossError> {
    params.validate()?;
    let (a, b) = (params.alpha, params.beta);
    let s = a + b;
    let mean = a / s;
    let var = a * b / (s * s * (s + T::one()));
    Ok((mean, var.sqrt()))
}

/// Boundaries at `μ ∓ σ`, with the lower one floored at zero.
pub fn boundaries_from_beta<T: Scalar>(params: &BetaParams<T>) -> Result<Boundaries<T>, LossError> {
    let (mean, std) = beta_moments(params)?;
    Ok(Boundaries::new((mean - std).max(T::zero()), mean + std)?)
}

/// Beta density discretized on `edges` by midpoint quadrature: mass of
/// bin `k` is proportional to `pdf(center_k) · width_k`, then normalized.
///
/// The normalizing constant `B(α, β)` cancels, so only `exp`, `ln` and
/// arithmetic appear and the masses stay differentiable in `(α, β)`.
pub fn beta_pdf_histogram<R: Real>(
    params: &BetaParams<R>,
    edges: &BinEdges<R::Base>,
) -> Result<Histogram<R>, LossError> {
    params.validate()?;
    if edges.bins() < 2 {
        return Err(LossError::InvalidEdges);
    }
    let one = R::Base::one();
    let mut log_mass = Vec::with_capacity(edges.bins());
    for k in 0..edges.bins() {
        let c = edges.center(k);
        let ln_c = Float::ln(c);
        let ln_1mc = Float::ln(one - c);
        let offset = Float::ln(edges.width(k)) - ln_c - ln_1mc;
        // (α − 1) ln c + (β − 1) ln(1 − c) + ln w
        log_mass.push(params.alpha * ln_c + params.beta * ln_1mc + offset);
    }
    let peak = log_mass
        .iter()
        .map(|l| l.value())
        .fold(R::Base::neg_infinity(), Float::max);
    let unnormalized: Vec<R> = log_mass.into_iter().map(|l| (l - peak).exp()).collect();
    let total = R::sum(&unnormalized).expect("at least two bins");
    let masses = unnormalized.into_iter().map(|m| m / total).collect();
    Ok(Histogram::from_parts_unchecked(edges.clone(), masses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    fn params(a: f64, b: f64) -> BetaParams<f64> {
        BetaParams::new(a, b).unwrap()
    }

    #[test]
    fn uniform_beta_gives_equal_masses() {
        let e = BinEdges::uniform(8).unwrap();
        let h = beta_pdf_histogram(&params(1.0, 1.0), &e).unwrap();
        for &m in h.masses() {
            assert!((m - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_beta_is_symmetric() {
        let e = BinEdges::uniform(10).unwrap();
        let h = beta_pdf_histogram(&params(2.0, 2.0), &e).unwrap();
        let m = h.masses();
        for k in 0..5 {
            assert!((m[k] - m[9 - k]).abs() < 1e-14);
        }
    }

    #[test]
    fn moments_examples() {
        let (m, s) = beta_moments(&params(2.0, 2.0)).unwrap();
        assert_eq!(m, 0.5);
        assert!((s - 0.223_606_797_749_979).abs() < 1e-14);
        let (m, s) = beta_moments(&params(1.0, 1.0)).unwrap();
        assert_eq!(m, 0.5);
        assert!((s - 0.288_675_134_594_812_9).abs() < 1e-14);
        // mpmath: sqrt(10/392) = 0.15971914124998497831...
        let (m, s) = beta_moments(&params(2.0, 5.0)).unwrap();
        assert!((m - 2.0 / 7.0).abs() < 1e-15);
        assert!((s - 0.159_719_141_249_984_98).abs() < 1e-14);
    }

    #[test]
    fn boundary_examples() {
        let b = boundaries_from_beta(&params(2.0, 2.0)).unwrap();
        assert!((b.lower - 0.276_393_202_250_021).abs() < 1e-14);
        assert!((b.upper - 0.723_606_797_749_979).abs() < 1e-14);
        let b = boundaries_from_beta(&params(1.0, 1.0)).unwrap();
        assert!((b.lower - 0.211_324_865_405_187_1).abs() < 1e-14);
        assert!((b.upper - 0.788_675_134_594_812_9).abs() < 1e-14);
        let b = boundaries_from_beta(&params(0.2, 20.0)).unwrap();
        assert_eq!(b.lower, 0.0);
        assert!(b.upper > 0.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(BetaParams::new(0.0, 1.0).is_err());
        assert!(BetaParams::new(1.0, -2.0).is_err());
        assert!(BetaParams::new(f64::NAN, 1.0).is_err());
        let bad = BetaParams { alpha: -1.0, beta: 1.0 };
        assert!(beta_moments(&bad).is_err());
        assert!(boundaries_from_beta(&bad).is_err());
        assert!(beta_pdf_histogram(&bad, &BinEdges::uniform(4).unwrap()).is_err());
        assert!(beta_pdf_histogram(&params(2.0, 2.0), &BinEdges::uniform(1).unwrap()).is_err());
    }

    #[test]
    fn extreme_shapes_stay_finite() {
        let e = BinEdges::uniform(32).unwrap();
        for (a, b) in [(500.0, 2.0), (0.05, 0.05), (1e-3, 800.0)] {
            let h = beta_pdf_histogram(&params(a, b), &e).unwrap();
            let total: f64 = h.masses().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(h.masses().iter().all(|m| m.is_finite()));
        }
    }

    #[test]
    fn log_parameterization_carries_gradients() {
        let tape = Tape::new();
        let la = tape.var(0.5f64);
        let lb = tape.var(1.0f64);
        let p = BetaParams::from_log(la, lb).unwrap();
        let e = BinEdges::uniform(16).unwrap();
        let h = beta_pdf_histogram(&p, &e).unwrap();
        // Mass in the first bin shrinks as α grows.
        h.masses()[0].backward();
        assert!(la.grad() < 0.0);
    }
}
