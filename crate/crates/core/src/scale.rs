//! Scale-factor range arithmetic, the boundary-driven target sigmoid, and
//! resolution rounding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{logistic, Real, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScaleError {
    #[error("invalid scale range: need 0 < tau_min ({tau_min}) < tau_max ({tau_max})")]
    InvalidRange { tau_min: f64, tau_max: f64 },
    #[error("invalid boundaries: need 0 <= lower ({lower}) < upper ({upper})")]
    InvalidBoundaries { lower: f64, upper: f64 },
    #[error("steepness must be positive and finite, got {0}")]
    InvalidSteepness(f64),
    #[error("object extent and reference area must be positive, got {0}")]
    InvalidArea(f64),
}

/// Lower scale threshold used by every preset.
pub const DEFAULT_TAU_MIN: f64 = 0.2;

/// `ln 99`: the target reads 0.99 / 0.5 / 0.01 at the lower boundary, the
/// midpoint and the upper boundary.
pub fn default_steepness<T: Scalar>() -> T {
    T::lit(99.0).ln()
}

/// Range `[tau_min, tau_max]` of admissible scale factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleConfig<T> {
    tau_min: T,
    tau_max: T,
}

impl<T: Scalar> ScaleConfig<T> {
    pub fn new(tau_min: T, tau_max: T) -> Result<Self, ScaleError> {
        if !(tau_min > T::zero() && tau_max > tau_min && tau_max.is_finite()) {
            return Err(ScaleError::InvalidRange {
                tau_min: tau_min.to_f64_lossy(),
                tau_max: tau_max.to_f64_lossy(),
            });
        }
        Ok(Self { tau_min, tau_max })
    }

    pub fn from_preset(preset: Preset) -> Self {
        Self {
            tau_min: T::lit(DEFAULT_TAU_MIN),
            tau_max: T::lit(preset.tau_max()),
        }
    }

    pub fn tau_min(&self) -> T {
        self.tau_min
    }

    pub fn tau_max(&self) -> T {
        self.tau_max
    }

    pub fn width(&self) -> T {
        self.tau_max - self.tau_min
    }

    /// `tau_min / tau_max`, the smallest reachable up-scaling probability.
    pub fn min_ratio(&self) -> T {
        self.tau_min / self.tau_max
    }
}

/// Model-size ladder: `tau_max` from 1.25 to 2.25 in steps of 0.25.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    S,
    M,
    B,
    L,
    H,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::S, Preset::M, Preset::B, Preset::L, Preset::H];

    pub fn tau_max(self) -> f64 {
        match self {
            Preset::S => 1.25,
            Preset::M => 1.50,
            Preset::B => 1.75,
            Preset::L => 2.00,
            Preset::H => 2.25,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Preset::S => "S",
            Preset::M => "M",
            Preset::B => "B",
            Preset::L => "L",
            Preset::H => "H",
        };
        f.write_str(s)
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S" => Ok(Preset::S),
            "M" => Ok(Preset::M),
            "B" => Ok(Preset::B),
            "L" => Ok(Preset::L),
            "H" => Ok(Preset::H),
            other => Err(format!("unknown preset {other:?}, expected one of S, M, B, L, H")),
        }
    }
}

/// Normalized object-area thresholds where the up-scaling target saturates
/// at 1 (below `lower`) and 0 (above `upper`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundaries<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> Boundaries<T> {
    pub fn new(lower: T, upper: T) -> Result<Self, ScaleError> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), ScaleError> {
        if self.lower >= T::zero() && self.upper > self.lower && self.upper.is_finite() {
            Ok(())
        } else {
            Err(ScaleError::InvalidBoundaries {
                lower: self.lower.to_f64_lossy(),
                upper: self.upper.to_f64_lossy(),
            })
        }
    }

    pub fn midpoint(&self) -> T {
        (self.lower + self.upper) / T::lit(2.0)
    }

    pub fn half_width(&self) -> T {
        (self.upper - self.lower) / T::lit(2.0)
    }
}

/// Image size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Resolution {
    pub fn new(width: u32, height: u32) -> Option<Self> {
        (width >= 1 && height >= 1).then_some(Self { width, height })
    }

    pub fn area(&self) -> f64 {
        f64::from(self.width) * f64::from(self.height)
    }

    pub fn shorter(&self) -> u32 {
        self.width.min(self.height)
    }
}

/// `max(σ(φ_raw)·τ_max, τ_min)`.
///
/// On the clamped branch the derivative w.r.t. `phi_raw` is 0.
pub fn clamp_scale_factor<R: Real>(phi_raw: R, cfg: &ScaleConfig<R::Base>) -> R {
    (phi_raw.logistic() * cfg.tau_max).max_const(cfg.tau_min)
}

/// Boundary-driven target probability, non-increasing in `area`.
///
/// Outside the boundaries the value saturates (1 below `lower`, 0 above
/// `upper`). Inside, `[lower, upper]` is mapped affinely onto `[-1, 1]`
/// and `σ(−steepness·z)` is returned.
pub fn modified_sigmoid<T: Scalar>(
    area: T,
    b: &Boundaries<T>,
    steepness: T,
) -> Result<T, ScaleError> {
    b.validate()?;
    if !(steepness > T::zero() && steepness.is_finite()) {
        return Err(ScaleError::InvalidSteepness(steepness.to_f64_lossy()));
    }
    if area > b.upper {
        return Ok(T::zero());
    }
    if area < b.lower {
        return Ok(T::one());
    }
    let z = (area - b.midpoint()) / b.half_width();
    Ok(logistic(-steepness * z))
}

/// Target up-scaling probability of one ground-truth box.
pub fn target_up_probability<T: Scalar>(
    width: T,
    height: T,
    b: &Boundaries<T>,
    area_ref: T,
    steepness: T,
) -> Result<T, ScaleError> {
    for v in [width, height, area_ref] {
        if !(v > T::zero() && v.is_finite()) {
            return Err(ScaleError::InvalidArea(v.to_f64_lossy()));
        }
    }
    modified_sigmoid(width * height / area_ref, b, steepness)
}

/// Resizes `res` by `phi`, snapping the shorter side to a multiple of 8.
///
/// The shorter side `phi·s` is rounded to the nearest multiple of 8 (ties
/// to the even multiple, never below 8). The longer side is scaled by the
/// resulting effective factor and rounded to the nearest integer (ties to
/// even). When both sides are equal the width is treated as shorter.
pub fn scale_resolution<T: Scalar>(res: Resolution, phi: T) -> Resolution {
    let phi = phi.to_f64_lossy();
    let width_is_short = res.width <= res.height;
    let (short, long) = if width_is_short {
        (res.width, res.height)
    } else {
        (res.height, res.width)
    };
    let target = phi * f64::from(short) / 8.0;
    let blocks = if target.is_finite() {
        target.round_ties_even().max(1.0)
    } else {
        1.0
    };
    let new_short = blocks * 8.0;
    let new_long = (f64::from(long) * new_short / f64::from(short)).round_ties_even();
    let (new_short, new_long) = (new_short as u32, new_long.max(new_short) as u32);
    if width_is_short {
        Resolution {
            width: new_short,
            height: new_long,
        }
    } else {
        Resolution {
            width: new_long,
            height: new_short,
        }
    }
}

/// Factor actually applied after rounding: new shorter side over old.
pub fn effective_scale(res: Resolution, scaled: Resolution) -> f64 {
    f64::from(scaled.shorter()) / f64::from(res.shorter())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use proptest::prelude::*;

    fn cfg(tmin: f64, tmax: f64) -> ScaleConfig<f64> {
        ScaleConfig::new(tmin, tmax).unwrap()
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_scale_factor(0.0, &cfg(0.2, 1.5)), 0.75);
        assert_eq!(clamp_scale_factor(-3.0, &cfg(0.2, 1.5)), 0.2);
        // mpmath: 2.25 / (1 + e^-2) = 1.98179342545023549913...
        let v = clamp_scale_factor(2.0, &cfg(0.2, 2.25));
        assert!((v - 1.981_793_425_450_235_5).abs() < 1e-14, "{v}");
    }

    #[test]
    fn clamp_gradient_flat_on_clamped_branch() {
        let tape = Tape::new();
        let raw = tape.var(-3.0);
        clamp_scale_factor(raw, &cfg(0.2, 1.5)).backward();
        assert_eq!(raw.grad(), 0.0);
        let raw = tape.var(0.0);
        clamp_scale_factor(raw, &cfg(0.2, 1.5)).backward();
        assert_eq!(raw.grad(), 0.25 * 1.5);
    }

    #[test]
    fn config_validation() {
        assert!(ScaleConfig::new(0.0, 1.0).is_err());
        assert!(ScaleConfig::new(1.0, 1.0).is_err());
        assert!(ScaleConfig::new(1.5, 1.0).is_err());
        assert!(ScaleConfig::new(0.2, f64::INFINITY).is_err());
        let c = ScaleConfig::<f64>::from_preset(Preset::M);
        assert_eq!((c.tau_min(), c.tau_max()), (0.2, 1.5));
        assert!(c.min_ratio() > 0.0 && c.min_ratio() < 1.0);
    }

    #[test]
    fn presets_parse_and_ladder() {
        let ladder: Vec<f64> = Preset::ALL.iter().map(|p| p.tau_max()).collect();
        assert_eq!(ladder, vec![1.25, 1.5, 1.75, 2.0, 2.25]);
        assert_eq!("h".parse::<Preset>().unwrap(), Preset::H);
        assert!("X".parse::<Preset>().is_err());
        assert_eq!(Preset::B.to_string(), "B");
    }

    #[test]
    fn modified_sigmoid_examples() {
        let b = Boundaries::new(0.2, 0.6).unwrap();
        let k = default_steepness::<f64>();
        assert!((modified_sigmoid(0.4, &b, k).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(modified_sigmoid(0.61, &b, k).unwrap(), 0.0);
        assert_eq!(modified_sigmoid(0.19, &b, k).unwrap(), 1.0);
        assert!((modified_sigmoid(0.2, &b, k).unwrap() - 0.99).abs() < 1e-12);
        assert!((modified_sigmoid(0.6, &b, k).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn degenerate_boundaries_rejected() {
        let b = Boundaries { lower: 0.3, upper: 0.3 };
        assert!(matches!(
            modified_sigmoid(0.3, &b, 1.0),
            Err(ScaleError::InvalidBoundaries { .. })
        ));
        assert!(Boundaries::new(0.5, 0.4).is_err());
        assert!(Boundaries::new(-0.1, 0.4).is_err());
        let ok = Boundaries::new(0.0, 0.4).unwrap();
        assert!(modified_sigmoid(0.1, &ok, 0.0).is_err());
    }

    #[test]
    fn target_examples() {
        let b = Boundaries::new(0.1, 0.5).unwrap();
        let k = default_steepness();
        assert_eq!(target_up_probability(1.0, 1.0, &b, 1e9, k).unwrap(), 1.0);
        assert_eq!(target_up_probability(100.0, 100.0, &b, 1e4, k).unwrap(), 0.0);
        // 0.3 · 1e4 = 3000 = 60 · 50
        let mid = target_up_probability(60.0, 50.0, &b, 1e4, k).unwrap();
        assert!((mid - 0.5).abs() < 1e-12);
        assert!(target_up_probability(0.0, 5.0, &b, 1.0, k).is_err());
        assert!(target_up_probability(1.0, 5.0, &b, -1.0, k).is_err());
    }

    #[test]
    fn resolution_examples() {
        let r = Resolution::new(600, 1000).unwrap();
        assert_eq!(scale_resolution(r, 1.0), r);
        assert_eq!(scale_resolution(r, 0.2), Resolution { width: 120, height: 200 });
        assert_eq!(scale_resolution(r, 1.37), Resolution { width: 824, height: 1373 });
        // Landscape orientation is preserved.
        let l = Resolution::new(1000, 600).unwrap();
        assert_eq!(scale_resolution(l, 1.37), Resolution { width: 1373, height: 824 });
        assert!(Resolution::new(0, 4).is_none());
    }

    #[test]
    fn resolution_ties_go_to_even_multiple() {
        // 0.5 · 600 / 8 = 37.5 blocks -> 38 blocks (even) -> 304.
        let r = Resolution::new(600, 600).unwrap();
        assert_eq!(scale_resolution(r, 0.5).width, 304);
        // 100 · 0.2 / 8 = 2.5 -> 2 blocks -> 16.
        let r = Resolution::new(100, 150).unwrap();
        assert_eq!(scale_resolution(r, 0.2).width, 16);
        // Never below 8.
        assert_eq!(scale_resolution(Resolution::new(10, 30).unwrap(), 0.01).width, 8);
        assert_eq!(effective_scale(r, scale_resolution(r, 0.2)), 0.16);
    }

    proptest! {
        #[test]
        fn clamp_range_and_monotone(a in -50.0f64..50.0, d in 0.0f64..10.0, tmax in 1.0f64..3.0) {
            let c = cfg(0.2, tmax);
            let lo = clamp_scale_factor(a, &c);
            let hi = clamp_scale_factor(a + d, &c);
            prop_assert!(lo >= 0.2 && lo <= tmax);
            prop_assert!(hi >= lo);
        }

        #[test]
        fn modified_sigmoid_is_monotone(l in 0.0f64..0.5, w in 0.01f64..0.5, a in 0.0f64..1.0, d in 0.0f64..0.5) {
            let b = Boundaries::new(l, l + w).unwrap();
            let k = default_steepness();
            let y0 = modified_sigmoid(a, &b, k).unwrap();
            let y1 = modified_sigmoid(a + d, &b, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&y0));
            prop_assert!(y1 <= y0);
        }

        #[test]
        fn target_symmetric_in_width_height(w in 1.0f64..500.0, h in 1.0f64..500.0) {
            let b = Boundaries::new(0.05, 0.3).unwrap();
            let k = default_steepness();
            let area_ref = 600.0 * 800.0;
            prop_assert_eq!(
                target_up_probability(w, h, &b, area_ref, k).unwrap(),
                target_up_probability(h, w, &b, area_ref, k).unwrap()
            );
        }

        #[test]
        fn unit_scale_is_identity_on_aligned(blocks in 1u32..200, long_extra in 0u32..800) {
            let r = Resolution::new(blocks * 8, blocks * 8 + long_extra).unwrap();
            prop_assert_eq!(scale_resolution(r, 1.0), r);
        }
    }
}
