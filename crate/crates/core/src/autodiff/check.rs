//! Central finite-difference verification of tape gradients.

use crate::autodiff::Tape;
use crate::scalar::{Real, Scalar};

/// A scalar function of a parameter vector that can be evaluated on
/// plain scalars (for finite differences) and on tape variables (for the
/// analytic gradient).
pub trait Objective<T: Scalar> {
    type Error;

    fn eval<R: Real<Base = T>>(&self, params: &[R]) -> Result<R, Self::Error>;

    /// Distance from `params` to the nearest non-differentiable point,
    /// measured along any coordinate axis. `None` means smooth everywhere.
    fn kink_distance(&self, _params: &[T]) -> Option<T> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig<T> {
    pub step: T,
    pub tolerance: T,
    /// Denominator floor of the relative error, so that gradients that are
    /// zero up to finite-difference noise do not blow it up.
    pub abs_floor: T,
    /// Points closer than `kink_margin` to a kink are excluded.
    pub kink_margin: T,
}

impl<T: Scalar> Default for GradCheckConfig<T> {
    fn default() -> Self {
        Self {
            step: T::lit(1e-5),
            tolerance: T::lit(1e-4),
            abs_floor: T::lit(1e-6),
            kink_margin: T::lit(1e-3),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport<T> {
    pub value: T,
    pub analytic: Vec<T>,
    pub numeric: Vec<T>,
    pub max_rel_error: T,
    /// Coordinate achieving `max_rel_error`.
    pub worst: usize,
    /// The point sat within the kink margin and was not compared.
    pub excluded: bool,
    pub passed: bool,
}

/// Relative error with a denominator floor.
pub fn relative_error<T: Scalar>(a: T, b: T, floor: T) -> T {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Value and gradient of `obj` at `point`, from one tape pass.
pub fn tape_gradient<T: Scalar, O: Objective<T>>(
    obj: &O,
    point: &[T],
) -> Result<(T, Vec<T>), O::Error> {
    let tape = Tape::new();
    let vars = tape.vars(point);
    let out = obj.eval(&vars)?;
    out.backward();
    Ok((out.data(), vars.iter().map(|v| v.grad()).collect()))
}

/// Central differences `(f(p + h e_i) − f(p − h e_i)) / 2h`.
pub fn central_differences<T: Scalar, O: Objective<T>>(
    obj: &O,
    point: &[T],
    step: T,
) -> Result<Vec<T>, O::Error> {
    let two_h = step + step;
    let mut probe = point.to_vec();
    let mut out = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        probe[i] = point[i] + step;
        let up = obj.eval(&probe)?;
        probe[i] = point[i] - step;
        let down = obj.eval(&probe)?;
        probe[i] = point[i];
        out.push((up - down) / two_h);
    }
    Ok(out)
}

pub fn check_gradients<T: Scalar, O: Objective<T>>(
    obj: &O,
    point: &[T],
    cfg: &GradCheckConfig<T>,
) -> Result<GradCheckReport<T>, O::Error> {
    let (value, analytic) = tape_gradient(obj, point)?;
    let excluded = obj
        .kink_distance(point)
        .is_some_and(|d| d < cfg.kink_margin);
    if excluded {
        return Ok(GradCheckReport {
            value,
            numeric: Vec::new(),
            analytic,
            max_rel_error: T::zero(),
            worst: 0,
            excluded: true,
            passed: true,
        });
    }
    let numeric = central_differences(obj, point, cfg.step)?;
    let (worst, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n, cfg.abs_floor))
        .enumerate()
        .fold((0, T::zero()), |(wi, wv), (i, e)| {
            // NaN counts as the worst possible error.
            if e > wv || e.is_nan() && !wv.is_nan() {
                (i, e)
            } else {
                (wi, wv)
            }
        });
    let passed = max_rel_error < cfg.tolerance;
    Ok(GradCheckReport {
        value,
        analytic,
        numeric,
        max_rel_error,
        worst,
        excluded: false,
        passed,
    })
}
