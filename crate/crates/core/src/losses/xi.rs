use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::losses::LossError;
use crate::scalar::Scalar;

/// Random keys used to order tied `x` values; element `i` gets `keys[i]`.
pub fn tie_break_keys(n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random()).collect()
}

/// Chatterjee's rank correlation `ξ_n(x, y)`.
///
/// Pairs are ordered by `x`, with ties in `x` broken by
/// [`tie_break_keys`]. With `r_i = #{j : y_j ≤ y_i}` and
/// `l_i = #{j : y_j ≥ y_i}` the result is
/// `1 − n Σ|r_{i+1} − r_i| / (2 Σ l_i (n − l_i))`, which reduces to
/// `1 − 3 Σ|r_{i+1} − r_i| / (n² − 1)` without ties in `y`. Numerator and
/// denominator are accumulated as integers so the final value is a single
/// correctly rounded division. A constant `y` carries no information and
/// yields 0.
pub fn xi_correlation<T: Scalar>(x: &[T], y: &[T], tie_seed: u64) -> Result<T, LossError> {
    if x.len() != y.len() {
        return Err(LossError::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(LossError::InsufficientData(n));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(LossError::NonFinite);
    }
    let keys = tie_break_keys(n, tie_seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| x[i].partial_cmp(&x[j]).expect("finite").then(keys[i].cmp(&keys[j])));

    let mut sorted_y = y.to_vec();
    sorted_y.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let rank_le = |v: T| sorted_y.partition_point(|&s| s <= v) as i128;
    let rank_ge = |v: T| (n - sorted_y.partition_point(|&s| s < v)) as i128;

    let ranks: Vec<i128> = order.iter().map(|&i| rank_le(y[i])).collect();
    let jumps: i128 = ranks.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let n_i = n as i128;
    let spread: i128 = y.iter().map(|&v| {
        let l = rank_ge(v);
        l * (n_i - l)
    }).sum();
    if spread == 0 {
        return Ok(T::zero());
    }
    let den = 2 * spread;
    let num = den - n_i * jumps;
    let to_t = |v: i128| <T as num_traits::NumCast>::from(v).expect("i128 fits a float");
    Ok(to_t(num) / to_t(den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn increasing_and_decreasing_give_n_minus_2_over_n_plus_1() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let up: Vec<f64> = x.iter().map(|v| v * v + 1.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(xi_correlation(&x, &up, 1).unwrap(), 8.0 / 11.0);
        assert_eq!(xi_correlation(&x, &down, 1).unwrap(), 8.0 / 11.0);
    }

    #[test]
    fn independent_samples_are_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let xi = xi_correlation(&x, &y, 5).unwrap();
        assert!(xi.abs() < 0.05, "{xi}");
    }

    #[test]
    fn deterministic_given_seed() {
        let x = [1.0, 1.0, 1.0, 2.0, 2.0, 3.0];
        let y = [0.3, 0.1, 0.2, 0.9, 0.4, 0.5];
        let a = xi_correlation(&x, &y, 42).unwrap();
        assert_eq!(a, xi_correlation(&x, &y, 42).unwrap());
        assert!((-0.5..=1.0).contains(&a));
    }

    #[test]
    fn errors_and_degenerate_inputs() {
        assert!(matches!(xi_correlation(&[1.0], &[2.0], 0), Err(LossError::InsufficientData(1))));
        assert!(xi_correlation(&[1.0, 2.0], &[2.0], 0).is_err());
        assert!(xi_correlation(&[1.0, f64::NAN], &[2.0, 1.0], 0).is_err());
        assert_eq!(xi_correlation(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0], 0).unwrap(), 0.0);
    }

    #[test]
    fn ties_in_y_use_general_denominator() {
        // y has ties; x strictly increasing; y a function of x -> ξ = 1 − n S / (2 Σ l(n−l))
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 0.0, 1.0, 1.0];
        // r = (2, 2, 4, 4), S = 2; l = (4, 4, 2, 2), Σ l(n−l) = 0 + 0 + 4 + 4 = 8
        // ξ = 1 − 4·2 / 16 = 0.5
        assert_eq!(xi_correlation(&x, &y, 3).unwrap(), 0.5);
    }
}
