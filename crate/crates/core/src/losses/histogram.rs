use num_traits::{Float, One, Zero};
use std::sync::Arc;

use crate::losses::LossError;
use crate::scalar::{Real, Scalar};

/// Strictly ascending bin edges inside `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinEdges<T> {
    edges: Arc<[T]>,
}

impl<T: Scalar> BinEdges<T> {
    pub fn new(edges: Vec<T>) -> Result<Self, LossError> {
        let ascending = edges.windows(2).all(|w| w[0] < w[1]);
        let first_ok = edges.first().is_some_and(|&e| e >= T::zero());
        let last_ok = edges.last().is_some_and(|&e| e <= T::one());
        if edges.len() < 2 || !ascending || !first_ok || !last_ok {
            return Err(LossError::InvalidEdges);
        }
        Ok(Self {
            edges: edges.into(),
        })
    }

    /// `bins` equal-width bins covering `[0, 1]`.
    pub fn uniform(bins: usize) -> Result<Self, LossError> {
        let n = T::from_usize(bins).ok_or(LossError::InvalidEdges)?;
        let edges = (0..=bins)
            .map(|i| T::from_usize(i).map(|i| i / n))
            .collect::<Option<Vec<T>>>()
            .ok_or(LossError::InvalidEdges)?;
        Self::new(edges)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.edges
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn center(&self, k: usize) -> T {
        (self.edges[k] + self.edges[k + 1]) / T::lit(2.0)
    }

    pub fn centers(&self) -> Vec<T> {
        (0..self.bins()).map(|k| self.center(k)).collect()
    }

    pub fn width(&self, k: usize) -> T {
        self.edges[k + 1] - self.edges[k]
    }

    /// Bin containing `x`; bins are half-open except the last, and values
    /// beyond either end fall into the nearest end bin.
    pub fn bin_of(&self, x: T) -> usize {
        let above = self.edges.partition_point(|&e| e <= x);
        above.saturating_sub(1).min(self.bins() - 1)
    }
}

/// Discrete distribution over [`BinEdges`]; masses sum to one.
#[derive(Debug, Clone)]
pub struct Histogram<R: Real> {
    edges: BinEdges<R::Base>,
    masses: Vec<R>,
}

/// Mass tolerance for "sums to one".
pub const MASS_TOLERANCE: f64 = 1e-9;

impl<R: Real> Histogram<R> {
    /// Wraps masses that already sum to one.
    pub fn new(edges: BinEdges<R::Base>, masses: Vec<R>) -> Result<Self, LossError> {
        if masses.len() != edges.bins() {
            return Err(LossError::LengthMismatch {
                expected: edges.bins(),
                found: masses.len(),
            });
        }
        if masses.iter().any(|m| !(m.value() >= R::Base::zero())) {
            return Err(LossError::NegativeMass);
        }
        let total = masses
            .iter()
            .fold(R::Base::zero(), |acc, m| acc + m.value());
        if Float::abs(total - R::Base::one()) > R::Base::lit(MASS_TOLERANCE) {
            return Err(LossError::NotNormalized(total.to_f64_lossy()));
        }
        Ok(Self { edges, masses })
    }

    /// Normalizes non-negative weights by their total.
    pub fn from_weights(edges: BinEdges<R::Base>, weights: Vec<R>) -> Result<Self, LossError> {
        if weights.len() != edges.bins() {
            return Err(LossError::LengthMismatch {
                expected: edges.bins(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|m| !(m.value() >= R::Base::zero())) {
            return Err(LossError::NegativeMass);
        }
        let total = R::sum(&weights).ok_or(LossError::InvalidEdges)?;
        if !(total.value() > R::Base::zero()) || !total.value().is_finite() {
            return Err(LossError::DegenerateTarget);
        }
        let masses = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { edges, masses })
    }

    pub(crate) fn from_parts_unchecked(edges: BinEdges<R::Base>, masses: Vec<R>) -> Self {
        Self { edges, masses }
    }

    pub fn edges(&self) -> &BinEdges<R::Base> {
        &self.edges
    }

    pub fn masses(&self) -> &[R] {
        &self.masses
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    /// Plain copy of the forward values.
    pub fn detach(&self) -> Histogram<R::Base> {
        Histogram {
            edges: self.edges.clone(),
            masses: self.masses.iter().map(|m| m.value()).collect(),
        }
    }

    /// Mean and standard deviation of the bin-center point masses.
    pub fn moments(&self) -> (R::Base, R::Base) {
        let (mut mean, mut second) = (R::Base::zero(), R::Base::zero());
        for (k, m) in self.masses.iter().enumerate() {
            let c = self.edges.center(k);
            mean = mean + m.value() * c;
            second = second + m.value() * c * c;
        }
        let var = (second - mean * mean).max(R::Base::zero());
        (mean, var.sqrt())
    }

    pub(crate) fn same_support(&self, other_edges: &BinEdges<R::Base>) -> Result<(), LossError> {
        if Arc::ptr_eq(&self.edges.edges, &other_edges.edges) || self.edges == *other_edges {
            Ok(())
        } else {
            Err(LossError::IncompatibleSupport)
        }
    }
}

impl<T: Scalar> Histogram<T> {
    /// Re-expresses plain masses as constants in the context of `anchor`.
    pub fn lift_into<R: Real<Base = T>>(&self, anchor: &R) -> Histogram<R> {
        Histogram {
            edges: self.edges.clone(),
            masses: self.masses.iter().map(|&m| anchor.lift(m)).collect(),
        }
    }

    /// Histogram with all mass in bin `k`.
    pub fn point_mass(edges: BinEdges<T>, k: usize) -> Result<Self, LossError> {
        let mut masses = vec![T::zero(); edges.bins()];
        *masses.get_mut(k).ok_or(LossError::InvalidEdges)? = T::one();
        Ok(Self { edges, masses })
    }
}
