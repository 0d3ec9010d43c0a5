use num_traits::Zero;
use crate::losses::{Histogram, LossError};
use crate::scalar::Real;

/// First Wasserstein distance between two histograms on the same bins.
///
/// Mass sits at bin centers, so the transport cost is
/// `Σ_k |F_p(k) − F_q(k)| · (c_{k+1} − c_k)`. On uniform bins the center
/// gap equals the bin width.
pub fn wasserstein_1d<R: Real>(p: &Histogram<R>, q: &Histogram<R>) -> Result<R, LossError> {
    p.same_support(q.edges())?;
    let edges = p.edges();
    let (pm, qm) = (p.masses(), q.masses());
    let mut terms = Vec::with_capacity(pm.len());
    let mut cdf_p = pm[0];
    let mut cdf_q = qm[0];
    for k in 0..pm.len() - 1 {
        if k > 0 {
            cdf_p = cdf_p + pm[k];
            cdf_q = cdf_q + qm[k];
        }
        let gap = edges.center(k + 1) - edges.center(k);
        terms.push((cdf_p - cdf_q).abs() * gap);
    }
    Ok(R::sum(&terms).unwrap_or_else(|| pm[0].lift(R::Base::zero())))
}
