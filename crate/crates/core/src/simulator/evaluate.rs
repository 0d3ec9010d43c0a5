use serde::{Deserialize, Serialize};

use crate::predictor::{predict_scale, PredictorParams};
use crate::scale::{effective_scale, scale_resolution, ScaleConfig};
use crate::simulator::{mean_std, OracleConfig, Scene, SimulatorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Equal-width φ bins spanning `[τ_min, τ_max]`.
    pub phi_bins: usize,
    /// Equal-count buckets of scenes ordered by mean box area.
    pub size_buckets: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            phi_bins: 20,
            size_buckets: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeBucket {
    /// Smallest and largest mean normalized box area in the bucket.
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n_scenes: usize,
    pub phi_mean: f64,
    pub phi_std: f64,
    pub phi_histogram: PhiHistogram,
    /// Ascending in box size.
    pub size_buckets: Vec<SizeBucket>,
    /// Noise-free oracle loss per box at the rounded resolution.
    pub mean_oracle_loss: f64,
    pub pearson_size_phi: f64,
}

/// φ for every scene, in dataset order.
pub fn predict_all(
    scenes: &[Scene],
    params: &PredictorParams<f64>,
    range: &ScaleConfig<f64>,
) -> Result<Vec<f64>, SimulatorError> {
    scenes
        .iter()
        .map(|s| Ok(predict_scale(params.config(), params.values(), &s.features, range)?.phi))
        .collect()
}

/// Pearson correlation coefficient; 0 when either input has no spread or
/// fewer than two points are given.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "pearson needs paired samples");
    if x.len() < 2 {
        return 0.0;
    }
    let (mx, sx) = mean_std(x);
    let (my, sy) = mean_std(y);
    if sx == 0.0 || sy == 0.0 {
        return 0.0;
    }
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64;
    (cov / (sx * sy)).clamp(-1.0, 1.0)
}

/// Inference-only pass over `scenes`.
pub fn evaluate(
    scenes: &[Scene],
    params: &PredictorParams<f64>,
    range: &ScaleConfig<f64>,
    oracle: &OracleConfig,
    cfg: &EvalConfig,
) -> Result<EvalMetrics, SimulatorError> {
    if cfg.phi_bins == 0 || cfg.size_buckets == 0 {
        return Err(SimulatorError::InvalidConfig(
            "phi_bins and size_buckets must be at least 1".into(),
        ));
    }
    if params.values().iter().any(|v| !v.is_finite()) {
        return Err(SimulatorError::InvalidConfig("parameters must be finite".into()));
    }
    let phis = predict_all(scenes, params, range)?;
    let (phi_mean, phi_std) = mean_std(&phis);

    let (lo, hi) = (range.tau_min(), range.tau_max());
    let step = (hi - lo) / cfg.phi_bins as f64;
    let edges = (0..=cfg.phi_bins).map(|i| lo + step * i as f64).collect();
    let mut counts = vec![0; cfg.phi_bins];
    for &p in &phis {
        let k = (((p - lo) / step).floor().max(0.0) as usize).min(cfg.phi_bins - 1);
        counts[k] += 1;
    }

    let mut sized: Vec<(f64, f64)> = scenes
        .iter()
        .zip(&phis)
        .filter_map(|(s, &p)| s.mean_area().map(|a| (a, p)))
        .collect();
    let (sizes, paired): (Vec<f64>, Vec<f64>) = sized.iter().copied().unzip();
    let pearson_size_phi = pearson(&sizes, &paired);
    sized.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n_buckets = cfg.size_buckets.min(sized.len());
    let size_buckets = (0..n_buckets)
        .map(|b| {
            let part = &sized[b * sized.len() / n_buckets..(b + 1) * sized.len() / n_buckets];
            SizeBucket {
                lower: part[0].0,
                upper: part[part.len() - 1].0,
                count: part.len(),
                mean_phi: part.iter().map(|x| x.1).sum::<f64>() / part.len() as f64,
            }
        })
        .collect();

    let mut loss_sum = 0.0;
    let mut n_objects = 0usize;
    for (s, &p) in scenes.iter().zip(&phis) {
        let phi_eff = effective_scale(s.resolution, scale_resolution(s.resolution, p));
        for o in &s.objects {
            loss_sum += oracle.noise_free_loss(o, phi_eff);
            n_objects += 1;
        }
    }

    Ok(EvalMetrics {
        n_scenes: scenes.len(),
        phi_mean,
        phi_std,
        phi_histogram: PhiHistogram { edges, counts },
        size_buckets,
        mean_oracle_loss: if n_objects == 0 { 0.0 } else { loss_sum / n_objects as f64 },
        pearson_size_phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{init_params, PredictorConfig};
    use crate::simulator::{generate_dataset, DatasetConfig};

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), 0.0);
        assert_eq!(pearson(&[1.0], &[5.0]), 0.0);
        // numpy.corrcoef([1, 2, 3, 4], [1, 3, 2, 5])[0, 1] = 0.8315218406202999
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 5.0]) - 0.831_521_840_620_299_9).abs() < 1e-14);
    }

    #[test]
    fn untrained_zero_output_is_flat() {
        let data = generate_dataset(&DatasetConfig { n_scenes: 100, ..DatasetConfig::default() }).unwrap();
        let params = init_params(&PredictorConfig::default()).unwrap();
        let range = ScaleConfig::new(0.2, 1.5).unwrap();
        let m = evaluate(&data, &params, &range, &OracleConfig::default(), &EvalConfig::default()).unwrap();
        assert_eq!(m.phi_std, 0.0);
        assert_eq!(m.pearson_size_phi, 0.0);
        assert_eq!(m.size_buckets.len(), 5);
        for b in &m.size_buckets {
            assert_eq!(b.mean_phi, 0.75);
        }
        assert_eq!(m.phi_histogram.counts.iter().sum::<usize>(), 100);
        let again = evaluate(&data, &params, &range, &OracleConfig::default(), &EvalConfig::default()).unwrap();
        assert_eq!(m, again);
    }
}
