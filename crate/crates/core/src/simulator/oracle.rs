use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::simulator::{SceneObject, SimulatorError};

/// Synthetic detector: a log-quadratic bowl in scaled box area.
///
/// `loss = sharpness · ln(φ²·area / sweet_spot)² · difficulty · exp(noise_std·g)`
/// with `area` in original pixels and `g` standard normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Scaled area in pixels² at which the loss vanishes.
    pub sweet_spot: f64,
    pub sharpness: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            sweet_spot: 96.0 * 96.0,
            sharpness: 0.25,
            noise_std: 0.2,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        if !(self.sweet_spot > 0.0) || !self.sweet_spot.is_finite() {
            return Err(SimulatorError::InvalidConfig("sweet_spot must be positive".into()));
        }
        if !(self.sharpness > 0.0) || !self.sharpness.is_finite() {
            return Err(SimulatorError::InvalidConfig("sharpness must be positive".into()));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(SimulatorError::InvalidConfig("noise_std must be non-negative".into()));
        }
        Ok(())
    }

    /// Noise-free loss of a box at scale factor `phi`.
    pub fn noise_free_loss(&self, object: &SceneObject, phi: f64) -> f64 {
        let scaled = phi * phi * (object.width * object.height);
        let log_ratio = (scaled / self.sweet_spot).ln();
        self.sharpness * log_ratio * log_ratio * object.difficulty
    }
}

/// Detection loss of `object` at scale factor `phi`; the noise draw is a
/// pure function of `step_seed`.
pub fn oracle_loss(object: &SceneObject, phi: f64, oc: &OracleConfig, step_seed: u64) -> f64 {
    let base = oc.noise_free_loss(object, phi);
    if oc.noise_std == 0.0 {
        return base;
    }
    let g: f64 = ChaCha8Rng::seed_from_u64(step_seed).sample(StandardNormal);
    base * (oc.noise_std * g).exp()
}
