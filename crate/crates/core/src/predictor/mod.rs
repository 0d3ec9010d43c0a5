//! Feed-forward scale predictor: scene features to `φ_raw`, closed by the
//! scale-factor clamp.

mod checkpoint;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Real, Scalar};
use crate::scale::{clamp_scale_factor, ScaleConfig};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

/// Default feature width.
pub const DEFAULT_INPUT_DIM: usize = 16;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("invalid predictor config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite input or parameter")]
    NonFinite,
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply<R: Real>(self, x: R) -> R {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.relu(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub init_seed: u64,
    /// Start the output layer at zero so every scene initially receives
    /// the same scale factor.
    pub zero_init_output: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            input_dim: DEFAULT_INPUT_DIM,
            hidden_dims: vec![32, 16],
            activation: Activation::Tanh,
            init_seed: 0,
            zero_init_output: true,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        if self.input_dim == 0 {
            return Err(PredictorError::InvalidConfig("input_dim must be >= 1".into()));
        }
        if let Some(i) = self.hidden_dims.iter().position(|&w| w == 0) {
            return Err(PredictorError::InvalidConfig(format!(
                "hidden_dims[{i}] must be >= 1"
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every dense layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden_dims);
        dims.push(1);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|&(i, o)| i * o + o).sum()
    }
}

/// Flat parameter vector. Per layer: the `fan_out × fan_in` weight matrix
/// row-major by output unit, then `fan_out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams<T> {
    config: PredictorConfig,
    values: Vec<T>,
}

impl<T: Scalar> PredictorParams<T> {
    pub fn from_values(config: PredictorConfig, values: Vec<T>) -> Result<Self, PredictorError> {
        config.validate()?;
        if values.len() != config.param_count() {
            return Err(PredictorError::DimensionMismatch {
                expected: config.param_count(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PredictorError::NonFinite);
        }
        Ok(Self { config, values })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// `(weights, biases)` of each layer.
    pub fn layers(&self) -> Vec<(&[T], &[T])> {
        split_layers(&self.config, &self.values)
    }
}

fn split_layers<'a, R>(cfg: &PredictorConfig, values: &'a [R]) -> Vec<(&'a [R], &'a [R])> {
    let mut rest = values;
    cfg.layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let (w, tail) = rest.split_at(fan_in * fan_out);
            let (b, tail) = tail.split_at(fan_out);
            rest = tail;
            (w, b)
        })
        .collect()
}

/// Weights `U(−√(6/fan_in), √(6/fan_in))`, biases zero; deterministic in
/// `init_seed`.
pub fn init_params<T: Scalar>(cfg: &PredictorConfig) -> Result<PredictorParams<T>, PredictorError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let shapes = cfg.layer_shapes();
    let mut values = Vec::with_capacity(cfg.param_count());
    for (layer, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let output_layer = layer + 1 == shapes.len();
        let bound = (6.0 / fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            let w = if output_layer && cfg.zero_init_output {
                0.0
            } else {
                rng.random_range(-bound..bound)
            };
            values.push(T::lit(w));
        }
        values.extend(std::iter::repeat_n(T::zero(), fan_out));
    }
    PredictorParams::from_values(cfg.clone(), values)
}

/// Network output before the clamp.
pub fn forward<R: Real>(
    cfg: &PredictorConfig,
    params: &[R],
    features: &[R::Base],
) -> Result<R, PredictorError> {
    if params.len() != cfg.param_count() {
        return Err(PredictorError::DimensionMismatch {
            expected: cfg.param_count(),
            found: params.len(),
        });
    }
    if features.len() != cfg.input_dim {
        return Err(PredictorError::DimensionMismatch {
            expected: cfg.input_dim,
            found: features.len(),
        });
    }
    if features.iter().any(|f| !f.is_finite()) {
        return Err(PredictorError::NonFinite);
    }
    let layers = split_layers(cfg, params);
    let last = layers.len() - 1;
    let mut hidden: Vec<R> = Vec::new();
    for (l, (weights, biases)) in layers.into_iter().enumerate() {
        let fan_in = weights.len() / biases.len();
        let out: Vec<R> = weights
            .chunks(fan_in)
            .zip(biases)
            .map(|(row, &b)| {
                let z = if l == 0 {
                    R::dot_const(row, features)
                } else {
                    R::dot(row, &hidden)
                };
                z.expect("shapes checked") + b
            })
            .collect();
        hidden = if l == last {
            out
        } else {
            out.into_iter().map(|z| cfg.activation.apply(z)).collect()
        };
    }
    Ok(hidden[0])
}

#[derive(Debug, Clone, Copy)]
pub struct Prediction<R> {
    /// Clamped scale factor in `[τ_min, τ_max]`.
    pub phi: R,
    pub phi_raw: R,
}

pub fn predict_scale<R: Real>(
    cfg: &PredictorConfig,
    params: &[R],
    features: &[R::Base],
    range: &ScaleConfig<R::Base>,
) -> Result<Prediction<R>, PredictorError> {
    let phi_raw = forward(cfg, params, features)?;
    Ok(Prediction {
        phi: clamp_scale_factor(phi_raw, range),
        phi_raw,
    })
}
