use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::losses::{
    boundaries_from_beta, distribution_loss, scale_loss_batch, weighted_total_loss, BetaParams,
    BinEdges, BoxSize, Coupling, DistributionSettings, ImageScaleInput, LossTerms, LossWeights,
    ObjectLossRecord, ScaleLossSettings, TargetForm, DEFAULT_BCE_EPSILON, DEFAULT_BINS,
    DEFAULT_LAMBDA_BASE,
};
use crate::predictor::{predict_scale, Checkpoint, PredictorParams};
use crate::scale::{default_steepness, effective_scale, scale_resolution, Boundaries, ScaleConfig};
use crate::simulator::{oracle_loss, predict_all, pearson, OracleConfig, Scene, SimulatorError};

/// Optimization settings of [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr_predictor: f64,
    pub lr_beta: f64,
    pub weights: LossWeights<f64>,
    pub lambda_base: f64,
    pub form: TargetForm,
    pub bins: usize,
    pub steepness: f64,
    pub bce_epsilon: f64,
    /// ξ-gated smoothing of the distribution-loss target.
    pub lpf: bool,
    pub init_alpha: f64,
    pub init_beta: f64,
    pub seed: u64,
    /// Report cadence in iterations; the last iteration is always logged.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            batch_size: 16,
            lr_predictor: 1e-2,
            lr_beta: 1e-3,
            weights: LossWeights::default(),
            lambda_base: DEFAULT_LAMBDA_BASE,
            form: TargetForm::Likelihood,
            bins: DEFAULT_BINS,
            steepness: default_steepness(),
            bce_epsilon: DEFAULT_BCE_EPSILON,
            lpf: true,
            init_alpha: 2.0,
            init_beta: 8.0,
            seed: 0,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        let bad = |msg: &str| Err(SimulatorError::InvalidConfig(msg.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1");
        }
        if self.bins < 2 {
            return bad("bins must be at least 2");
        }
        let positive = [
            ("lr_predictor", self.lr_predictor),
            ("lr_beta", self.lr_beta),
            ("steepness", self.steepness),
            ("init_alpha", self.init_alpha),
            ("init_beta", self.init_beta),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimulatorError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.bce_epsilon > 0.0 && self.bce_epsilon < 0.5) {
            return bad("bce_epsilon must lie in (0, 0.5)");
        }
        if !(0.0..=1.0).contains(&self.lambda_base) {
            return bad("lambda_base must lie in [0, 1]");
        }
        let w = &self.weights;
        if [w.cls, w.loc, w.scale, w.dist].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return bad("loss weights must be finite and non-negative");
        }
        Ok(())
    }
}

/// One logged iteration. Field order is the report CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    pub form: TargetForm,
    pub total_loss: f64,
    pub cls_loss: f64,
    pub loc_loss: f64,
    pub scale_loss: f64,
    pub dist_loss: f64,
    pub lambda_scale_eff: f64,
    pub lambda_dist_eff: f64,
    /// Mean of φ over the whole dataset with the parameters used in this
    /// iteration.
    pub phi_mean: f64,
    pub phi_std: f64,
    pub boundary_lower: f64,
    pub boundary_upper: f64,
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
    pub lpf_coef: f64,
    /// Pearson correlation between per-scene mean normalized box area and φ.
    pub pearson_size_phi: f64,
}

/// Boundaries used in one iteration. Field order is the trajectory CSV
/// column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub iteration: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Outcome of [`train`]: logged records, the per-iteration boundary
/// trajectory and the parameters after the last completed update.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub records: Vec<IterationRecord>,
    pub trajectory: Vec<BoundaryPoint>,
    pub params: PredictorParams<f64>,
    pub range: ScaleConfig<f64>,
    pub log_alpha: f64,
    pub log_beta: f64,
}

impl TrainReport {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            predictor: self.params.clone(),
            range: self.range,
            log_alpha: self.log_alpha,
            log_beta: self.log_beta,
        }
    }

    /// Total variation `Σ |ΔB_l| + |ΔB_u|` of the boundary trajectory over
    /// its first `limit` points.
    pub fn boundary_total_variation(&self, limit: usize) -> f64 {
        let points = &self.trajectory[..limit.min(self.trajectory.len())];
        points
            .windows(2)
            .map(|w| (w[1].lower - w[0].lower).abs() + (w[1].upper - w[0].upper).abs())
            .sum()
    }
}

/// Current Beta parameters and the boundaries derived from them.
pub fn beta_state(log_alpha: f64, log_beta: f64) -> Result<(BetaParams<f64>, Boundaries<f64>), SimulatorError> {
    let params = BetaParams::from_log(log_alpha, log_beta)?;
    let boundaries = boundaries_from_beta(&params)?;
    Ok((params, boundaries))
}

struct StepOutcome {
    record: IterationRecord,
    predictor_grad: Vec<f64>,
    log_alpha_grad: f64,
    log_beta_grad: f64,
}

/// Joint gradient descent of the predictor weights and the log-Beta
/// parameters against the detection oracle.
///
/// Each iteration draws a batch, predicts φ per scene, evaluates the
/// oracle at the rounded resolution, and combines the detection, scale and
/// distribution losses with coupling weights from the detached batch-mean
/// oracle loss. The oracle sees φ only through the rounded resolution, so
/// the predictor learns from the scale loss alone. Boundaries are refreshed
/// from the Beta parameters before every iteration.
///
/// A non-finite loss or parameter stops training with
/// [`SimulatorError::Diverged`], which carries everything logged so far.
pub fn train(
    dataset: &[Scene],
    initial: PredictorParams<f64>,
    range: &ScaleConfig<f64>,
    oracle: &OracleConfig,
    cfg: &TrainConfig,
) -> Result<TrainReport, SimulatorError> {
    cfg.validate()?;
    oracle.validate()?;
    if dataset.is_empty() {
        return Err(SimulatorError::InvalidConfig("dataset is empty".into()));
    }
    if dataset.iter().all(|s| s.objects.is_empty()) {
        return Err(SimulatorError::InvalidConfig("dataset has no objects".into()));
    }
    let edges = BinEdges::uniform(cfg.bins)?;
    let mut report = TrainReport {
        records: Vec::new(),
        trajectory: Vec::with_capacity(cfg.iterations),
        params: initial,
        range: *range,
        log_alpha: cfg.init_alpha.ln(),
        log_beta: cfg.init_beta.ln(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tape = Tape::new();

    for iteration in 0..cfg.iterations {
        let batch: Vec<&Scene> = (0..cfg.batch_size)
            .map(|_| &dataset[rng.random_range(0..dataset.len())])
            .collect();
        let logged = iteration % cfg.log_every == 0 || iteration + 1 == cfg.iterations;
        let step = step(&tape, &batch, &report, &edges, oracle, cfg, iteration);
        tape.clear();
        let mut outcome = match step {
            Ok(o) => o,
            Err(e) => return Err(diverged(iteration, e.to_string(), report)),
        };
        report.trajectory.push(BoundaryPoint {
            iteration,
            lower: outcome.record.boundary_lower,
            upper: outcome.record.boundary_upper,
        });
        if logged {
            let phis = predict_all(dataset, &report.params, range)?;
            let (mean, std) = crate::simulator::mean_std(&phis);
            let (sizes, paired): (Vec<f64>, Vec<f64>) = dataset
                .iter()
                .zip(&phis)
                .filter_map(|(s, &p)| s.mean_area().map(|a| (a, p)))
                .unzip();
            outcome.record.phi_mean = mean;
            outcome.record.phi_std = std;
            outcome.record.pearson_size_phi = pearson(&sizes, &paired);
        }
        let total_ok = outcome.record.total_loss.is_finite();
        if logged || !total_ok {
            report.records.push(outcome.record);
        }
        if !total_ok {
            return Err(diverged(iteration, "non-finite total loss".into(), report));
        }

        for (p, g) in report.params.values_mut().iter_mut().zip(&outcome.predictor_grad) {
            *p -= cfg.lr_predictor * g;
        }
        report.log_alpha -= cfg.lr_beta * outcome.log_alpha_grad;
        report.log_beta -= cfg.lr_beta * outcome.log_beta_grad;
        let finite = report.params.values().iter().all(|v| v.is_finite())
            && report.log_alpha.is_finite()
            && report.log_beta.is_finite();
        if !finite {
            return Err(diverged(iteration, "non-finite parameter after update".into(), report));
        }
    }
    Ok(report)
}

fn diverged(iteration: usize, reason: String, report: TrainReport) -> SimulatorError {
    SimulatorError::Diverged {
        iteration,
        reason,
        report: Box::new(report),
    }
}

fn step(
    tape: &Tape<f64>,
    batch: &[&Scene],
    state: &TrainReport,
    edges: &BinEdges<f64>,
    oracle: &OracleConfig,
    cfg: &TrainConfig,
    iteration: usize,
) -> Result<StepOutcome, SimulatorError> {
    let range = &state.range;
    let (beta_now, boundaries) = beta_state(state.log_alpha, state.log_beta)?;
    let params: Vec<Var<'_, f64>> = tape.vars(state.params.values());
    let log_alpha = tape.var(state.log_alpha);
    let log_beta = tape.var(state.log_beta);
    let config = state.params.config();

    let mut noise = ChaCha8Rng::seed_from_u64(oracle.seed);
    noise.set_stream(iteration as u64);
    let mut phis = Vec::with_capacity(batch.len());
    let mut boxes: Vec<Vec<BoxSize<f64>>> = Vec::with_capacity(batch.len());
    let mut records = Vec::new();
    let mut oracle_sum = 0.0;
    for scene in batch {
        let phi = predict_scale(config, &params, &scene.features, range)?.phi;
        let scaled = scale_resolution(scene.resolution, phi.data());
        let phi_eff = effective_scale(scene.resolution, scaled);
        for (o, area) in scene.objects.iter().zip(scene.normalized_areas()) {
            let loss = oracle_loss(o, phi_eff, oracle, noise.random());
            oracle_sum += loss;
            records.push(ObjectLossRecord::new(area.min(1.0 - f64::EPSILON), loss)?);
        }
        boxes.push(
            scene
                .objects
                .iter()
                .map(|o| BoxSize { width: o.width, height: o.height })
                .collect(),
        );
        phis.push(phi);
    }
    let oracle_mean = if records.is_empty() { 0.0 } else { oracle_sum / records.len() as f64 };

    let zero = tape.constant(0.0);
    let scale_inputs: Vec<ImageScaleInput<'_, Var<'_, f64>>> = batch
        .iter()
        .zip(&boxes)
        .zip(&phis)
        .map(|((scene, b), &phi)| ImageScaleInput {
            boxes: b,
            phi,
            area_ref: scene.area_ref(),
        })
        .collect();
    let scale_settings = ScaleLossSettings {
        range: *range,
        boundaries,
        steepness: cfg.steepness,
        epsilon: cfg.bce_epsilon,
    };
    let scale = if records.is_empty() {
        zero
    } else {
        scale_loss_batch(&scale_inputs, &scale_settings)?
    };

    let dist_settings = DistributionSettings {
        edges: edges.clone(),
        form: cfg.form,
        lambda_base: cfg.lambda_base,
        lpf: cfg.lpf,
        tie_seed: cfg.seed ^ (iteration as u64).rotate_left(32),
    };
    let (dist, xi, coefficient) = if records.len() < 2 {
        (zero, f64::NAN, f64::NAN)
    } else {
        let beta = BetaParams::from_log(log_alpha, log_beta)?;
        let d = distribution_loss(&records, &beta, &dist_settings)?;
        (d.loss, d.target.xi, d.target.coefficient)
    };

    let detection = tape.constant(oracle_mean);
    let terms = LossTerms {
        cls: detection,
        loc: detection,
        scale,
        dist,
    };
    let weighted = weighted_total_loss(&terms, Coupling::detached(&terms), &cfg.weights);
    weighted.total.backward();

    Ok(StepOutcome {
        record: IterationRecord {
            iteration,
            tau_min: range.tau_min(),
            tau_max: range.tau_max(),
            form: cfg.form,
            total_loss: weighted.total.data(),
            cls_loss: oracle_mean,
            loc_loss: oracle_mean,
            scale_loss: scale.data(),
            dist_loss: dist.data(),
            lambda_scale_eff: weighted.lambda_scale,
            lambda_dist_eff: weighted.lambda_dist,
            phi_mean: f64::NAN,
            phi_std: f64::NAN,
            boundary_lower: boundaries.lower,
            boundary_upper: boundaries.upper,
            alpha: beta_now.alpha,
            beta: beta_now.beta,
            xi,
            lpf_coef: coefficient,
            pearson_size_phi: f64::NAN,
        },
        predictor_grad: params.iter().map(|p| p.grad()).collect(),
        log_alpha_grad: log_alpha.grad(),
        log_beta_grad: log_beta.grad(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{init_params, PredictorConfig};
    use crate::simulator::{generate_dataset, DatasetConfig};

    fn setup(n: usize) -> (Vec<Scene>, PredictorParams<f64>, ScaleConfig<f64>) {
        let data = generate_dataset(&DatasetConfig { n_scenes: n, ..DatasetConfig::default() }).unwrap();
        let params = init_params(&PredictorConfig::default()).unwrap();
        (data, params, ScaleConfig::new(0.2, 1.5).unwrap())
    }

    fn short(iterations: usize) -> TrainConfig {
        TrainConfig { iterations, log_every: 10, ..TrainConfig::default() }
    }

    #[test]
    fn reproducible() {
        let (data, params, range) = setup(60);
        let oc = OracleConfig::default();
        let a = train(&data, params.clone(), &range, &oc, &short(30)).unwrap();
        let b = train(&data, params, &range, &oc, &short(30)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 4);
        assert_eq!(a.trajectory.len(), 30);
        assert!(a.records.windows(2).all(|w| w[0].iteration < w[1].iteration));
    }

    #[test]
    fn boundaries_stay_ordered() {
        let (data, params, range) = setup(60);
        let r = train(&data, params, &range, &OracleConfig::default(), &short(50)).unwrap();
        for p in &r.trajectory {
            assert!(0.0 <= p.lower && p.lower < p.upper);
        }
    }

    #[test]
    fn zero_elastic_weights_freeze_phi() {
        let (data, params, range) = setup(40);
        let cfg = TrainConfig {
            weights: LossWeights { cls: 1.0, loc: 1.0, scale: 0.0, dist: 0.0 },
            ..short(20)
        };
        let r = train(&data, params.clone(), &range, &OracleConfig::default(), &cfg).unwrap();
        assert_eq!(r.params, params);
        assert_eq!(r.boundary_total_variation(usize::MAX), 0.0);
    }

    #[test]
    fn divergence_returns_partial_report() {
        let (data, params, range) = setup(40);
        let cfg = TrainConfig { lr_beta: 1e300, ..short(20) };
        match train(&data, params, &range, &OracleConfig::default(), &cfg) {
            Err(SimulatorError::Diverged { report, .. }) => assert!(!report.trajectory.is_empty()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lambda_base: 1.5, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lr_beta: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
