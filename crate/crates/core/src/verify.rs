//! Self-check suite: gradient checks of every loss, metric properties of
//! the Wasserstein distance, and ξ against a brute-force recomputation.
//!
//! Each check carries its own independent oracle, so the suite can be run
//! from the command line on any build.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{check_gradients, GradCheckConfig, Objective, Tape};
use crate::losses::{
    bce, beta_pdf_histogram, distribution_loss, scale_loss_batch, scale_loss_object,
    smoothed_target, tie_break_keys, wasserstein_1d, weighted_total_loss, BetaParams, BinEdges,
    BoxSize, Coupling, DistributionSettings, Histogram, ImageScaleInput, LossError, LossTerms,
    LossWeights, ObjectLossRecord, ScaleLossSettings, TargetForm,
};
use crate::predictor::{init_params, predict_scale, PredictorConfig, PredictorError};
use crate::scalar::Real;
use crate::scale::{Boundaries, ScaleConfig};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

/// Names of the gradient checks, usable with [`CheckSettings::inject_fault`].
pub const GRADIENT_CHECKS: [&str; 5] = [
    "bce_logistic",
    "scale_loss_object",
    "scale_loss_batch",
    "distribution_loss",
    "weighted_total",
];

#[derive(Debug, Clone)]
pub struct CheckSettings {
    /// Maximum relative error accepted by the gradient checks.
    pub tolerance: f64,
    pub step: f64,
    pub gradient_points: usize,
    pub wasserstein_pairs: usize,
    pub xi_samples: usize,
    pub seed: u64,
    /// Adds a term the tape cannot see to the named gradient check, so
    /// that check must fail.
    pub inject_fault: Option<String>,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            step: 1e-5,
            gradient_points: 100,
            wasserstein_pairs: 500,
            xi_samples: 200,
            seed: 0,
            inject_fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    /// Worst observed error for the property.
    pub metric: f64,
    pub threshold: f64,
    pub detail: String,
}

/// Runs every check; the result has one entry per property.
pub fn run_checks(settings: &CheckSettings) -> Vec<CheckOutcome> {
    let mut out = gradient_checks(settings);
    out.extend(wasserstein_checks(settings));
    out.extend(xi_checks(settings));
    out
}

/// Adds a detached copy of the first parameter: finite differences see it,
/// the tape does not.
struct Sabotaged<'a, O>(&'a O);

impl<O: Objective<f64>> Objective<f64> for Sabotaged<'_, O> {
    type Error = O::Error;

    fn eval<R: Real<Base = f64>>(&self, params: &[R]) -> Result<R, Self::Error> {
        let v = self.0.eval(params)?;
        Ok(v + params[0].lift(params[0].value()))
    }

    fn kink_distance(&self, params: &[f64]) -> Option<f64> {
        self.0.kink_distance(params)
    }
}

/// Smallest `|g_k| / max_i |∂g_k/∂θ_i|` over the functions `g_k` whose
/// sign changes are kinks: the first-order distance to the nearest one.
fn linearized_distance(values_and_grads: impl Iterator<Item = (f64, Vec<f64>)>) -> Option<f64> {
    values_and_grads
        .filter_map(|(v, g)| {
            let slope = g.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            (slope > 0.0).then(|| v.abs() / slope)
        })
        .reduce(f64::min)
}

/// `φ_raw` at which the scale-factor clamp switches branches.
fn clamp_kink(range: &ScaleConfig<f64>) -> f64 {
    let r = range.min_ratio();
    (r / (1.0 - r)).ln()
}

struct BceLogistic {
    target: f64,
}

impl Objective<f64> for BceLogistic {
    type Error = VerifyError;

    fn eval<R: Real<Base = f64>>(&self, p: &[R]) -> Result<R, VerifyError> {
        Ok(bce(self.target, p[0].logistic(), 1e-6))
    }
}

struct ScaleObject {
    size: BoxSize<f64>,
    area_ref: f64,
    settings: ScaleLossSettings<f64>,
}

impl Objective<f64> for ScaleObject {
    type Error = VerifyError;

    fn eval<R: Real<Base = f64>>(&self, p: &[R]) -> Result<R, VerifyError> {
        let phi = crate::scale::clamp_scale_factor(p[0], &self.settings.range);
        Ok(scale_loss_object(self.size, phi, self.area_ref, &self.settings)?)
    }

    fn kink_distance(&self, p: &[f64]) -> Option<f64> {
        Some((p[0] - clamp_kink(&self.settings.range)).abs())
    }
}

struct ScaleBatch {
    images: Vec<Vec<BoxSize<f64>>>,
    area_ref: f64,
    settings: ScaleLossSettings<f64>,
}

impl Objective<f64> for ScaleBatch {
    type Error = VerifyError;

    fn eval<R: Real<Base = f64>>(&self, p: &[R]) -> Result<R, VerifyError> {
        let inputs: Vec<ImageScaleInput<'_, R>> = self
            .images
            .iter()
            .zip(p)
            .map(|(boxes, &raw)| ImageScaleInput {
                boxes,
                phi: crate::scale::clamp_scale_factor(raw, &self.settings.range),
                area_ref: self.area_ref,
            })
            .collect();
        Ok(scale_loss_batch(&inputs, &self.settings)?)
    }

    fn kink_distance(&self, p: &[f64]) -> Option<f64> {
        let kink = clamp_kink(&self.settings.range);
        p.iter().map(|x| (x - kink).abs()).reduce(f64::min)
    }
}

struct Distribution {
    records: Vec<ObjectLossRecord<f64>>,
    settings: DistributionSettings<f64>,
}

impl Objective<f64> for Distribution {
    type Error = VerifyError;

    fn eval<R: Real<Base = f64>>(&self, p: &[R]) -> Result<R, VerifyError> {
        let params = BetaParams::from_log(p[0], p[1])?;
        Ok(distribution_loss(&self.records, &params, &self.settings)?.loss)
    }

    /// Kinks sit where the Beta CDF meets the measured target CDF at a
    /// bin.
    fn kink_distance(&self, p: &[f64]) -> Option<f64> {
        let target = smoothed_target(
            &self.records,
            &BetaParams::from_log(p[0], p[1]).ok()?,
            &self.settings,
        )
        .ok()?;
        let tape = Tape::new();
        let (la, lb) = (tape.var(p[0]), tape.var(p[1]));
        let hist = beta_pdf_histogram(&BetaParams::from_log(la, lb).ok()?, &self.settings.edges).ok()?;
        let mut cdf = hist.masses()[0].lift(0.0);
        let mut measured = 0.0;
        let mut rows = Vec::new();
        for k in 0..hist.bins() - 1 {
            cdf = cdf + hist.masses()[k];
            measured += target.measured.masses()[k];
            tape.zero_grad();
            let gap = cdf - measured;
            gap.backward();
            rows.push((gap.data(), vec![la.grad(), lb.grad()]));
        }
        linearized_distance(rows.into_iter())
    }
}

struct WeightedTotal {
    predictor: PredictorConfig,
    features: Vec<Vec<f64>>,
    boxes: Vec<Vec<BoxSize<f64>>>,
    area_ref: f64,
    settings: ScaleLossSettings<f64>,
    detection: f64,
    dist: f64,
    weights: LossWeights<f64>,
}

impl Objective<f64> for WeightedTotal {
    type Error = VerifyError;

    fn eval<R: Real<Base = f64>>(&self, p: &[R]) -> Result<R, VerifyError> {
        let mut inputs = Vec::with_capacity(self.features.len());
        for (f, boxes) in self.features.iter().zip(&self.boxes) {
            let phi = predict_scale(&self.predictor, p, f, &self.settings.range)?.phi;
            inputs.push(ImageScaleInput {
                boxes,
                phi,
                area_ref: self.area_ref,
            });
        }
        let anchor = p[0];
        let terms = LossTerms {
            cls: anchor.lift(self.detection),
            loc: anchor.lift(self.detection),
            scale: scale_loss_batch(&inputs, &self.settings)?,
            dist: anchor.lift(self.dist),
        };
        Ok(weighted_total_loss(&terms, Coupling::detached(&terms), &self.weights).total)
    }

    /// Kinks are the clamp switch points of each scene's `φ_raw`.
    fn kink_distance(&self, p: &[f64]) -> Option<f64> {
        let kink = clamp_kink(&self.settings.range);
        let mut rows = Vec::new();
        for f in &self.features {
            let tape = Tape::new();
            let vars = tape.vars(p);
            let raw = predict_scale(&self.predictor, &vars, f, &self.settings.range)
                .ok()?
                .phi_raw;
            raw.backward();
            rows.push((raw.data() - kink, vars.iter().map(|v| v.grad()).collect()));
        }
        linearized_distance(rows.into_iter())
    }
}

fn random_range(rng: &mut ChaCha8Rng) -> ScaleConfig<f64> {
    let tau_max = [1.25, 1.5, 1.75, 2.0, 2.25][rng.random_range(0..5)];
    ScaleConfig::new(0.2, tau_max).expect("valid preset")
}

fn random_boundaries(rng: &mut ChaCha8Rng) -> Boundaries<f64> {
    let lower = rng.random_range(0.0..0.3);
    Boundaries::new(lower, lower + rng.random_range(0.02..0.5)).expect("ordered")
}

fn random_box(rng: &mut ChaCha8Rng, area_ref: f64) -> BoxSize<f64> {
    let side = area_ref.sqrt();
    BoxSize {
        width: side * rng.random_range(0.02..0.9),
        height: side * rng.random_range(0.02..0.9),
    }
}

fn random_records(rng: &mut ChaCha8Rng, n: usize) -> Vec<ObjectLossRecord<f64>> {
    (0..n)
        .map(|_| {
            let area: f64 = rng.random_range(0.005..0.95);
            let loss = rng.random_range(0.0..3.0) * (1.0 + area);
            ObjectLossRecord::new(area, loss).expect("valid record")
        })
        .collect()
}

fn scale_settings(rng: &mut ChaCha8Rng) -> ScaleLossSettings<f64> {
    ScaleLossSettings::new(random_range(rng), random_boundaries(rng))
}

fn summarize<O: Objective<f64, Error = VerifyError>>(
    name: &str,
    mut make: impl FnMut(&mut ChaCha8Rng) -> (O, Vec<f64>),
    settings: &CheckSettings,
    rng: &mut ChaCha8Rng,
) -> CheckOutcome {
    let cfg = GradCheckConfig {
        step: settings.step,
        tolerance: settings.tolerance,
        ..GradCheckConfig::default()
    };
    let sabotage = settings.inject_fault.as_deref() == Some(name);
    let (mut worst, mut excluded, mut failures, mut error) = (0.0f64, 0, 0, None);
    for _ in 0..settings.gradient_points {
        let (obj, point) = make(rng);
        let report = if sabotage {
            check_gradients(&Sabotaged(&obj), &point, &cfg)
        } else {
            check_gradients(&obj, &point, &cfg)
        };
        match report {
            Ok(r) if r.excluded => excluded += 1,
            Ok(r) => {
                if !r.passed {
                    failures += 1;
                }
                if r.max_rel_error > worst || r.max_rel_error.is_nan() {
                    worst = r.max_rel_error;
                }
            }
            Err(e) => {
                failures += 1;
                error.get_or_insert(e.to_string());
            }
        }
    }
    let compared = settings.gradient_points - excluded;
    let passed = failures == 0 && compared > 0;
    let mut detail = format!("{compared} points compared, {excluded} near a kink, {failures} failed");
    if let Some(e) = error {
        detail.push_str(&format!("; first error: {e}"));
    }
    CheckOutcome {
        suite: "gradient",
        name: name.to_string(),
        passed,
        metric: worst,
        threshold: settings.tolerance,
        detail,
    }
}

/// Tape gradients against central differences at random interior points.
pub fn gradient_checks(settings: &CheckSettings) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut out = Vec::new();

    out.push(summarize(
        "bce_logistic",
        |rng| {
            let obj = BceLogistic { target: rng.random_range(0.0..=1.0) };
            (obj, vec![rng.random_range(-4.0..4.0)])
        },
        settings,
        &mut rng,
    ));

    out.push(summarize(
        "scale_loss_object",
        |rng| {
            let area_ref = 600.0 * 800.0;
            let obj = ScaleObject {
                size: random_box(rng, area_ref),
                area_ref,
                settings: scale_settings(rng),
            };
            let kink = clamp_kink(&obj.settings.range);
            let point = vec![rng.random_range(kink..kink + 6.0)];
            (obj, point)
        },
        settings,
        &mut rng,
    ));

    out.push(summarize(
        "scale_loss_batch",
        |rng| {
            let area_ref = 600.0 * 800.0;
            let images: Vec<Vec<BoxSize<f64>>> = (0..4)
                .map(|_| (0..rng.random_range(1..5)).map(|_| random_box(rng, area_ref)).collect())
                .collect();
            let obj = ScaleBatch {
                images,
                area_ref,
                settings: scale_settings(rng),
            };
            let kink = clamp_kink(&obj.settings.range);
            let point = (0..4).map(|_| rng.random_range(kink..kink + 6.0)).collect();
            (obj, point)
        },
        settings,
        &mut rng,
    ));

    out.push(summarize(
        "distribution_loss",
        |rng| {
            let form = if rng.random_bool(0.5) { TargetForm::Likelihood } else { TargetForm::Plain };
            let mut dist = DistributionSettings::new(BinEdges::uniform(16).expect("bins"), form);
            dist.tie_seed = rng.random();
            let obj = Distribution {
                records: random_records(rng, 24),
                settings: dist,
            };
            let point = vec![rng.random_range(-0.5..2.5), rng.random_range(-0.5..2.5)];
            (obj, point)
        },
        settings,
        &mut rng,
    ));

    out.push(summarize(
        "weighted_total",
        |rng| {
            let predictor = PredictorConfig {
                input_dim: 6,
                hidden_dims: vec![5, 4],
                init_seed: rng.random(),
                zero_init_output: false,
                ..PredictorConfig::default()
            };
            let params = init_params::<f64>(&predictor).expect("valid config");
            let area_ref = 600.0 * 800.0;
            let n = 3;
            let obj = WeightedTotal {
                features: (0..n)
                    .map(|_| (0..predictor.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect(),
                boxes: (0..n)
                    .map(|_| (0..rng.random_range(1..4)).map(|_| random_box(rng, area_ref)).collect())
                    .collect(),
                predictor,
                area_ref,
                settings: scale_settings(rng),
                detection: rng.random_range(0.1..2.0),
                dist: rng.random_range(0.0..0.5),
                weights: LossWeights {
                    cls: 1.0,
                    loc: 1.0,
                    scale: rng.random_range(0.1..2.0),
                    dist: rng.random_range(0.1..2.0),
                },
            };
            (obj, params.values().to_vec())
        },
        settings,
        &mut rng,
    ));
    out
}

/// Random histogram on `edges`; roughly a fifth of the bins are empty.
pub fn random_histogram(rng: &mut ChaCha8Rng, edges: &BinEdges<f64>) -> Histogram<f64> {
    loop {
        let w: Vec<f64> = (0..edges.bins())
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
            .collect();
        if let Ok(h) = Histogram::from_weights(edges.clone(), w) {
            return h;
        }
    }
}

/// Exact transport cost by the north-west-corner (monotone) coupling of
/// the two mass sequences, with mass at bin centers.
pub fn monotone_coupling_cost(p: &Histogram<f64>, q: &Histogram<f64>) -> f64 {
    let centers = p.edges().centers();
    let (mut a, mut b) = (p.masses().to_vec(), q.masses().to_vec());
    let (mut i, mut j, mut cost) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        let moved = a[i].min(b[j]);
        cost += moved * (centers[i] - centers[j]).abs();
        a[i] -= moved;
        b[j] -= moved;
        if a[i] <= 0.0 {
            i += 1;
        } else {
            j += 1;
        }
    }
    cost
}

/// Agreement with the coupling oracle and the metric axioms.
pub fn wasserstein_checks(settings: &CheckSettings) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x5745);
    let edges = BinEdges::uniform(16).expect("bins");
    let n = settings.wasserstein_pairs;
    let w = |p: &Histogram<f64>, q: &Histogram<f64>| wasserstein_1d(p, q).expect("same support");

    let mut oracle_err = 0.0f64;
    for _ in 0..n {
        let (p, q) = (random_histogram(&mut rng, &edges), random_histogram(&mut rng, &edges));
        oracle_err = oracle_err.max((w(&p, &q) - monotone_coupling_cost(&p, &q)).abs());
    }

    let (mut identity, mut symmetry, mut triangle, mut separation) = (0.0f64, 0.0f64, 0.0f64, 0);
    for _ in 0..n {
        let p = random_histogram(&mut rng, &edges);
        let q = random_histogram(&mut rng, &edges);
        let r = random_histogram(&mut rng, &edges);
        identity = identity.max(w(&p, &p).abs());
        symmetry = symmetry.max((w(&p, &q) - w(&q, &p)).abs());
        triangle = triangle.max(w(&p, &r) - w(&p, &q) - w(&q, &r));
        if p.masses() != q.masses() && !(w(&p, &q) > 0.0) {
            separation += 1;
        }
    }

    let row = |name: &str, metric: f64, threshold: f64, detail: String| CheckOutcome {
        suite: "wasserstein",
        name: name.to_string(),
        passed: metric <= threshold,
        metric,
        threshold,
        detail,
    };
    vec![
        row("monotone_coupling", oracle_err, 1e-9, format!("{n} random pairs, K = 16")),
        row("identity", identity, 0.0, format!("{n} random histograms")),
        row("symmetry", symmetry, 1e-15, format!("{n} random pairs")),
        row("triangle", triangle.max(0.0), 1e-12, format!("{n} random triples")),
        row("separation", separation as f64, 0.0, format!("{separation} distinct pairs at distance 0")),
    ]
}

/// ξ by explicit pairwise rank counting, in floating point.
pub fn xi_brute_force(x: &[f64], y: &[f64], tie_seed: u64) -> f64 {
    let n = x.len();
    let keys = tie_break_keys(n, tie_seed);
    let mut order: Vec<usize> = (0..n).collect();
    // Insertion sort keeps this independent of the library sort.
    for i in 1..n {
        let mut j = i;
        while j > 0 {
            let (a, b) = (order[j - 1], order[j]);
            let after = x[a] > x[b] || (x[a] == x[b] && keys[a] > keys[b]);
            if !after {
                break;
            }
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let r = |i: usize| (0..n).filter(|&j| y[j] <= y[i]).count() as f64;
    let l = |i: usize| (0..n).filter(|&j| y[j] >= y[i]).count() as f64;
    let jumps: f64 = order.windows(2).map(|w| (r(w[1]) - r(w[0])).abs()).sum();
    let spread: f64 = (0..n).map(|i| l(i) * (n as f64 - l(i))).sum();
    if spread == 0.0 {
        return 0.0;
    }
    1.0 - n as f64 * jumps / (2.0 * spread)
}

/// Random paired sample; half the time drawn from a few values so both
/// coordinates have ties.
pub fn random_xi_sample(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(2..60);
    let tied = rng.random_bool(0.5);
    let draw = |rng: &mut ChaCha8Rng| {
        if tied {
            f64::from(rng.random_range(0..5u8))
        } else {
            rng.random::<f64>()
        }
    };
    let x: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
    let y: Vec<f64> = x.iter().map(|&v| if rng.random_bool(0.6) { v * v } else { draw(rng) }).collect();
    (x, y)
}

/// Exact value on monotone inputs and agreement with [`xi_brute_force`].
pub fn xi_checks(settings: &CheckSettings) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x5849);
    let mut exact_misses = 0;
    for n in 3..=50usize {
        let x: Vec<f64> = (0..n).map(|i| i as f64 + rng.random::<f64>() * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let expected = (n as f64 - 2.0) / (n as f64 + 1.0);
        match crate::losses::xi_correlation(&x, &y, rng.random()) {
            Ok(v) if v == expected => {}
            _ => exact_misses += 1,
        }
    }
    let mut worst = 0.0f64;
    for _ in 0..settings.xi_samples {
        let (x, y) = random_xi_sample(&mut rng);
        let seed = rng.random();
        let fast = crate::losses::xi_correlation(&x, &y, seed).unwrap_or(f64::NAN);
        let slow = xi_brute_force(&x, &y, seed);
        let err = (fast - slow).abs();
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
    }
    vec![
        CheckOutcome {
            suite: "xi",
            name: "monotone_exact".to_string(),
            passed: exact_misses == 0,
            metric: exact_misses as f64,
            threshold: 0.0,
            detail: "n = 3..=50 must give exactly (n - 2)/(n + 1)".to_string(),
        },
        CheckOutcome {
            suite: "xi",
            name: "brute_force".to_string(),
            passed: worst <= 1e-12,
            metric: worst,
            threshold: 1e-12,
            detail: format!("{} random samples with and without ties", settings.xi_samples),
        },
    ]
}

/// Convenience for callers that only need a yes/no answer.
pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> CheckSettings {
        CheckSettings {
            gradient_points: 20,
            wasserstein_pairs: 50,
            xi_samples: 30,
            ..CheckSettings::default()
        }
    }

    #[test]
    fn default_suite_passes() {
        let out = run_checks(&quick());
        for o in &out {
            assert!(o.passed, "{o:?}");
        }
        assert_eq!(out.len(), GRADIENT_CHECKS.len() + 5 + 2);
    }

    #[test]
    fn injected_fault_is_named() {
        for name in GRADIENT_CHECKS {
            let settings = CheckSettings { inject_fault: Some(name.to_string()), ..quick() };
            let out = gradient_checks(&settings);
            for o in out {
                assert_eq!(o.passed, o.name != name, "{o:?}");
            }
        }
    }

    #[test]
    fn coupling_oracle_example() {
        let e = BinEdges::uniform(4).unwrap();
        let p = Histogram::new(e.clone(), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let q = Histogram::new(e, vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        // Half the mass moves 0.5, half moves 0.75.
        assert!((monotone_coupling_cost(&p, &q) - 0.625).abs() < 1e-15);
    }

    #[test]
    fn brute_force_xi_example() {
        assert_eq!(xi_brute_force(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 1.0, 1.0], 3), 0.5);
    }
}
