use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::predictor::DEFAULT_INPUT_DIM;
use crate::scale::Resolution;
use crate::simulator::SimulatorError;

/// Number of log-spaced area bins in the feature vector.
const AREA_SKETCH_BINS: usize = 8;
/// The area sketch spans `[10^AREA_SKETCH_LOG_MIN, 1]`.
const AREA_SKETCH_LOG_MIN: f64 = -3.0;

/// One ground-truth box in pixels, with a positive detection difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub width: f64,
    pub height: f64,
    pub difficulty: f64,
}

/// A synthetic image: nominal resolution, boxes and predictor features.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub resolution: Resolution,
    pub objects: Vec<SceneObject>,
    pub features: Vec<f64>,
}

impl Scene {
    /// Validates the objects and computes the features.
    pub fn new(resolution: Resolution, objects: Vec<SceneObject>) -> Result<Self, SimulatorError> {
        for (i, o) in objects.iter().enumerate() {
            let fits = o.width > 0.0
                && o.height > 0.0
                && o.width <= f64::from(resolution.width)
                && o.height <= f64::from(resolution.height);
            if !fits || !(o.difficulty > 0.0) || !o.difficulty.is_finite() {
                return Err(SimulatorError::InvalidScene(format!(
                    "object {i} ({} x {}, difficulty {}) does not fit a {}x{} image",
                    o.width, o.height, o.difficulty, resolution.width, resolution.height
                )));
            }
        }
        let features = scene_features(resolution, &objects);
        Ok(Self {
            resolution,
            objects,
            features,
        })
    }

    /// Reference area used to normalize box areas: the nominal image area.
    pub fn area_ref(&self) -> f64 {
        self.resolution.area()
    }

    /// Box areas divided by [`Scene::area_ref`].
    pub fn normalized_areas(&self) -> Vec<f64> {
        let r = self.area_ref();
        self.objects.iter().map(|o| o.width * o.height / r).collect()
    }

    /// Mean normalized box area, `None` without objects.
    pub fn mean_area(&self) -> Option<f64> {
        let a = self.normalized_areas();
        (!a.is_empty()).then(|| a.iter().sum::<f64>() / a.len() as f64)
    }
}

/// Parameters of the synthetic scene distribution.
///
/// Normalized box areas are log-normal with a scene-level and an
/// object-level component, so scenes differ in their typical object size.
/// `mean_area` is the mean of that log-normal before boxes are clipped to
/// the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_scenes: usize,
    pub seed: u64,
    pub short_side: u32,
    pub long_side_min: u32,
    pub long_side_max: u32,
    /// Objects per scene are `1 + Poisson(mean_objects − 1)`.
    pub mean_objects: f64,
    pub mean_area: f64,
    pub scene_log_std: f64,
    pub object_log_std: f64,
    /// Log-std of the width/height ratio.
    pub aspect_log_std: f64,
    /// Log-std of the difficulty, whose median is 1.
    pub difficulty_log_std: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_scenes: 2000,
            seed: 0,
            short_side: 600,
            long_side_min: 600,
            long_side_max: 1000,
            mean_objects: 4.0,
            mean_area: 0.05,
            scene_log_std: 0.8,
            object_log_std: 0.4,
            aspect_log_std: 0.3,
            difficulty_log_std: 0.2,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        let bad = |msg: &str| Err(SimulatorError::InvalidConfig(msg.to_string()));
        if self.n_scenes == 0 {
            return bad("n_scenes must be at least 1");
        }
        if self.short_side < 8 {
            return bad("short_side must be at least 8");
        }
        if self.long_side_min < self.short_side || self.long_side_max < self.long_side_min {
            return bad("need short_side <= long_side_min <= long_side_max");
        }
        if !(self.mean_objects >= 1.0) || !self.mean_objects.is_finite() {
            return bad("mean_objects must be a finite number >= 1");
        }
        if !(self.mean_area > 0.0 && self.mean_area < 1.0) {
            return bad("mean_area must lie in (0, 1)");
        }
        for (name, v) in [
            ("scene_log_std", self.scene_log_std),
            ("object_log_std", self.object_log_std),
            ("aspect_log_std", self.aspect_log_std),
            ("difficulty_log_std", self.difficulty_log_std),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SimulatorError::InvalidConfig(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

/// Draws `cfg.n_scenes` scenes; the result depends only on `cfg`.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Vec<Scene>, SimulatorError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total_var = cfg.scene_log_std.powi(2) + cfg.object_log_std.powi(2);
    let log_median = cfg.mean_area.ln() - total_var / 2.0;
    let extra = (cfg.mean_objects > 1.0)
        .then(|| Poisson::new(cfg.mean_objects - 1.0))
        .transpose()
        .map_err(|e| SimulatorError::InvalidConfig(e.to_string()))?;
    let difficulty = LogNormal::new(0.0, cfg.difficulty_log_std)
        .map_err(|e| SimulatorError::InvalidConfig(e.to_string()))?;

    let mut scenes = Vec::with_capacity(cfg.n_scenes);
    for _ in 0..cfg.n_scenes {
        let long = rng.random_range(cfg.long_side_min..=cfg.long_side_max);
        let resolution = if rng.random_bool(0.5) {
            Resolution { width: long, height: cfg.short_side }
        } else {
            Resolution { width: cfg.short_side, height: long }
        };
        let count = 1 + extra.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        let scene_shift: f64 = cfg.scene_log_std * rng.sample::<f64, _>(StandardNormal);
        let (img_w, img_h) = (f64::from(resolution.width), f64::from(resolution.height));
        let objects = (0..count)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                let area = (log_median + scene_shift + cfg.object_log_std * z).exp();
                let za: f64 = rng.sample(StandardNormal);
                let aspect = (cfg.aspect_log_std * za).exp();
                let pixels = area * resolution.area();
                SceneObject {
                    width: (pixels * aspect).sqrt().clamp(1.0, img_w),
                    height: (pixels / aspect).sqrt().clamp(1.0, img_h),
                    difficulty: difficulty.sample(&mut rng),
                }
            })
            .collect();
        scenes.push(Scene::new(resolution, objects)?);
    }
    Ok(scenes)
}

/// Fixed-width summary of a scene's boxes.
///
/// Layout: object count / 10; mean, std, min and max of the relative
/// linear size `√(area)`; mean of `ln(area)` / 5; std of `ln(area)`; mean
/// `|ln(width / height)|`; then the fraction of boxes in each of eight
/// log-spaced area bins between `1e-3` and 1. A scene without boxes maps
/// to all zeros.
pub fn scene_features(resolution: Resolution, objects: &[SceneObject]) -> Vec<f64> {
    let mut f = vec![0.0; DEFAULT_INPUT_DIM];
    if objects.is_empty() {
        return f;
    }
    let n = objects.len() as f64;
    let areas: Vec<f64> = objects
        .iter()
        .map(|o| o.width * o.height / resolution.area())
        .collect();
    let sizes: Vec<f64> = areas.iter().map(|a| a.sqrt()).collect();
    let logs: Vec<f64> = areas.iter().map(|a| a.ln()).collect();
    let (size_mean, size_std) = mean_std(&sizes);
    let (log_mean, log_std) = mean_std(&logs);
    f[0] = n / 10.0;
    f[1] = size_mean;
    f[2] = size_std;
    f[3] = sizes.iter().copied().fold(f64::INFINITY, f64::min);
    f[4] = sizes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    f[5] = log_mean / 5.0;
    f[6] = log_std;
    f[7] = objects.iter().map(|o| (o.width / o.height).ln().abs()).sum::<f64>() / n;
    let bin_width = -AREA_SKETCH_LOG_MIN / AREA_SKETCH_BINS as f64;
    for a in &areas {
        let pos = (a.log10() - AREA_SKETCH_LOG_MIN) / bin_width;
        let k = (pos.floor().max(0.0) as usize).min(AREA_SKETCH_BINS - 1);
        f[8 + k] += 1.0 / n;
    }
    f
}

/// Population mean and standard deviation; `(0, 0)` for an empty slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One scene per line: `width height count` followed by `count` triples
/// `object_width object_height difficulty`, all separated by single
/// spaces. Numbers use the shortest representation that parses back to
/// the same `f64`. Features are not stored; they are recomputed on read.
pub fn format_scene(scene: &Scene) -> String {
    let mut line = format!(
        "{} {} {}",
        scene.resolution.width,
        scene.resolution.height,
        scene.objects.len()
    );
    for o in &scene.objects {
        write!(line, " {} {} {}", o.width, o.height, o.difficulty).expect("writing to a String");
    }
    line
}

pub fn parse_scene(line: &str) -> Result<Scene, SimulatorError> {
    let bad = |msg: String| SimulatorError::Parse(msg);
    let mut tokens = line.split_whitespace();
    let mut next = |what: &str| tokens.next().ok_or_else(|| bad(format!("missing {what}")));
    let width: u32 = next("width")?.parse().map_err(|e| bad(format!("width: {e}")))?;
    let height: u32 = next("height")?.parse().map_err(|e| bad(format!("height: {e}")))?;
    let count: usize = next("object count")?
        .parse()
        .map_err(|e| bad(format!("object count: {e}")))?;
    let resolution =
        Resolution::new(width, height).ok_or_else(|| bad("zero-sized image".to_string()))?;
    let mut objects = Vec::with_capacity(count);
    for i in 0..count {
        let mut field = |name: &str| -> Result<f64, SimulatorError> {
            next(&format!("object {i} {name}"))?
                .parse::<f64>()
                .map_err(|e| bad(format!("object {i} {name}: {e}")))
        };
        objects.push(SceneObject {
            width: field("width")?,
            height: field("height")?,
            difficulty: field("difficulty")?,
        });
    }
    if let Some(extra) = tokens.next() {
        return Err(bad(format!("unexpected trailing token {extra:?}")));
    }
    Scene::new(resolution, objects)
}

/// The whole dataset, one line per scene, each terminated by `\n`.
pub fn format_dataset(scenes: &[Scene]) -> String {
    let mut out = String::new();
    for s in scenes {
        out.push_str(&format_scene(s));
        out.push('\n');
    }
    out
}

/// Inverse of [`format_dataset`]; blank lines are not allowed.
pub fn parse_dataset(text: &str) -> Result<Vec<Scene>, SimulatorError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            parse_scene(line).map_err(|e| SimulatorError::Parse(format!("line {}: {e}", i + 1)))
        })
        .collect()
}
