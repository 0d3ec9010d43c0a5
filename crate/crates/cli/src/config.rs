//! Experiment configuration: one TOML file, overridable from the command
//! line, echoed into the output directory after resolution.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use elastic_res::losses::TargetForm;
use elastic_res::predictor::PredictorConfig;
use elastic_res::scale::{Preset, ScaleConfig, DEFAULT_TAU_MIN};
use elastic_res::simulator::{DatasetConfig, EvalConfig, OracleConfig, TrainConfig};
use elastic_res::verify::CheckSettings;

/// File name of the resolved configuration written next to the outputs.
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaleSection {
    pub tau_min: f64,
    pub tau_max: f64,
    /// When set, replaces `tau_max` with the preset's value.
    pub preset: Option<Preset>,
}

impl Default for ScaleSection {
    fn default() -> Self {
        Self {
            tau_min: DEFAULT_TAU_MIN,
            tau_max: Preset::M.tau_max(),
            preset: None,
        }
    }
}

impl ScaleSection {
    pub fn resolve(&self) -> Result<ScaleConfig<f64>> {
        let tau_max = self.preset.map_or(self.tau_max, Preset::tau_max);
        ScaleConfig::new(self.tau_min, tau_max).context("scale")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    pub tolerance: f64,
    pub step: f64,
    pub gradient_points: usize,
    pub wasserstein_pairs: usize,
    pub xi_samples: usize,
    pub seed: u64,
}

impl Default for CheckSection {
    fn default() -> Self {
        let d = CheckSettings::default();
        Self {
            tolerance: d.tolerance,
            step: d.step,
            gradient_points: d.gradient_points,
            wasserstein_pairs: d.wasserstein_pairs,
            xi_samples: d.xi_samples,
            seed: d.seed,
        }
    }
}

impl CheckSection {
    pub fn settings(&self, inject_fault: Option<String>) -> CheckSettings {
        CheckSettings {
            tolerance: self.tolerance,
            step: self.step,
            gradient_points: self.gradient_points,
            wasserstein_pairs: self.wasserstein_pairs,
            xi_samples: self.xi_samples,
            seed: self.seed,
            inject_fault,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            bail!("check.tolerance must be positive");
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            bail!("check.step must be positive");
        }
        if self.gradient_points == 0 || self.wasserstein_pairs == 0 || self.xi_samples == 0 {
            bail!("check.gradient_points, wasserstein_pairs and xi_samples must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Output directory; created when missing.
    pub out_dir: PathBuf,
    /// Dataset file; defaults to `dataset.txt` inside `out_dir`.
    pub dataset_path: Option<PathBuf>,
    pub scale: ScaleSection,
    pub dataset: DatasetConfig,
    pub oracle: OracleConfig,
    pub predictor: PredictorConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub check: CheckSection,
}

/// Command-line overrides, applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub no_elastic_losses: bool,
    pub form: Option<TargetForm>,
    pub no_lpf: bool,
    pub preset: Option<Preset>,
    pub tolerance: Option<f64>,
}

impl ExperimentConfig {
    /// Reads `path`, or starts from the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self {
                out_dir: PathBuf::from("out"),
                ..Self::default()
            });
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text)?;
        if cfg.out_dir.as_os_str().is_empty() {
            cfg.out_dir = PathBuf::from("out");
        }
        Ok(cfg)
    }

    /// Applies `o`. A seed override sets every seed in the file.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.dataset.seed = seed;
            self.oracle.seed = seed;
            self.predictor.init_seed = seed;
            self.train.seed = seed;
            self.check.seed = seed;
        }
        if o.no_elastic_losses {
            self.train.weights.scale = 0.0;
            self.train.weights.dist = 0.0;
        }
        if let Some(form) = o.form {
            self.train.form = form;
        }
        if o.no_lpf {
            self.train.lpf = false;
        }
        if let Some(p) = o.preset {
            self.scale.preset = Some(p);
        }
        if let Some(t) = o.tolerance {
            self.check.tolerance = t;
        }
    }

    /// Checks every section; the message names the offending field.
    pub fn validate(&self) -> Result<()> {
        self.scale.resolve()?;
        self.dataset.validate().context("dataset")?;
        self.oracle.validate().context("oracle")?;
        self.predictor.validate().context("predictor")?;
        self.train.validate().context("train")?;
        if self.eval.phi_bins == 0 || self.eval.size_buckets == 0 {
            bail!("eval.phi_bins and eval.size_buckets must be at least 1");
        }
        self.check.validate()?;
        Ok(())
    }

    pub fn dataset_file(&self) -> PathBuf {
        self.dataset_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("dataset.txt"))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Writes the resolved configuration into `out_dir`.
    pub fn echo(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.out_dir.join(RESOLVED_CONFIG);
        fs::write(&path, self.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
        assert_eq!(cfg.train, TrainConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml("[train]\nlearning_rate = 0.1\n").unwrap_err();
        assert!(format!("{err:#}").contains("learning_rate"), "{err:#}");
        assert!(ExperimentConfig::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let cfg = ExperimentConfig::from_toml("[train]\nlr_beta = -1.0\n").unwrap();
        let err = format!("{:#}", cfg.validate().unwrap_err());
        assert!(err.contains("train") && err.contains("lr_beta"), "{err}");
        let cfg = ExperimentConfig::from_toml("[scale]\ntau_min = 2.0\ntau_max = 1.0\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides() {
        let mut cfg = ExperimentConfig::from_toml("[scale]\npreset = \"S\"\n").unwrap();
        assert_eq!(cfg.scale.resolve().unwrap().tau_max(), 1.25);
        cfg.apply(&Overrides {
            seed: Some(9),
            no_elastic_losses: true,
            form: Some(TargetForm::Plain),
            no_lpf: true,
            preset: Some(Preset::H),
            ..Overrides::default()
        });
        assert_eq!(cfg.scale.resolve().unwrap().tau_max(), 2.25);
        assert_eq!((cfg.dataset.seed, cfg.oracle.seed, cfg.train.seed), (9, 9, 9));
        assert_eq!((cfg.train.weights.scale, cfg.train.weights.dist), (0.0, 0.0));
        assert_eq!(cfg.train.form, TargetForm::Plain);
        assert!(!cfg.train.lpf);
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = ExperimentConfig::from_toml("").unwrap();
        cfg.apply(&Overrides { preset: Some(Preset::L), ..Overrides::default() });
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }
}
