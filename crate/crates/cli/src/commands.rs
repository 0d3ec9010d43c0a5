//! The five verbs. Each one validates the whole configuration before doing
//! any work and writes its artifacts under `out_dir`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::Serialize;

use elastic_res::predictor::{init_params, read_checkpoint, write_checkpoint, Checkpoint};
use elastic_res::scale::Preset;
use elastic_res::simulator::{
    evaluate, format_dataset, generate_dataset, mean_std, parse_dataset, train, EvalMetrics,
    Scene, SimulatorError, TrainReport,
};
use elastic_res::verify::{run_checks, CheckOutcome};

use crate::config::ExperimentConfig;

pub const REPORT_FILE: &str = "report.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const PHI_HISTOGRAM_FILE: &str = "phi_histogram.json";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const SWEEP_FILE: &str = "sweep.csv";

/// Boundary trajectory file for a target form, e.g. `boundaries_plain.csv`.
pub fn boundaries_file(cfg: &ExperimentConfig) -> String {
    format!("boundaries_{}.csv", cfg.train.form)
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Vec<Scene>> {
    let path = cfg.dataset_file();
    let text = fs::read_to_string(&path).with_context(|| {
        format!("reading dataset {} (run `generate` first)", path.display())
    })?;
    let scenes = parse_dataset(&text).with_context(|| format!("in dataset {}", path.display()))?;
    if scenes.is_empty() {
        bail!("dataset {} is empty", path.display());
    }
    Ok(scenes)
}

/// Writes the dataset file and returns its path.
pub fn generate(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    cfg.echo()?;
    let scenes = generate_dataset(&cfg.dataset)?;
    let path = cfg.dataset_file();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, format_dataset(&scenes)).with_context(|| format!("writing {}", path.display()))?;

    let areas: Vec<f64> = scenes.iter().flat_map(|s| s.normalized_areas()).collect();
    let (area_mean, area_std) = mean_std(&areas);
    println!("wrote {} scenes to {}", scenes.len(), path.display());
    println!(
        "objects: {} total, {:.2} per scene; normalized area mean {:.4}, std {:.4}",
        areas.len(),
        areas.len() as f64 / scenes.len() as f64,
        area_mean,
        area_std
    );
    Ok(path)
}

/// Paths of everything [`train_command`] writes.
#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub report: PathBuf,
    pub boundaries: PathBuf,
    pub phi_histogram: PathBuf,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub artifacts: TrainArtifacts,
    pub report: TrainReport,
    pub metrics: EvalMetrics,
}

fn write_report(cfg: &ExperimentConfig, report: &TrainReport) -> Result<(PathBuf, PathBuf)> {
    let report_path = cfg.out_dir.join(REPORT_FILE);
    write_csv(&report_path, &report.records)?;
    let boundaries_path = cfg.out_dir.join(boundaries_file(cfg));
    write_csv(&boundaries_path, &report.trajectory)?;
    Ok((report_path, boundaries_path))
}

/// Trains and writes the report, boundary trajectory, φ histogram and
/// checkpoint. On divergence the partial report is still written.
pub fn train_command(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    cfg.echo()?;
    let scenes = load_dataset(cfg)?;
    let range = cfg.scale.resolve()?;
    let params = init_params(&cfg.predictor)?;
    info!(
        "training on {} scenes, tau_max {}, form {}, {} iterations",
        scenes.len(),
        range.tau_max(),
        cfg.train.form,
        cfg.train.iterations
    );
    let report = match train(&scenes, params, &range, &cfg.oracle, &cfg.train) {
        Ok(r) => r,
        Err(SimulatorError::Diverged { iteration, reason, report }) => {
            let (path, _) = write_report(cfg, &report)?;
            bail!(
                "training diverged at iteration {iteration}: {reason}; partial report in {}",
                path.display()
            );
        }
        Err(e) => return Err(e.into()),
    };
    let (report_path, boundaries_path) = write_report(cfg, &report)?;

    let metrics = evaluate(&scenes, &report.params, &range, &cfg.oracle, &cfg.eval)?;
    let phi_path = cfg.out_dir.join(PHI_HISTOGRAM_FILE);
    write_json(&phi_path, &metrics.phi_histogram)?;

    let ckpt_path = cfg.out_dir.join(CHECKPOINT_FILE);
    let file = File::create(&ckpt_path).with_context(|| format!("creating {}", ckpt_path.display()))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, &report.checkpoint())?;
    w.flush()?;

    if let Some(last) = report.records.last() {
        println!(
            "iteration {}: phi mean {:.4} std {:.4}, boundaries [{:.4}, {:.4}], pearson(size, phi) {:.4}",
            last.iteration, last.phi_mean, last.phi_std, last.boundary_lower, last.boundary_upper,
            last.pearson_size_phi
        );
    }
    println!("wrote {}", report_path.display());
    Ok(TrainOutcome {
        artifacts: TrainArtifacts {
            report: report_path,
            boundaries: boundaries_path,
            phi_histogram: phi_path,
            checkpoint: ckpt_path,
        },
        report,
        metrics,
    })
}

/// Scores the checkpoint in `out_dir` on the dataset.
pub fn evaluate_command(cfg: &ExperimentConfig) -> Result<EvalMetrics> {
    cfg.validate()?;
    cfg.echo()?;
    let scenes = load_dataset(cfg)?;
    let ckpt_path = cfg.out_dir.join(CHECKPOINT_FILE);
    let file = File::open(&ckpt_path)
        .with_context(|| format!("opening {} (run `train` first)", ckpt_path.display()))?;
    let ckpt: Checkpoint = read_checkpoint(std::io::BufReader::new(file))?;
    let metrics = evaluate(&scenes, &ckpt.predictor, &ckpt.range, &cfg.oracle, &cfg.eval)?;
    write_json(&cfg.out_dir.join(EVALUATION_FILE), &metrics)?;
    write_json(&cfg.out_dir.join(PHI_HISTOGRAM_FILE), &metrics.phi_histogram)?;
    println!(
        "phi mean {:.4} std {:.4}; mean oracle loss {:.4}; pearson(size, phi) {:.4}",
        metrics.phi_mean, metrics.phi_std, metrics.mean_oracle_loss, metrics.pearson_size_phi
    );
    for b in &metrics.size_buckets {
        println!(
            "  mean area [{:.4}, {:.4}] ({} scenes): mean phi {:.4}",
            b.lower, b.upper, b.count, b.mean_phi
        );
    }
    Ok(metrics)
}

/// Runs the self-check suite and prints one line per property.
pub fn check_command(cfg: &ExperimentConfig, inject_fault: Option<String>) -> Result<Vec<CheckOutcome>> {
    cfg.validate()?;
    if let Some(name) = &inject_fault {
        warn!("injecting a gradient fault into {name}");
    }
    let outcomes = run_checks(&cfg.check.settings(inject_fault));
    for o in &outcomes {
        println!(
            "{} {}/{}: metric {:.3e} (threshold {:.1e}); {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.suite,
            o.name,
            o.metric,
            o.threshold,
            o.detail
        );
    }
    Ok(outcomes)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub preset: String,
    pub tau_max: f64,
    pub phi_mean: f64,
    pub phi_std: f64,
    pub pearson_size_phi: f64,
    pub mean_oracle_loss: f64,
    pub boundary_lower: f64,
    pub boundary_upper: f64,
}

/// Trains every preset from S to H, each in its own subdirectory, on one
/// shared dataset, and summarizes them in `sweep.csv`.
pub fn sweep_command(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    cfg.echo()?;
    let mut base = cfg.clone();
    base.dataset_path = Some(cfg.dataset_file());
    if !base.dataset_file().exists() {
        generate(&base)?;
    }
    let mut rows = Vec::new();
    for preset in Preset::ALL {
        let mut run = base.clone();
        run.out_dir = cfg.out_dir.join(preset.to_string());
        run.scale.preset = Some(preset);
        let TrainOutcome { report, metrics, .. } = train_command(&run)?;
        let (lower, upper) = report
            .trajectory
            .last()
            .map_or((f64::NAN, f64::NAN), |p| (p.lower, p.upper));
        rows.push(SweepRow {
            preset: preset.to_string(),
            tau_max: preset.tau_max(),
            phi_mean: metrics.phi_mean,
            phi_std: metrics.phi_std,
            pearson_size_phi: metrics.pearson_size_phi,
            mean_oracle_loss: metrics.mean_oracle_loss,
            boundary_lower: lower,
            boundary_upper: upper,
        });
    }
    let path = cfg.out_dir.join(SWEEP_FILE);
    write_csv(&path, &rows)?;
    println!("wrote {}", path.display());
    Ok(rows)
}
