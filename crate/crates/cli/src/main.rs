use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use elastic_res::losses::TargetForm;
use elastic_res::scale::Preset;
use elastic_res::verify::all_passed;
use elastic_res_cli::commands;
use elastic_res_cli::config::{ExperimentConfig, Overrides};

/// Environment variable holding the log filter, e.g. `debug`.
const LOG_ENV: &str = "ELASTIC_RES_LOG";

#[derive(Parser)]
#[command(name = "elastic-res", version, about = "Learnable input resolution on a synthetic detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset, one scene per line.
    Generate(Common),
    /// Train the scale predictor and write the report and checkpoint.
    Train(Common),
    /// Score the checkpoint in the output directory.
    Evaluate(Common),
    /// Run the gradient, Wasserstein and ξ self-checks.
    Check {
        #[command(flatten)]
        common: Common,
        /// Relative tolerance for the gradient checks.
        #[arg(long)]
        tolerance: Option<f64>,
        /// Perturb the gradient of the named loss to confirm the check notices.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Train every preset from S to H on one dataset.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created when missing.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Zero the scale and distribution loss weights.
    #[arg(long)]
    no_elastic_losses: bool,
    /// Target weighting: likelihood or plain.
    #[arg(long)]
    form: Option<TargetForm>,
    /// Disable the low-pass factor on the distribution loss.
    #[arg(long)]
    no_lpf: bool,
    /// Scale range preset (S, M, B, L or H).
    #[arg(long)]
    preset: Option<Preset>,
}

impl Common {
    fn resolve(&self, tolerance: Option<f64>) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(self.config.as_deref())?;
        cfg.apply(&Overrides {
            out: self.out.clone(),
            seed: self.seed,
            no_elastic_losses: self.no_elastic_losses,
            form: self.form,
            no_lpf: self.no_lpf,
            preset: self.preset,
            tolerance,
        });
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate(c) => commands::generate(&c.resolve(None)?).map(|_| true),
        Command::Train(c) => commands::train_command(&c.resolve(None)?).map(|_| true),
        Command::Evaluate(c) => commands::evaluate_command(&c.resolve(None)?).map(|_| true),
        Command::Check { common, tolerance, inject_fault } => {
            let outcomes = commands::check_command(&common.resolve(tolerance)?, inject_fault)?;
            Ok(all_passed(&outcomes))
        }
        Command::Sweep(c) => commands::sweep_command(&c.resolve(None)?).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
