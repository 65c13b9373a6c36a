//! Command-line front end for `tmse-core`.
//!
//! Every command reads a [`RunConfig`], writes its artifacts into the output
//! directory and echoes the effective configuration as
//! `effective_config.txt` next to them.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tmse_core::{Error, Result};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "tmse",
    version,
    about = "Target-matching speech enhancement toolkit"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Configuration file with `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `sampler.steps`.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mean and SNR trajectories of the three mean schedules.
    ScheduleCurves,
    /// Monte-Carlo variance of the flow-matching and target-matching targets.
    ObjectiveVariance,
    /// Euler solver error against the step count with an exact predictor.
    OracleConvergence,
    /// Perturbed spectrogram magnitudes for every schedule at t = 0.1 … 0.9.
    PerturbDemo {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        noisy: PathBuf,
    },
    /// Writes a synthetic paired corpus to `<out>/clean` and `<out>/noisy`.
    Synth,
    /// Trains a predictor and writes a checkpoint and a per-epoch loss log.
    Train {
        /// Generate the training set from the `synth.*` keys.
        #[arg(long, conflicts_with = "data", required_unless_present = "data")]
        synthetic: bool,
        /// Directory holding `clean/` and `noisy/` with matching file names.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Enhances noisy WAV files (or directories of them).
    Enhance {
        #[arg(
            long,
            conflicts_with = "oracle_with",
            required_unless_present = "oracle_with"
        )]
        checkpoint: Option<PathBuf>,
        /// Use the true clean files in this directory as the predictor.
        #[arg(long)]
        oracle_with: Option<PathBuf>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Per-file SI-SDR and SNR of estimates against references.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
}

impl GlobalArgs {
    /// Loads the config file (or defaults) and applies flag overrides.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.set("seed", &seed.to_string())?;
        }
        if let Some(n) = self.steps {
            cfg.set("sampler.steps", &n.to_string())?;
        }
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.global.resolve()?;
    let out = cli.global.out.as_path();
    create_dir(out)?;
    write_text(&out.join("effective_config.txt"), &cfg.to_text())?;
    match &cli.command {
        Command::ScheduleCurves => commands::schedule_curves(&cfg, out),
        Command::ObjectiveVariance => commands::objective_variance(&cfg, out),
        Command::OracleConvergence => commands::oracle_convergence(&cfg, out),
        Command::PerturbDemo { clean, noisy } => commands::perturb_demo(&cfg, clean, noisy, out),
        Command::Synth => commands::synth(&cfg, out),
        Command::Train { data, .. } => commands::train(&cfg, data.as_deref(), out),
        Command::Enhance {
            checkpoint,
            oracle_with,
            inputs,
        } => {
            let source = match (checkpoint, oracle_with) {
                (_, Some(dir)) => commands::Source::Oracle(dir.clone()),
                (Some(ck), None) => commands::Source::Checkpoint(ck.clone()),
                (None, None) => {
                    return Err(Error::Config(
                        "enhance needs --checkpoint or --oracle-with".into(),
                    ))
                }
            };
            commands::enhance(&cfg, &source, inputs, out)
        }
        Command::Eval { est, reference } => commands::eval(est, reference, out),
    }
}

/// Single-line, machine-parseable error report.
pub fn error_line(err: &Error) -> String {
    let msg = err.to_string().replace('\n', " ");
    format!("error[{}]: {msg}", err.tag())
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    log::info!("wrote {}", path.display());
    Ok(())
}
