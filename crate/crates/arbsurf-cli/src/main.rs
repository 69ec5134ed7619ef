//! Command-line front end for the surface toolkit: synthetic data
//! generation, two-step model training, backtest evaluation, and
//! scenario simulation, driven by a TOML run configuration.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 when
//! a numerical routine fails (diverged training or a solver breakdown).

mod commands;
mod config;
mod manifest;
mod pipeline;
mod reports;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use crate::commands::{cmd_evaluate, cmd_fit, cmd_gen_data, cmd_predict, cmd_simulate};
use crate::config::{RunConfig, StepTwoKind};
use crate::pipeline::Workspace;

#[derive(Parser)]
#[command(
    name = "arbsurf",
    version,
    about = "Predict and simulate arbitrage-free implied-volatility surfaces"
)]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory that relative configured paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Overrides the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic quote panel and write the quotes CSV.
    GenData {
        /// Overrides the configured number of days.
        #[arg(long)]
        days: Option<usize>,
    },
    /// Train the feature model, the feature predictor, and (for the dnn
    /// second stage) the surface network.
    Fit {
        /// Feature method: sam, pca, or vae.
        #[arg(long)]
        features: Option<String>,
        /// Second stage: dnn (surface network) or dfw (quadratic refit).
        #[arg(long)]
        step2: Option<String>,
        /// Eigenmodes kept by the pca method.
        #[arg(long)]
        components: Option<usize>,
        /// Latent dimension of the vae method.
        #[arg(long)]
        latent_dim: Option<usize>,
    },
    /// Write per-quote backtest predictions over the held-out days.
    Predict {
        /// Comma-separated model tags, e.g. sam-dnn,pca-dfw,dfw.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
    },
    /// Write error measures, model comparisons, and the violation scan.
    Evaluate {
        /// Comma-separated model tags, e.g. sam-dnn,pca-dfw,dfw.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
    },
    /// Simulate surface scenarios past the end of the panel.
    Simulate {
        /// Overrides the configured ensemble size.
        #[arg(long)]
        paths: Option<usize>,
        /// Overrides the configured step count.
        #[arg(long)]
        horizon: Option<usize>,
        /// Error distribution: gaussian or bootstrap.
        #[arg(long)]
        noise: Option<String>,
    },
}

fn parse_step2(tag: &str) -> Result<StepTwoKind> {
    match tag {
        "dnn" => Ok(StepTwoKind::Dnn),
        "dfw" => Ok(StepTwoKind::Dfw),
        _ => bail!("unknown second stage {tag:?} (expected dnn or dfw)"),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match &cli.command {
        Command::GenData { days } => {
            if let Some(days) = days {
                config.data.days = *days;
            }
        }
        Command::Fit {
            features,
            step2,
            components,
            latent_dim,
        } => {
            if let Some(features) = features {
                config.features.method = features.clone();
            }
            if let Some(step2) = step2 {
                config.features.step2 = parse_step2(step2)?;
            }
            if let Some(components) = components {
                config.features.components = *components;
            }
            if let Some(latent_dim) = latent_dim {
                config.features.latent_dim = *latent_dim;
            }
        }
        Command::Predict { models } | Command::Evaluate { models } => {
            if let Some(models) = models {
                config.evaluate.models = models.clone();
            }
        }
        Command::Simulate {
            paths,
            horizon,
            noise,
        } => {
            if let Some(paths) = paths {
                config.simulate.paths = *paths;
            }
            if let Some(horizon) = horizon {
                config.simulate.horizon = *horizon;
            }
            if let Some(noise) = noise {
                config.simulate.noise = noise.clone();
            }
        }
    }
    config.validate()?;
    let ws = Workspace::new(cli.out.clone(), config)?;
    match &cli.command {
        Command::GenData { .. } => cmd_gen_data(&ws),
        Command::Fit { .. } => cmd_fit(&ws),
        Command::Predict { .. } => cmd_predict(&ws),
        Command::Evaluate { .. } => cmd_evaluate(&ws),
        Command::Simulate { .. } => cmd_simulate(&ws),
    }
}

/// 3 for numerical failures anywhere in the chain, 2 otherwise.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<arbsurf::Error>() {
            if matches!(e, arbsurf::Error::Diverged(_) | arbsurf::Error::Solver { .. }) {
                return 3;
            }
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
