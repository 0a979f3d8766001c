//! `ushape`: pretrain, finetune, evaluate, forecast and inspect U-shaped forecasters.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::commands::EvalOptions;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "ushape",
    version,
    about = "U-shaped patch transformer for long-horizon forecasting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(&self.config, self.seed, self.out.clone())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Masked-reconstruction pretraining over every registered dataset.
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Trains the forecast head on top of a frozen pretrained backbone.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Per-horizon MSE/MAE/MAPE on each dataset's test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated horizons; defaults to the model horizon.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        /// Also train and report the linear and last-value baselines.
        #[arg(long)]
        baseline: bool,
        /// Score a stub that returns the true future instead of a model.
        #[arg(long)]
        oracle_stub: bool,
    },
    /// Forecasts the next T values of every column of an input CSV.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        /// Undo the per-window normalisation of the output.
        #[arg(long)]
        denormalize: bool,
    },
    /// Writes head-averaged attention maps for one input window.
    AttnDump {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
    /// Finite-difference check of every graph op and the small backbone.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn need(checkpoint: Option<PathBuf>) -> Result<PathBuf> {
    checkpoint.ok_or_else(|| ushape_core::Error::Usage("--checkpoint is required".into()).into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain { common } => commands::pretrain(&common.load()?),
        Command::Finetune { common, checkpoint } => {
            let ckpt = need(checkpoint)?;
            commands::finetune(&common.load()?, &ckpt)
        }
        Command::Eval {
            common,
            checkpoint,
            horizons,
            baseline,
            oracle_stub,
        } => commands::eval(
            &common.load()?,
            EvalOptions {
                checkpoint: checkpoint.as_deref(),
                horizons,
                baseline,
                oracle_stub,
            },
        ),
        Command::Forecast {
            common,
            checkpoint,
            input,
            denormalize,
        } => {
            let ckpt = need(checkpoint)?;
            commands::forecast(&common.load()?, &ckpt, &input, denormalize)
        }
        Command::AttnDump {
            common,
            checkpoint,
            input,
            channel,
        } => {
            let ckpt = need(checkpoint)?;
            commands::attn_dump(&common.load()?, &ckpt, &input, channel)
        }
        Command::Gradcheck {
            seeds,
            tolerance,
            out,
        } => commands::gradcheck(seeds, tolerance, out.as_deref()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ushape_core::Error>() {
            return if e.is_numeric() { 3 } else { 2 };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some()
            || cause.downcast_ref::<std::io::Error>().is_some()
        {
            return 2;
        }
    }
    1
}

/// The cause chain joined by ": ", skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if parts.last().is_none_or(|prev| !prev.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
