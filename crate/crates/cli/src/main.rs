use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod manifest;

/// Stochastic-gradient MCMC for small Bayesian neural networks.
#[derive(Debug, Parser)]
#[command(name = "l2e", version)]
struct Cli {
    /// Worker threads for ES rollouts, chains and diagnostics.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; falls back to `[paths] out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Meta-train a learned sampler with evolution strategies.
    MetaTrain {
        #[command(flatten)]
        common: Common,
        /// Start from this meta checkpoint instead of a fresh initialisation.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run sampler chains on the configured dataset and model.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Meta checkpoint for the l2e and kinetic_l2e kernels.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Predictive metrics of the pooled samples on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Reference predictive (.l2ep or JSON) for agreement and total variation.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(required = true)]
        samples: Vec<PathBuf>,
    },
    /// ESS, split R-hat and update-norm traces.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        samples: Vec<PathBuf>,
    },
    /// Losses along linear paths between snapshots and their cosine similarity.
    Probe {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        samples: Vec<PathBuf>,
    },
    /// Export sample sets and meta checkpoints as CSV/JSON.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        samples: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::MetaTrain { common, checkpoint } => {
            commands::meta_train(&common, checkpoint.as_deref())
        }
        Command::Sample { common, checkpoint } => commands::sample(&common, checkpoint.as_deref()),
        Command::Evaluate {
            common,
            reference,
            samples,
        } => commands::evaluate(&common, reference.as_deref(), &samples),
        Command::Diagnose { common, samples } => commands::diagnose(&common, &samples),
        Command::Probe { common, samples } => commands::probe(&common, &samples),
        Command::Export {
            common,
            checkpoint,
            samples,
        } => commands::export(&common, checkpoint.as_deref(), &samples),
    }
}

/// 2 config or contract, 3 divergence, 4 format or version, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<l2e::Error>() {
            return match e {
                l2e::Error::Config(_) | l2e::Error::Contract(_) => 2,
                l2e::Error::Divergence { .. } => 3,
                l2e::Error::Format { .. } | l2e::Error::Version { .. } | l2e::Error::Json(_) => 4,
                l2e::Error::Io(_) => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
