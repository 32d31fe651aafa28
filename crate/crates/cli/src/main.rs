//! `xdcert`: generate multi-domain data, train invariant Lipschitz encoders,
//! certify them by randomized smoothing and summarise the certificates.
//!
//! Exit codes: 0 success, 2 validation error, 3 runtime or numeric error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Self::Runtime(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "invalid input: {m}"),
            Self::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<xdcert::Error> for CliError {
    fn from(e: xdcert::Error) -> Self {
        use xdcert::Error as E;
        match e {
            E::Io(_) | E::Singular { .. } | E::Diverged { .. } => Self::Runtime(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "xdcert", version, about = "Certified cross-domain robustness workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Certification worker threads; never changes results.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset cache.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset cache; generated from the config when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Certify the held-out environment with a trained checkpoint.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Defaults to model.ckpt in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Summarise records files into summary.csv, curve.csv and curve.svg.
    Evaluate {
        /// Optional config supplying the radius grid.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Train and certify every variant (or lambda / sigma value) per seed.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn context(common: Common) -> Result<Context, CliError> {
    let (mut config, config_bytes) = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.override_seed(seed);
        config.validate()?;
    }
    if common.workers == 0 {
        return Err(CliError::validation("--workers must be at least 1"));
    }
    Ok(Context {
        config,
        config_bytes,
        out: common.out,
        workers: common.workers,
        seed_override: common.seed,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { common } => commands::gen_data(&context(common)?),
        Command::Train { common, dataset } => commands::train_cmd(&context(common)?, dataset.as_deref()),
        Command::Certify {
            common,
            checkpoint,
            dataset,
        } => commands::certify_cmd(&context(common)?, checkpoint.as_deref(), dataset.as_deref()),
        Command::Evaluate {
            config,
            out,
            seed,
            records,
        } => {
            let loaded = config.as_deref().map(RunConfig::load).transpose()?;
            let loaded = loaded.map(|(mut c, bytes)| {
                if let Some(s) = seed {
                    c.override_seed(s);
                }
                (c, bytes)
            });
            commands::evaluate_cmd(&out, loaded.as_ref().map(|(c, b)| (c, b.as_slice())), &records, seed)
        }
        Command::Sweep { common, dataset } => commands::sweep_cmd(&context(common)?, dataset.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
