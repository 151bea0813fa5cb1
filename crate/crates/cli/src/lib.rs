//! Command-line pipeline: synthetic data, preparation, two-stage training,
//! generation, reconstruction and evaluation.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "udfgen", version, about = "Generate 3D shapes with internal structure from unsigned distance fields")]
pub struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured run seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory of this command.
    #[arg(long, global = true, default_value = "udfgen-out")]
    pub out: PathBuf,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write nested-shell synthetic meshes as OBJ files.
    MakeSynthetic {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Normalize, curate, voxelize and sample ground-truth distances.
    Prepare {
        /// Directory of input shapes (overrides data.input_dir).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train the autoencoder on a prepared dataset.
    TrainVqudf {
        #[arg(long)]
        data: PathBuf,
    },
    /// Encode a prepared dataset into token sequences.
    Tokenize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train the transformer on a token file.
    TrainTransformer {
        #[arg(long)]
        tokens: PathBuf,
    },
    /// Sample token grids, decode them and extract point clouds.
    Generate {
        #[arg(long)]
        vqudf: PathBuf,
        #[arg(long)]
        transformer: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    /// Encode one shape and extract its decoded surface.
    Reconstruct {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        shape: PathBuf,
    },
    /// Score generated clouds against reference clouds.
    Evaluate {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
}

/// Runs a parsed command line with `env` as the override source.
pub fn run_with_env<I>(cli: &Cli, env: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut cfg = RunConfig::load(cli.config.as_deref(), env)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = &cli.out;
    match &cli.command {
        Command::MakeSynthetic { count } => {
            commands::make_synthetic(&cfg, *count, out)?;
        }
        Command::Prepare { input } => {
            commands::prepare(&cfg, input.as_deref(), out)?;
        }
        Command::TrainVqudf { data } => {
            commands::train_vqudf_cmd(&cfg, data, out)?;
        }
        Command::Tokenize { data, checkpoint } => {
            commands::tokenize_cmd(&cfg, data, checkpoint, out)?;
        }
        Command::TrainTransformer { tokens } => {
            commands::train_transformer_cmd(&cfg, tokens, out)?;
        }
        Command::Generate {
            vqudf,
            transformer,
            count,
        } => {
            commands::generate_cmd(&cfg, vqudf, transformer, *count, out)?;
        }
        Command::Reconstruct { checkpoint, shape } => {
            commands::reconstruct_cmd(&cfg, checkpoint, shape, out)?;
        }
        Command::Evaluate { generated, reference } => {
            commands::evaluate_cmd(&cfg, generated, reference, out)?;
        }
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    run_with_env(cli, std::env::vars())
}
