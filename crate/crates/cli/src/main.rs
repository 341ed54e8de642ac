//! Command-line front end: synthetic data, embedding, alignment, training,
//! evaluation, cluster export, gradient checks and experiments.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

pub use config::CliConfig;

/// Failure classes with stable exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<meshpool::Error> for CliError {
    fn from(e: meshpool::Error) -> Self {
        use meshpool::Error as E;
        match e {
            E::Numerical(_) | E::Convergence { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "meshpool", version, about = "Graph convolution with learnable pooling on surface meshes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Output directory handling shared by every writing command.
#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset: meshes plus manifest.json.
    GenSynthetic {
        /// two_region_class or parcel_size_reg.
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        n_min: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Region contrast of two_region_class.
        #[arg(long)]
        delta: Option<f64>,
        /// Standard deviation of the field noise.
        #[arg(long)]
        noise: Option<f64>,
        /// Number of parcels.
        #[arg(long)]
        parcels: Option<usize>,
        /// TOML configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compute the unaligned spectral embedding of every mesh in a manifest.
    Embed {
        #[arg(long)]
        manifest: PathBuf,
        /// Embedding dimension.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Align every embedding in a directory to a reference embedding.
    Align {
        /// Directory of `.emb.tsv` files written by `embed`.
        #[arg(long)]
        embeddings: PathBuf,
        /// Reference embedding file.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train a model on a manifest; writes a checkpoint and metrics.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Laplacian regularization weight.
        #[arg(long)]
        alpha: Option<f64>,
        /// learnable, global_average, fixed_parcellation or spectral_kmeans.
        #[arg(long)]
        pooling: Option<String>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        eval_every: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Evaluate a checkpoint on one split of a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Export the learned first-level clusters of one mesh.
    Clusters {
        #[arg(long)]
        checkpoint: PathBuf,
        /// OFF mesh with its field sidecar.
        #[arg(long)]
        mesh: PathBuf,
        /// Input field names, comma separated.
        #[arg(long, default_value = "thickness,depth")]
        fields: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Finite-difference check of every network parameter on a synthetic mesh.
    Gradcheck {
        /// Node count of the synthetic mesh.
        #[arg(long, default_value_t = 30)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corrupt the output gradient; used to test the checker itself.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Run a multi-seed experiment and write comparison tables.
    Experiment {
        /// pooling_comparison, size_study, parcel_regression, classify or regress.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of seeds, 0..n.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
