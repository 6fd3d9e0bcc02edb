use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "lossmanifold", version, about = "Build, analyze and walk the zero-loss set of small MLPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Run directory; output files must not exist yet.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic dataset.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Construct an exact fit of a dataset.
    FitExact {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Perturb labels within this radius before fitting (overrides the config).
        #[arg(long, value_name = "EPS")]
        perturb_eps: Option<f64>,
    },
    /// Plain gradient descent from a random initialisation.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
    },
    /// Hessian spectra, Jacobian rank and manifold dimension at a point.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[arg(long, value_name = "PATH")]
        params: PathBuf,
    },
    /// Walk along the zero-loss set from a point on it.
    Walk {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[arg(long, value_name = "PATH")]
        params: PathBuf,
    },
    /// Summarize report files as a table.
    Report {
        /// Also write summary.csv and summary.txt here.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// No colors in the terminal table (also enabled by NO_COLOR).
        #[arg(long)]
        plain: bool,
        #[arg(value_name = "REPORT")]
        reports: Vec<PathBuf>,
    },
}
