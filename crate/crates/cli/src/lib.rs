// SPDX-License-Identifier: Apache-2.0

//! `sumshrink`: calibration, delay tables, communication accounting and
//! bound reports from a TOML experiment description.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;

pub use commands::{run, Failure, FailureKind};
pub use config::{Profile, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "sumshrink",
    version,
    about = "Monitor many data streams with SUM-shrinkage schemes"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Master seed; overrides `experiment.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Replication count; overrides the profile's counts.
    #[arg(long, global = true)]
    pub reps: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "desk")]
    pub profile: Profile,
    /// Write result files here instead of printing them.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find thresholds `a` meeting the ARL constraint for schemes without one.
    Calibrate { config: PathBuf },
    /// Simulate detection delays for every scheme and scenario.
    Delay {
        config: PathBuf,
        /// JSON lines from `calibrate` supplying missing thresholds.
        #[arg(long)]
        calibrated: Option<PathBuf>,
    },
    /// Pre-change fraction of transmitting sensors.
    Comm { config: PathBuf },
    /// Theoretical ARL bound and first-order delay floor.
    Bounds(BoundsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Number of affected streams for the delay floor.
    #[arg(long)]
    pub affected: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
}
