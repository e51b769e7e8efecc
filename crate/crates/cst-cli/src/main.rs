//! `cst` — counterfactual situation testing from the command line.
//!
//! Subcommands: `generate` (built-in scenario datasets), `audit` (run one
//! method and write a report CSV plus its manifest), and `compare` (the
//! 4-method × k-grid table with containment diagnostics).

mod commands;
mod manifest;
mod spec_files;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use cst_core::detection::VarianceMode;
use cst_core::scm::AbductionMode;

#[derive(Parser)]
#[command(
    name = "cst",
    version,
    about = "Individual discrimination auditing with counterfactual situation testing"
)]
struct Cli {
    /// Cap the number of audit worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Counterfactual situation testing.
    Cst,
    /// Standard situation testing (factual test center, centers excluded).
    St,
    /// Counterfactual fairness (center decisions only).
    Cf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarianceArg {
    /// Published difference form with clamping at a negative radicand.
    AsWritten,
    /// Conventional two-proportion sum.
    StandardSum,
}

impl From<VarianceArg> for VarianceMode {
    fn from(v: VarianceArg) -> Self {
        match v {
            VarianceArg::AsWritten => VarianceMode::AsWritten,
            VarianceArg::StandardSum => VarianceMode::StandardSum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AbductionArg {
    /// Stored generation latents (toolkit-generated data only).
    Oracle,
    /// Residuals from the deterministic assignment parts.
    Residual,
}

impl From<AbductionArg> for AbductionMode {
    fn from(v: AbductionArg) -> Self {
        match v {
            AbductionArg::Oracle => AbductionMode::Oracle,
            AbductionArg::Residual => AbductionMode::Residual,
        }
    }
}

/// Shared audit inputs and knobs (command-line values override the config
/// file, which overrides the built-in defaults).
#[derive(Debug, clap::Args)]
pub struct AuditArgs {
    /// Data CSV (header row, '.' decimal).
    #[arg(long)]
    data: PathBuf,

    /// Schema config TOML (column kinds/roles, protected values, classifier).
    #[arg(long)]
    schema: PathBuf,

    /// SCM spec TOML (required for counterfactual methods).
    #[arg(long)]
    scm: Option<PathBuf>,

    /// Intervention, e.g. `A=0` or `R=0,G=0` (joint = intersectional).
    #[arg(long)]
    intervention: Option<String>,

    /// Group size.
    #[arg(long)]
    k: Option<usize>,

    /// Significance level.
    #[arg(long)]
    alpha: Option<f64>,

    /// Minimum deviation counted as discrimination.
    #[arg(long)]
    tau: Option<f64>,

    /// Count the search centers into the rates (k+1 denominators).
    #[arg(long)]
    include_centers: bool,

    /// Wald variance formula.
    #[arg(long, value_enum)]
    variance_mode: Option<VarianceArg>,

    /// Abduction mode (default residual).
    #[arg(long, value_enum)]
    abduction: Option<AbductionArg>,

    /// Latents JSON from `generate` (required for oracle abduction).
    #[arg(long)]
    latents: Option<PathBuf>,

    /// Optional maximum allowed neighbor distance.
    #[arg(long)]
    max_distance: Option<f64>,

    /// Disable dataset min-max normalization of attribute distances.
    #[arg(long)]
    no_normalize: bool,

    /// Config file with default knob values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a built-in scenario: data CSV, latents JSON, and SCM spec.
    Generate {
        /// Scenario name: `loan` or `law-school` (synthetic).
        scenario: String,

        /// Number of records.
        #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,

        /// RNG seed.
        #[arg(long, default_value_t = 42)]
        seed: u64,

        /// Output directory.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },

    /// Audit a dataset with one method and write the report CSV + manifest.
    Audit {
        #[command(flatten)]
        args: AuditArgs,

        /// Audit method.
        #[arg(long, value_enum)]
        method: MethodArg,

        /// Report CSV output path (manifest written alongside).
        #[arg(long)]
        out: PathBuf,
    },

    /// Run CST (w/o), ST, CST, and CF across a k grid and print the table.
    Compare {
        #[command(flatten)]
        args: AuditArgs,

        /// Comma-separated k grid.
        #[arg(long, default_value = "15,30,50,100")]
        k_grid: String,

        /// Optional CSV output for the comparison table (+ manifest).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("cannot configure worker pool")?;
    }
    match cli.command {
        Command::Generate {
            scenario,
            n,
            seed,
            out_dir,
        } => commands::generate(&scenario, n as usize, seed, &out_dir),
        Command::Audit { args, method, out } => commands::audit(&args, method, &out, cli.jobs),
        Command::Compare { args, k_grid, out } => {
            commands::compare(&args, &k_grid, out.as_deref(), cli.jobs)
        }
    }
}
