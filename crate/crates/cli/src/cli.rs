use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use quadhedge::{Capital, Mode};

/// Variance-optimal hedging and pricing on finite scenario trees.
#[derive(Parser, Debug)]
#[command(name = "quadhedge", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Denominator used for the hedge coefficients
    #[arg(long, global = true, default_value = "matrix", value_parser = parse_mode)]
    pub mode: Mode,

    /// Threshold below which a denominator counts as zero
    #[arg(long, global = true, default_value_t = quadhedge::engine::DEFAULT_EPS_DEG)]
    pub eps_deg: f64,

    /// Scaled tolerance for the invariant battery
    #[arg(long, global = true, default_value_t = quadhedge::verify::DEFAULT_CHECK_TOL)]
    pub check_tol: f64,

    /// Seed for random batteries
    #[arg(long, global = true, env = "QUADHEDGE_SEED", default_value_t = 42)]
    pub seed: u64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Write to this file instead of stdout
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a generated tree file
    #[command(subcommand)]
    Gen(GenKind),
    /// Quadratic price c* and value function coefficients
    Price {
        tree: PathBuf,
        /// Comma-separated capitals for a sampled V(c) table
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        capital: Vec<f64>,
    },
    /// Optimal strategy, gains, residuals and Z
    Hedge {
        tree: PathBuf,
        /// `optimal`, a real, or a comma-separated list
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "optimal", value_parser = parse_capital)]
        capital: Vec<Capital>,
    },
    /// Run the invariant battery on a tree or on seeded random trees
    Verify {
        #[arg(required_unless_present = "random", conflicts_with = "random")]
        tree: Option<PathBuf>,
        /// Number of random trees
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,1")]
        capital: Vec<f64>,
        /// Skip the brute-force oracle
        #[arg(long)]
        no_oracle: bool,
    },
    /// Non-degeneracy ratios and degenerate nodes
    Diagnose { tree: PathBuf },
}

#[derive(Subcommand, Debug, Clone)]
pub enum GenKind {
    /// Non-recombining binomial tree
    Binomial {
        #[arg(long)]
        periods: usize,
        #[arg(long)]
        u: f64,
        #[arg(long)]
        d: f64,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        s0: f64,
        /// Call payoff max(S - K, 0) as the claim instead of S
        #[arg(long)]
        strike: Option<f64>,
        /// Weights from an independent horizon pmf over times 0..=N
        #[arg(long, value_delimiter = ',')]
        horizon_pmf: Option<Vec<f64>>,
    },
    /// Discretized non-ND example with `grid` atoms
    Schachermayer {
        #[arg(long)]
        grid: usize,
    },
    /// Same market with the weight moved to the down leaves
    SchachermayerCapped {
        #[arg(long)]
        grid: usize,
    },
    /// Two-period binomial claim with a random horizon
    HorizonExample {
        /// Emit the market stopped after the horizon instead
        #[arg(long)]
        stopped: bool,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: quadhedge::Error| e.to_string())
}

fn parse_capital(s: &str) -> Result<Capital, String> {
    s.parse().map_err(|e: quadhedge::Error| e.to_string())
}
