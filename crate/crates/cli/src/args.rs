//! Command-line argument definitions. Every option can also come from the
//! `--config` file; explicit flags win.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "choiceforge",
    version,
    about = "Discrete-choice service design: simulate markets, estimate choice models, monetize attributes, optimize pricing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic choice dataset with a known ground truth
    Simulate(SimulateArgs),
    /// Fit a choice model (mnl, lcm, mixed) to a dataset CSV
    Estimate(EstimateArgs),
    /// Willingness-to-pay, price sensitivity, and market potential
    Analyze(AnalyzeArgs),
    /// Revenue- or profit-optimal pricing and the price-sweep curve
    Optimize(OptimizeArgs),
    /// Indicator -> construct -> choice causal chain
    Chain(ChainArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// INI-style config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ground-truth spec name (virtual-traveling-default)
    #[arg(long)]
    pub spec: Option<String>,
    /// Number of choice scenarios (one observation each)
    #[arg(long)]
    pub n: Option<usize>,
    /// Levels per attribute in the balanced design
    #[arg(long)]
    pub levels: Option<usize>,
    /// Random seed (falls back to CHOICEFORGE_SEED, then 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset CSV path
    #[arg(long)]
    pub out_dataset: Option<PathBuf>,
    /// Output ground-truth JSON path
    #[arg(long)]
    pub out_truth: Option<PathBuf>,
}

#[derive(Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input dataset CSV
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Model: mnl, lcm, or mixed
    #[arg(long)]
    pub model: Option<String>,
    /// Number of latent classes (lcm)
    #[arg(long)]
    pub classes: Option<usize>,
    /// Halton draws per observation (mixed)
    #[arg(long)]
    pub draws: Option<usize>,
    /// Comma-separated attribute names with random coefficients (mixed)
    #[arg(long)]
    pub random: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output report JSON path
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Estimation report JSON from `estimate`
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Reference indicator levels, comma-separated in schema order
    #[arg(long)]
    pub levels: Option<String>,
    /// Reference price
    #[arg(long)]
    pub price: Option<f64>,
    /// Consumer population behind market potential
    #[arg(long)]
    pub population: Option<f64>,
    /// Output analysis JSON path
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Estimation report JSON from `estimate`
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Objective: revenue or profit
    #[arg(long)]
    pub objective: Option<String>,
    /// Fixed indicator levels, comma-separated in schema order
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long)]
    pub price_min: Option<f64>,
    #[arg(long)]
    pub price_max: Option<f64>,
    /// Jointly optimize indicator levels within --bounds
    #[arg(long)]
    pub optimize_levels: bool,
    /// Per-indicator bounds lo:hi, comma-separated
    #[arg(long)]
    pub bounds: Option<String>,
    /// Per-indicator unit costs, comma-separated (profit objective)
    #[arg(long)]
    pub costs: Option<String>,
    /// Price grid size for the emitted curve
    #[arg(long)]
    pub grid: Option<usize>,
    /// Output solution JSON path
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output curve CSV path
    #[arg(long)]
    pub out_curve: Option<PathBuf>,
}

#[derive(Args)]
pub struct ChainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input dataset CSV with construct:<name> columns
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output chain report JSON path
    #[arg(long)]
    pub out: Option<PathBuf>,
}
