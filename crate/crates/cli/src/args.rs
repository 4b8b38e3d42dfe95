//! Command-line surface.

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "qpsel",
    version,
    about = "Quasi-posterior variable selection for generalized linear models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit on a CSV dataset: sample the model space and select variables.
    Fit(FitArgs),
    /// Run simulation scenarios over a grid of sample sizes and methods.
    Simulate(SimulateArgs),
    /// Mean/variance adequacy diagnostics and cross-validated WMSE.
    Diagnose(DiagnoseArgs),
    /// Exact model enumeration (p ≤ 15, fixed w) for validating sampler runs.
    OracleCheck(OracleCheckArgs),
    /// Re-run a previous invocation from its manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonRunArgs {
    /// Gibbs sweeps.
    #[arg(long, default_value_t = 3000)]
    pub sweeps: usize,
    /// Sweeps discarded before the Rao-Blackwellised averages.
    #[arg(long, default_value_t = 1500)]
    pub burn_in: usize,
    /// Master seed; every stream derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bayesian-FDR target level.
    #[arg(long, default_value_t = 0.05)]
    pub fdr_alpha: f64,
    /// Slab variance s².
    #[arg(long, default_value_t = 9.0)]
    pub slab_variance: f64,
    /// Sparsity prior: `beta:a,b` or `fixed:w`.
    #[arg(long, default_value = "beta:1,1")]
    pub sparsity: String,
    /// Dispersion mode: `full`, `l1`, or `fixed:PSI`.
    #[arg(long)]
    pub dispersion: Option<String>,
    /// Newton gradient tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub newton_tol: f64,
    /// Newton iteration cap.
    #[arg(long, default_value_t = 100)]
    pub newton_max_iter: usize,
    /// Optional cap on cached model evaluations (LRU eviction).
    #[arg(long)]
    pub cache_cap: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct CsvInputArgs {
    /// Input CSV; the first column must be named `y`.
    #[arg(long)]
    pub input: String,
    /// Insert a ones column named `intercept` at position 0 and force it in.
    #[arg(long, default_value_t = false)]
    pub add_intercept: bool,
    /// Z-score every non-constant predictor column.
    #[arg(long, default_value_t = false)]
    pub standardize: bool,
    /// Comma-separated column names that are always included.
    #[arg(long, value_delimiter = ',')]
    pub force_in: Vec<String>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: CsvInputArgs,
    /// Mean/variance family: `linear`, `poisson`, or `negbin`.
    #[arg(long)]
    pub family: String,
    /// Negative-binomial overdispersion θ; estimated from the data if absent.
    #[arg(long)]
    pub theta: Option<f64>,
    #[command(flatten)]
    pub run: CommonRunArgs,
    /// Coefficient draws for the BFDR-selected model.
    #[arg(long, default_value_t = 1000)]
    pub beta_draws: usize,
    /// Skip the independence-Metropolis correction on coefficient draws.
    #[arg(long, default_value_t = false)]
    pub no_mh: bool,
    /// Dump the model cache as JSON lines for audit.
    #[arg(long, default_value_t = false)]
    pub dump_cache: bool,
    /// Dump the per-sweep model bit patterns as gzipped hex lines.
    #[arg(long, default_value_t = false)]
    pub dump_draws: bool,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: String,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenarios: `counts`, `heavy-tails`, `inliers` (comma-separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub scenario: Vec<String>,
    /// Sample sizes, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_grid: Vec<usize>,
    /// Replicates per (scenario, n) cell.
    #[arg(long, default_value_t = 50)]
    pub replicates: usize,
    /// Methods: `qp` (family chosen per scenario), `poisson`, `negbin`.
    #[arg(long, value_delimiter = ',', default_value = "qp")]
    pub methods: Vec<String>,
    /// Replicate-level worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub run: CommonRunArgs,
    #[arg(long)]
    pub out: String,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub input: CsvInputArgs,
    /// Fitted models to compare: `qp-linear`, `qp-poisson`, `poisson`, `negbin`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub methods: Vec<String>,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[command(flatten)]
    pub run: CommonRunArgs,
    #[arg(long)]
    pub out: String,
}

#[derive(Args, Debug)]
pub struct OracleCheckArgs {
    #[command(flatten)]
    pub input: CsvInputArgs,
    /// Family: `linear`, `poisson`, or `negbin`.
    #[arg(long)]
    pub family: String,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Fixed inclusion probability w.
    #[arg(long, default_value_t = 0.5)]
    pub w: f64,
    #[command(flatten)]
    pub run: CommonRunArgs,
    #[arg(long)]
    pub out: String,
}

#[derive(Args, Debug)]
pub struct RerunArgs {
    /// Manifest written by a previous run.
    #[arg(long)]
    pub manifest: String,
    /// Output directory; defaults to the manifest's directory.
    #[arg(long)]
    pub out: Option<String>,
}
