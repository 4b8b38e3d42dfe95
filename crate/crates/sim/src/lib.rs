//! Benchmark scenarios, method runners, diagnostics, and the nested
//! quasi-Bayes-factor harness built on top of `qpsel-core`.

pub mod chi2;
pub mod diagnostics;
pub mod error;
pub mod runner;
pub mod scenario;

pub use chi2::nested_bf_statistic;
pub use diagnostics::{
    binned_mean_variance, cv_wmse, weighted_mse, BinnedDiagnostic, FittedModel, WmseRow,
};
pub use error::{Error, Result};
pub use runner::{
    fit_method, run_method, run_scenario_grid, write_replicates_jsonl, write_results_csv,
    AggregateRow, FittedMethod, GridResults, GridSpec, Method, ReplicateOutcome, ReplicateReport,
    Truth,
};
pub use scenario::{
    gen_counts, gen_heavy_tails, gen_heavy_tails_with_nu, gen_inliers, ScenarioKind, ScenarioSpec,
};
