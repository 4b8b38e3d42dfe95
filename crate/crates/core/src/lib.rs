//! Quasi-posterior Bayesian variable selection for generalized linear models.
//!
//! The crate evaluates quasi-marginal likelihoods per model (closed form for
//! the linear-identity family, Laplace approximation otherwise), explores the
//! model space with a random-scan Gibbs sampler over inclusion indicators,
//! and turns the resulting inclusion probabilities into variable selections.

pub mod config;
pub mod dataset;
pub mod error;
pub mod family;
pub mod indicator;
mod lasso;
pub mod marginal;
pub mod quasilik;
pub mod sampler;
pub mod seed;
pub mod selection;

pub use config::{DispersionMode, NewtonSettings, PriorConfig, RunConfig, Sparsity};
pub use dataset::{validate_dataset, Dataset};
pub use error::{Error, Result};
pub use family::QuasiFamily;
pub use indicator::{ModelIndicator, MAX_PREDICTORS};
pub use marginal::{
    log_qmarginal_closed_form, log_qmarginal_laplace, map_estimate, CacheStats, EvalCache,
    MarginalMethod, ModelEvaluation,
};
pub use quasilik::{
    estimate_dispersion, estimate_nb_theta, fit_qmle, quasi_eval, quasi_loglik,
    DispersionEstimate, QuasiEval,
};
pub use sampler::{
    enumerate_exact, gibbs_run, gibbs_run_with_cache, sample_beta_given_gamma, ExactModel,
    ExactPosterior, SamplerOutput,
};
pub use selection::{
    score_selection, select_bfdr, select_median, SelectionMetrics, SelectionResult, SelectionRule,
};
