//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite design entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("non-finite response at row {row}")]
    NonFiniteResponse { row: usize },

    #[error("negative response at row {row}; count models require non-negative y")]
    NegativeResponse { row: usize },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("duplicate column name `{name}`")]
    DuplicateColumnName { name: String },

    #[error("at most {max} predictors are supported, got p = {p}")]
    TooManyColumns { p: usize, max: usize },

    #[error("dispersion must be positive, got {value}")]
    NonPositiveDispersion { value: f64 },

    #[error("need more than {required} observations for this estimator, got n = {n}")]
    InsufficientSamples { n: usize, required: usize },

    #[error("optimizer did not converge after {iters} iterations (max |gradient| = {grad_inf:.3e})")]
    OptimizerDiverged { iters: usize, grad_inf: f64 },

    #[error("Hessian is not positive definite even after jitter retries")]
    SingularHessian,

    #[error("Cholesky of U failed; inputs are likely contaminated with NaN or Inf")]
    SingularU,

    #[error("operation requires the {expected} family, got {found}")]
    WrongFamily {
        expected: &'static str,
        found: String,
    },

    #[error("exact enumeration supports at most {max} predictors, got p = {p}")]
    TooManyPredictors { p: usize, max: usize },

    #[error("exact enumeration requires a fixed sparsity level w")]
    RequiresFixedSparsity,

    #[error("length mismatch: {context}")]
    LengthMismatch { context: String },

    #[error("forced-in columns must be contained in the model bits")]
    ForcedNotIncluded,

    #[error("invalid configuration: {context}")]
    InvalidConfig { context: String },

    #[error("first CSV column must be named `y`, found `{found}`")]
    MissingResponseColumn { found: String },

    #[error("failed to parse CSV at line {line}: {message}")]
    CsvParse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether the error stems from bad input rather than a numerical failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::OptimizerDiverged { .. } | Error::SingularHessian | Error::SingularU
        )
    }
}
