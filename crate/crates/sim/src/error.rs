use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] qpsel_core::Error),

    #[error("models are not nested")]
    NotNested,

    #[error("count-likelihood methods require integer-valued y ≥ 0 (row {row})")]
    NonCountResponse { row: usize },

    #[error("only {surviving} bins survive the ≥{min_count}-observation filter; need at least 3")]
    TooFewBins { surviving: usize, min_count: usize },

    #[error("cross-validation needs n ≥ folds·5, got n = {n} with {folds} folds")]
    TooFewSamplesForCv { n: usize, folds: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Core(e) => e.is_input_error(),
            Error::Io(_) => true,
            _ => true,
        }
    }
}
