use thiserror::Error;

/// Errors raised anywhere in the decomposition pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error at row {row}, column `{column}`: {message}")]
    Ingest {
        row: usize,
        column: String,
        message: String,
    },

    #[error("positivity violation: {0}")]
    Positivity(String),

    #[error("design matrix is rank deficient; dependent columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("model did not converge after {iterations} iterations (max |score| = {max_score:e})")]
    NonConvergence {
        iterations: usize,
        max_score: f64,
        trace: Vec<f64>,
    },

    #[error("quasi-complete separation detected at iteration {iteration} (min fitted probability {min_prob:e})")]
    Separation { iteration: usize, min_prob: f64 },

    #[error("prediction error: {0}")]
    Prediction(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error("model specification error: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn estimation(msg: impl Into<String>) -> Self {
        Error::Estimation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
