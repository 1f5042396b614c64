use thiserror::Error;

/// Errors produced by the collocation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("the zero multi-index is not admissible here")]
    ZeroIndex,

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("missing derivative information: {0}")]
    MissingDerivative(&'static str),

    #[error("evaluation failed at row {row}, column {column}: {message}")]
    Evaluation {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("quadrature resolution {resolution} too coarse (need > {required})")]
    ResolutionTooCoarse { resolution: usize, required: usize },

    #[error("combinatorial budget exceeded: {subsets} subsets > {budget}")]
    BudgetExceeded { subsets: u128, budget: u128 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
