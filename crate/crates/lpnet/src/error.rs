use thiserror::Error;

/// Errors produced by network construction, solvers and IO.
#[derive(Error, Debug)]
pub enum LpError {
    #[error("topology error: {0}")]
    Topology(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parameter error: {0}")]
    Param(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("objective increased at iteration {iteration}, level {level}: {detail}")]
    Ascent {
        iteration: usize,
        level: usize,
        detail: String,
    },

    #[error("context error: {0}")]
    Context(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("linear algebra backend: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

pub type Result<T> = std::result::Result<T, LpError>;
