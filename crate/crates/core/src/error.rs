use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh {rows}x{cols}: both dimensions must be at least 2")]
    InvalidMesh { rows: usize, cols: usize },

    #[error("tile index {index} out of range for a mesh of {len} tiles")]
    OutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid arrival rate {0}: must be positive and finite")]
    InvalidRate(f64),

    #[error("unknown V-F level index {0}")]
    UnknownLevel(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("illegal action: core {0} is busy")]
    IllegalAction(usize),

    #[error("relative value iteration did not converge after {iterations} iterations (span {span:e})")]
    NoConvergence { iterations: usize, span: f64 },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
