use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("krylov solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("under-resolved oscillation: h = {h:.4e} exceeds the limit {limit:.4e}; refine the grid or pass the override flag")]
    UnderResolved { h: f64, limit: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("region outside the grid: {0}")]
    OutsideGrid(String),

    #[error("incompatible Neumann data: relative mismatch {relative:.3e} exceeds 1e-8")]
    IncompatibleNeumann { relative: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
