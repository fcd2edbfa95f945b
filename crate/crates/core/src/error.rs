use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate cell {cell}: measure {measure:e}")]
    DegenerateCell { cell: usize, measure: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("non-finite value {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("cannot normalize zero vector at node {node}")]
    ZeroVector { node: usize },

    #[error("node {node} is not unit length (|m| = {norm})")]
    NotUnit { node: usize, norm: f64 },

    #[error("linear solver failed after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("size mismatch: {0}")]
    Mismatch(String),

    #[error("time index mismatch: expected step {expected}, found {found}")]
    TimeMismatch { expected: usize, found: usize },

    #[error("step size outside the stability regime: {0}")]
    Regime(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
