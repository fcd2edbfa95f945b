use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("invariant check failed: {0}")]
    Invariant(String),
    #[error("run with seed {seed}, sample {sample} failed: {source}")]
    Run {
        seed: u64,
        sample: usize,
        #[source]
        source: sllg_core::Error,
    },
    #[error(transparent)]
    Core(#[from] sllg_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Process exit status: 2 invariant failure, 3 solver failure, 4 config error.
    pub fn exit_code(&self) -> i32 {
        let core = match self {
            SimError::Config(_) | SimError::Parse { .. } => return 4,
            SimError::Invariant(_) => return 2,
            SimError::Io(_) => return 1,
            SimError::Run { source, .. } | SimError::Core(source) => source,
        };
        match core {
            sllg_core::Error::SolverFailure { .. } => 3,
            sllg_core::Error::Regime(_)
            | sllg_core::Error::InvalidArgument(_)
            | sllg_core::Error::InvalidMesh(_) => 4,
            sllg_core::Error::DegenerateCell { .. } | sllg_core::Error::Parse { .. } => 4,
            _ => 1,
        }
    }
}
