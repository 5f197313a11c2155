use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A state or gradient became non-finite at the given time step.
    #[error("numerical divergence at step {step}")]
    Divergence { step: usize },

    #[error("training diverged at iteration {iteration}: {source}")]
    TrainingDiverged {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("horizon {horizon} is not aligned with step size {dt}; nearest aligned horizon uses {suggested_steps} steps")]
    Misaligned {
        horizon: f64,
        dt: f64,
        suggested_steps: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient runs: {0}")]
    InsufficientRuns(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
