use thiserror::Error;

/// Errors produced by the reduced-order modeling toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("interface copies disagree at dof {dof}: {a} vs {b}")]
    InconsistentCopies { dof: usize, a: f64, b: f64 },

    #[error("Newton failed to converge at step {step} (residual {residual:.3e} after {iterations} iterations)")]
    NewtonDiverged {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("SQP failed to converge at step {step}: {detail}")]
    SqpDiverged { step: usize, detail: String },

    #[error("KKT factorization failed: {0}")]
    Factorization(String),

    #[error("invalid mask parameters: {0}")]
    InvalidMask(String),

    #[error("invalid training setup: {0}")]
    InvalidTraining(String),

    #[error("model incompatible with role {role}: {detail}")]
    IncompatibleModel { role: String, detail: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
