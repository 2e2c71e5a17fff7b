//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad grid descriptor, unknown material reference,
    /// non-integer resolution ratio, violated stability bound, probe outside
    /// the domain, and similar startup-time failures.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed snapshot container or mesh file.
    #[error("format error: {0}")]
    Format(String),

    /// The pressure solver did not reach its tolerance within the iteration cap.
    #[error("pressure solver did not converge: residual {residual:.3e} after {iterations} iterations{context}")]
    SolverDiverged {
        residual: f64,
        iterations: usize,
        context: String,
    },

    /// A field left its admissible range mid-run (e.g. nonpositive temperature).
    #[error("state error: {0}")]
    State(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Attach frame context to a solver failure as it propagates out of the run loop.
    pub fn with_frame(self, frame: u64) -> Self {
        match self {
            Error::SolverDiverged { residual, iterations, .. } => Error::SolverDiverged {
                residual,
                iterations,
                context: format!(" (frame {frame})"),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
