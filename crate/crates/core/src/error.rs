use std::time::Duration;

use thiserror::Error;

use crate::sampling::RunReport;

/// Failure of a simulator behind an indicator function.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("failed to launch simulator `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("simulator handshake failed: {0}")]
    Handshake(String),
    #[error("protocol error at reply line {line}: unexpected reply {reply:?}")]
    Protocol { line: usize, reply: String },
    #[error("simulator timed out after {timeout:?} waiting for reply line {line}")]
    Timeout { line: usize, timeout: Duration },
    #[error("simulator exited before reply line {line}")]
    Exited { line: usize },
    #[error("simulator i/o error: {0}")]
    Io(String),
    #[error("point has dimension {got}, simulator expects {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("fitting failed: {0}")]
    Fit(String),

    #[error("onion initialization found no failures up to radius {radius} ({evaluations} evaluations)")]
    Initialization { radius: f64, evaluations: u64 },

    #[error(transparent)]
    Simulation(#[from] SimulationError),

    #[error("non-finite importance weight at iteration {iteration}: {detail}")]
    NonFiniteWeight { iteration: usize, detail: String },

    /// A run stopped part-way; the report covers the iterations that completed.
    #[error("run aborted after {} simulations: {source}", partial.n_simulations)]
    Aborted {
        source: Box<Error>,
        partial: Box<RunReport>,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }

    /// Strips an `Aborted` wrapper, returning the underlying cause.
    pub fn root(&self) -> &Error {
        match self {
            Error::Aborted { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
