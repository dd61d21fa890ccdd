use thiserror::Error;

use crate::coalition::CoalitionId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// The sustainability band could not be met even at the largest penalty weight.
    #[error("sustainability band infeasible for coalition {coalition}: max violation {violation:.4} fish in region {region}")]
    BandInfeasible {
        coalition: CoalitionId,
        region: usize,
        violation: f64,
    },

    #[error("solver failed for coalition {coalition}: {source}")]
    Coalition {
        coalition: CoalitionId,
        #[source]
        source: Box<Error>,
    },

    #[error("time budget exhausted")]
    Timeout,
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn in_coalition(self, coalition: CoalitionId) -> Self {
        match self {
            e @ (Error::Coalition { .. } | Error::BandInfeasible { .. } | Error::Timeout) => e,
            other => Error::Coalition {
                coalition,
                source: Box::new(other),
            },
        }
    }

    /// True for failures of the numerical solve itself (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::BandInfeasible { .. } | Error::Coalition { .. })
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
