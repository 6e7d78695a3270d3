use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix did not have the expected length.
    DimensionMismatch { expected: usize, found: usize },
    /// A dataset with no records, or a split that would leave one side empty.
    EmptyDataset,
    /// An argument outside the domain of the function.
    Domain(String),
    /// The requested objective/operation combination is not implemented.
    Unsupported(String),
    /// An iterate stopped being finite.
    Diverged { step: usize, norm: f64 },
    /// An iterative solver hit its iteration cap.
    NoConvergence { iterations: usize, residual: f64 },
    /// Noise calibration could not meet the budget inside the search bracket.
    Infeasible { epsilon: f64, delta: f64 },
    /// A log-space accumulation still overflowed.
    Overflow(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::EmptyDataset => f.write_str("empty dataset"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::Diverged { step, norm } => {
                write!(f, "iterate became non-finite at step {step} (norm {norm})")
            }
            Error::NoConvergence {
                iterations,
                residual,
            } => write!(
                f,
                "no convergence after {iterations} iterations (residual {residual:e})"
            ),
            Error::Infeasible { epsilon, delta } => write!(
                f,
                "budget (epsilon={epsilon}, delta={delta:e}) infeasible within noise bracket"
            ),
            Error::Overflow(msg) => write!(f, "overflow: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
