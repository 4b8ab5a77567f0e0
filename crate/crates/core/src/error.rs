use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A computed state or derivative left the finite range.
    #[error("numeric overflow in {context}: entry {entry} is {value}")]
    NonFinite {
        context: &'static str,
        entry: usize,
        value: f64,
    },

    #[error("rollout produced a non-finite state at step {step} (entry {entry})")]
    RolloutNonFinite { step: usize, entry: usize },

    #[error("non-finite Jacobian entry at row {row}, column {col} of {matrix}")]
    JacobianNonFinite {
        matrix: &'static str,
        row: usize,
        col: usize,
    },

    #[error("mass matrix is numerically singular (|det| = {det:e})")]
    SingularMassMatrix { det: f64 },

    #[error("matrix {0} is singular")]
    SingularMatrix(&'static str),

    #[error(
        "Riccati iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    DareNoConvergence { iterations: usize, residual: f64 },

    #[error("invalid horizon {0}: must be at least 1")]
    InvalidHorizon(usize),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("exhaustive enumeration of {count} control sequences exceeds the limit of {limit}")]
    EnumerationTooLarge { count: f64, limit: f64 },

    #[error("config line {line}, key `{key}`: {reason}")]
    Config {
        line: usize,
        key: String,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("malformed log row {row}: {reason}")]
    MalformedLog { row: usize, reason: String },
}

pub(crate) fn ensure_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
