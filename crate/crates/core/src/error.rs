use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain of a function.
    #[error("{what}: argument {value} outside domain ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("{what}: result overflows the scalar type for argument {value}")]
    Overflow { what: &'static str, value: f64 },
    #[error("empty data")]
    EmptyData,
    #[error("non-finite or negative value {value} at index {index}")]
    BadSample { index: usize, value: f64 },
    #[error("{what} did not converge: {detail}")]
    NonConvergence { what: &'static str, detail: String },
    #[error("degenerate {model} fit: {reason} (estimate {estimate:?})")]
    DegenerateFit {
        model: &'static str,
        reason: &'static str,
        estimate: Vec<f64>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed record at {location}: {reason}")]
    Malformed {
        path: PathBuf,
        location: String,
        reason: String,
    },
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            expected,
        }
    }

    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}
