use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the model, solvers and simulators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid value for `{key}`: {message}")]
    Domain { key: String, message: String },

    #[error("regime chain is reducible: {0}")]
    ReducibleChain(String),

    #[error("time {t} outside [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("moment tilt overflow: c * zmax = {0} exceeds 700")]
    TiltOverflow(f64),

    #[error("exponent {0} saturated the overflow guard")]
    Saturated(f64),

    #[error("no sign change bracketing the first-order condition at t = {t}, state {state}")]
    BracketFailure { t: f64, state: usize },

    #[error("backward ODE left the positive half-line at t = {t} (state {state})")]
    StepFailure { t: f64, state: usize },

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Domain {
            key: key.into(),
            message: message.into(),
        }
    }
}
