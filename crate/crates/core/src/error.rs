use thiserror::Error;

use crate::laplace::NewtonState;

/// Errors produced anywhere in the inference engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an input contract (mismatched lengths, bad index, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A parameter is outside the domain of the function (non-positive scale, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The Newton solver ran out of iterations. The last iterate is kept.
    #[error("Newton solver did not converge after {iterations} iterations (last objective change {last_change:e})")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        state: Box<NewtonState>,
    },

    /// A Cholesky factorization failed.
    #[error("Cholesky factorization failed{}", match .iteration { Some(i) => format!(" at Newton iteration {i}"), None => String::new() })]
    Cholesky { iteration: Option<usize> },

    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("target evaluation failed in chain {chain} at draw {draw}: {source}")]
    Target {
        chain: usize,
        draw: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::contract(format!(
            "{what} has length {got}, expected {expected}"
        )));
    }
    Ok(())
}
