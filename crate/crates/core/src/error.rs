use std::fmt;

use thiserror::Error;

/// Errors produced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("comparison graph is disconnected: component {} is not linked to item {}", fmt_items(.component), .anchor + 1)]
    Disconnected { component: Vec<usize>, anchor: usize },

    #[error("MLE did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        estimate: Vec<f64>,
    },

    #[error("Markov chain is reducible: state {} is unreachable from state {}", .state + 1, .from + 1)]
    Reducible { state: usize, from: usize },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    PowerIteration { iterations: usize, residual: f64 },

    #[error("Markov chain construction failed: {0}")]
    Construction(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain(_) | Error::Validation(_) | Error::Parse { .. } => ErrorKind::Validation,
            Error::Disconnected { .. }
            | Error::NonConvergence { .. }
            | Error::Reducible { .. }
            | Error::PowerIteration { .. }
            | Error::Construction(_) => ErrorKind::Numerical,
            Error::Io(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn domain(msg: impl fmt::Display) -> Self {
        Error::Domain(msg.to_string())
    }

    pub(crate) fn validation(msg: impl fmt::Display) -> Self {
        Error::Validation(msg.to_string())
    }

    pub(crate) fn parse(line: usize, msg: impl fmt::Display) -> Self {
        Error::Parse {
            line,
            msg: msg.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

fn fmt_items(items: &[usize]) -> String {
    let shown: Vec<String> = items.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", shown.join(","))
}
