//! Error type shared by every module of the crate.

use thiserror::Error;

use crate::duet::DuetState;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("row {row} of the summed jump kernel adds up to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },

    #[error("model file line {line}, column {column}: {message}")]
    ModelFile {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config line {line}, column {column}: {message}")]
    Config {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("no spectral gap: {0}")]
    NoSpectralGap(String),

    #[error("eigenvalue branch ambiguity at s = {s:?}: {detail}")]
    BranchAmbiguity { s: Vec<f64>, detail: String },

    #[error("expansion coefficient {what}: analytic {analytic:e} vs finite-difference {numeric:e}")]
    ExpansionMismatch {
        what: String,
        analytic: f64,
        numeric: f64,
    },

    #[error("window radius {radius} leaves mass {mass:e} outside; try radius {suggested}")]
    WindowTooSmall {
        radius: i64,
        mass: f64,
        suggested: i64,
    },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("event budget of {max_events} exhausted at clock {}", checkpoint.clock)]
    EventBudget {
        max_events: u64,
        checkpoint: Box<DuetState>,
    },

    #[error("renewal path needed more than {0} terms")]
    TooManyRenewals(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
