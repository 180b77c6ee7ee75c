use thiserror::Error;

use crate::sim::TrajectoryLog;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("coupling b[{i}][{j}] is nonzero but DER {der} has no reactive normalizer (Q* = 0 and no rating fallback)")]
    ZeroReactiveNormalizer { i: usize, j: usize, der: usize },

    #[error("unknown target: {0}")]
    UnknownTarget(String),

    #[error("gain entry {name} = {value} is non-negative")]
    NonNegativeGain { name: &'static str, value: f64 },

    #[error("SDP solver failure: {0}")]
    Solver(String),

    #[error("synthesis infeasible: {0}")]
    Infeasible(String),

    #[error("Y is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("non-finite state detected at t = {t}")]
    NonFinite { t: f64, log: Box<TrajectoryLog> },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
