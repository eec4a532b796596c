//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by geometry, bound evaluation, design, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Geometry where angles or distances are undefined (origin, z-axis,
    /// a probe point coinciding with an array element).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// Finite-difference step that cannot produce a derivative estimate.
    #[error("invalid finite-difference step: {0}")]
    InvalidStep(String),

    /// Dimension or symmetry mismatch between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Time allocations that do not add up, or budgets too small to honor
    /// the one-transmission-per-beam rule.
    #[error("schedule error: {0}")]
    Schedule(String),

    /// Beam basis whose columns are numerically colinear.
    #[error("degenerate beam basis: {0}")]
    BasisDegenerate(String),

    /// A beam vector that cannot be projected (e.g. all zeros).
    #[error("invalid beam: {0}")]
    InvalidBeam(String),

    /// Problem size beyond what the dense solver path accepts.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Conic solver reported an unusable outcome.
    #[error("solver: {0}")]
    Solver(String),

    /// Scenario configuration rejected; names the offending field.
    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
