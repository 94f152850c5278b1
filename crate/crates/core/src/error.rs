use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("need at least d = {d} nodes for the d-body term, got N = {n}")]
    TooFewNodes { d: usize, n: usize },

    #[error("node {index} is not a unit vector (norm {norm})")]
    NotUnit { index: usize, norm: f64 },

    #[error("vector has zero length and cannot be normalized")]
    ZeroVector,

    #[error("average position has norm {0:e}; the configuration is balanced and has no normal")]
    BalancedConfiguration(f64),

    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("kernel cross-check failed at step {step}: relative deviation {deviation:e}")]
    KernelMismatch { step: usize, deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coupling ratio {ratio} exceeds the critical ratio {critical}: no equispaced steady state exists")]
    NoRingState { ratio: f64, critical: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate least-squares system: {0}")]
    Degenerate(String),

    #[error("reduction coordinates degenerate: x12 = 0{}", if *.already_synchronized { " and all pair products vanish (already synchronized)" } else { "; relabel the nodes" })]
    DegenerateReduction { already_synchronized: bool },

    #[error("inconsistent reduced state: x123^2 - p(u) = {0:e}")]
    InconsistentReducedState(f64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for failures caused by the filesystem rather than by input validation.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
