//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by problem construction, sampling, certificate evaluation
/// and the density lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported loss kind: {0}")]
    UnsupportedKind(String),

    #[error("dimension {d} is not valid for {kind}: {reason}")]
    BadDimension {
        kind: String,
        d: usize,
        reason: String,
    },

    #[error("index {index} out of range for dataset of size {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("data point outside the family domain: {0}")]
    OutOfDomain(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step-size assumption violated: eta*lambda = {value} >= 0.5 at step {step}")]
    EtaLambdaTooLarge { step: usize, value: f64 },

    #[error("schedule index {k} out of range 1..={n_max}")]
    ScheduleIndexOutOfRange { k: usize, n_max: usize },

    #[error("parameter diverged (non-finite) at step {step}")]
    DivergedAtStep { step: usize },

    #[error("operation requires lambda in {expected}, got lambda = {lambda}")]
    CaseMismatch { expected: String, lambda: f64 },

    #[error("{variant} certificate does not cover gradient mode {mode}")]
    UnsupportedGradMode { variant: String, mode: String },

    #[error("domain [{lo}, {hi}] too narrow: tail mass {tail_mass:.3e} >= 1e-10")]
    DomainTooNarrow { lo: f64, hi: f64, tail_mass: f64 },

    #[error("density grids do not share the same domain/resolution")]
    GridMismatch,

    #[error("KL divergence undefined: q vanishes where p has mass (node {node})")]
    KlSupportViolation { node: usize },

    #[error("single-step mass loss {lost:.3e} exceeds 1e-6; enlarge the domain")]
    MassLostTooLarge { lost: f64 },

    #[error("explicit scheme unstable: dt = {dt:.3e} exceeds limit {limit:.3e}")]
    FokkerPlanckUnstable { dt: f64, limit: f64 },

    #[error("too many diverged replicas: {diverged}/{total} excluded (> 10%)")]
    TooManyDiverged { diverged: usize, total: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
