use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by samplers, targets and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("density is not finite at coordinate {coordinate}")]
    NonFiniteDensity { coordinate: usize },

    #[error("modified conditional vanishes where the full conditional is positive (coordinate {coordinate})")]
    AbsoluteContinuity { coordinate: usize },

    #[error("every selection probability vanished; nothing can be updated")]
    DegenerateSelection,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("trace holds no samples after burn-in")]
    EmptyTrace,

    #[error("test function is not finite at retained sample {index}")]
    NonFiniteFunction { index: usize },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("state space with 2^{p} states exceeds the enumeration limit of {limit} (need at least {required})")]
    StateSpaceTooLarge { p: usize, limit: usize, required: usize },

    #[error("target assigns zero probability to state {state:#b}")]
    ZeroProbabilityState { state: usize },

    #[error("X_gamma'X_gamma is numerically singular for active set {gamma:?}")]
    SingularModel { gamma: Vec<usize> },

    #[error("residual sum of squares is not positive for active set {gamma:?}")]
    Conditioning { gamma: Vec<usize> },

    #[error("kernel is not reversible: asymmetry {asymmetry:e} after symmetrisation")]
    NonReversible { asymmetry: f64 },

    #[error("proposal has no mass at grid point {index} where the target is positive")]
    Support { index: usize },

    #[error("{}: row {row}, column {column}: {message}", path.display())]
    Ingestion {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("trace carries no Rao-Blackwell accumulators")]
    MissingRaoBlackwell,

    #[error("replicate with seed {seed} failed: {source}")]
    Replicate {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
