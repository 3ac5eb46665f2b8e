use thiserror::Error;

/// Errors raised across the decomposition pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GramianError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("multi-index degree {degree} exceeds bound {bound}")]
    DegreeTooLarge { degree: u32, bound: u32 },

    #[error("tensor is not symmetric: entries {first:?} and {second:?} differ")]
    NotSymmetric { first: Vec<usize>, second: Vec<usize> },

    #[error("moment of degree {0} is not available")]
    MissingMoment(u32),

    #[error("moment matrices do not agree on their shared block (max deviation {0:e})")]
    ExtensionMismatch(f64),

    #[error("Vandermonde matrix has rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("rank grows from {low} to {high} between consecutive degrees")]
    RankGrowth { low: usize, high: usize },

    #[error("point extraction failed: {0}")]
    Extraction(String),

    #[error("recovered weight {0:e} is negative")]
    NegativeWeight(f64),

    #[error("polynomial has zero constant term")]
    ZeroConstantTerm,

    #[error("semidefinite solve failed: {0}")]
    Solver(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, GramianError>;
