use alloc::boxed::Box;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("row {0} has (near) zero norm")]
    ZeroRow(usize),
    #[error("row {0} has zero variance across its features")]
    ZeroVariance(usize),
    #[error("requested {requested} components but at most {max} are available")]
    DimTooLarge { requested: usize, max: usize },
    #[error("perplexity {perplexity} outside [2, {max}]")]
    PerplexityOutOfRange { perplexity: f64, max: f64 },
    #[error("probability vector sums to {0}, not 1")]
    NotNormalized(f64),
    #[error("mask excludes every pair; the uniformity sum is empty")]
    EmptySum,
    #[error("non-finite value at iteration {0}")]
    NonFinite(usize),
    #[error("k = {k} must satisfy 1 <= k <= n - 1 (n = {n})")]
    BadK { k: usize, n: usize },
    #[error("pool cannot supply the requested episode: {0}")]
    InsufficientPool(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("episode {index} (seed {seed}) failed: {source}")]
    EpisodeFailed {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },
}
