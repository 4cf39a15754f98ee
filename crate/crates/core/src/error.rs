use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("size guard exceeded: {what} is {actual}, limit {limit}")]
    SizeGuard {
        what: &'static str,
        actual: usize,
        limit: usize,
    },

    #[error("quadrature did not reach the requested accuracy {requested:e} (estimated error {estimated:e})")]
    NonConvergent { requested: f64, estimated: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("region has an empty outer boundary")]
    EmptyBoundary,

    #[error("site {0:?} is not in the region")]
    NotInRegion(Vec<i64>),

    #[error("operation not supported by the {backend} solver backend: {what}")]
    Unsupported {
        backend: &'static str,
        what: &'static str,
    },

    #[error("bracket [{lo}, {hi}] does not straddle threshold {tau}: estimates {eta_lo} and {eta_hi}")]
    BracketInvalid {
        lo: f64,
        hi: f64,
        tau: f64,
        eta_lo: f64,
        eta_hi: f64,
    },

    #[error("malformed snapshot: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
