use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("normalization error: linear form ({u}, {v}) does not have coprime coefficients")]
    NonCoprimeForm { u: i64, v: i64 },

    #[error("configuration error: forms ({}, {}) and ({}, {}) are proportional", .first.0, .first.1, .second.0, .second.1)]
    ProportionalForms { first: (i64, i64), second: (i64, i64) },

    #[error("prime {p} is a bad prime for this input")]
    BadPrime { p: u64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("incomplete input: {0}")]
    Incomplete(String),

    #[error("truncation too deep: {0}")]
    TruncationTooDeep(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("grid too narrow: {0}")]
    GridTooNarrow(String),

    #[error("no validated pruning bound for this bundle; supply an explicit box radius")]
    NoPruningBound,

    #[error("pruning validation failed: enumerator found {fast} points, naive scan found {naive} (B = {bound})")]
    PruningMismatch { fast: u64, naive: u64, bound: String },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
