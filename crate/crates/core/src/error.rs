use thiserror::Error;

/// Broad classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: malformed sequences, invalid parameters, unreadable files.
    Config,
    /// A numerical procedure failed on otherwise well-formed input.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid variation sequence: {0}")]
    InvalidSequence(String),

    #[error("unsupported Daubechies order {0} (supported: 2, 3)")]
    UnsupportedOrder(u32),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("path of length {n} is shorter than the sequence length {len}")]
    PathTooShort { n: usize, len: usize },

    #[error(
        "central limit condition M > D + s/2 + 1/4 violated (M = {order}, D = {d}, s = {s}); \
         with M = D + 1 and s >= 3/2 the variance decays slower than 1/n"
    )]
    CltConditionViolated { order: usize, d: usize, s: f64 },

    #[error("matrix is singular or indefinite: {0}")]
    SingularMatrix(String),

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::SingularMatrix(_)
            | Error::Factorization(_)
            | Error::Degenerate(_)
            | Error::CltConditionViolated { .. } => ErrorKind::Numeric,
            _ => ErrorKind::Config,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
