use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("{0} is not a prime field order")]
    NotPrime(u64),

    #[error("field order mismatch: {left} vs {right}")]
    FieldMismatch { left: u64, right: u64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no inverse: zero has no multiplicative inverse")]
    NoInverse,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("enumeration cap exceeded: {count} outcomes > cap {cap}")]
    CapExceeded { count: u128, cap: u128 },

    #[error("infeasible selection system: {0}")]
    Infeasible(String),

    #[error("selection distribution does not fit the instance: {0}")]
    DistributionMismatch(String),

    #[error("malformed plan: {0}")]
    MalformedPlan(String),

    #[error("malformed query: {0}")]
    MalformedQuery(String),

    #[error("position {position} out of range for super-message {index} of length {len}")]
    OutOfRange {
        index: usize,
        position: usize,
        len: usize,
    },

    #[error("recovery failed: {0}")]
    RecoveryFailed(String),

    #[error("arithmetic overflow while computing {0}")]
    Overflow(&'static str),
}
