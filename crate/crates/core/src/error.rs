use alloc::string::String;

/// Errors raised by the simulation and certification kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty set")]
    EmptySet,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("missing type index for {0}")]
    MissingIndex(&'static str),
    #[error("point outside the state space: {0}")]
    OutsideStateSpace(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("time {0} is not on the dyadic grid")]
    NotOnGrid(f64),
    #[error("empty time interval [{t0}, {t1}]")]
    EmptyInterval { t0: f64, t1: f64 },
    #[error("invalid tensor at {key}: {reason}")]
    InvalidTensor { key: String, reason: String },
    #[error("simplex drift {drift:e} exceeds renormalization threshold")]
    SimplexDrift { drift: f64 },
    #[error("undecided basin for coordinate {coord}: b in [{lo}, {hi}], point {x} unresolved at horizon {horizon}")]
    UndecidedBasin {
        coord: usize,
        lo: f64,
        hi: f64,
        x: f64,
        horizon: f64,
    },
    #[error("violated condition {name}: {lhs} vs {rhs}")]
    ConditionViolated {
        name: &'static str,
        lhs: f64,
        rhs: f64,
    },
    #[error("certificate failure at s = {s}: margin {margin:e}")]
    CertificateFailure { s: f64, margin: f64 },
    #[error("dimension exceeds certificate exponent: delta {delta} >= beta {beta}")]
    DimensionExceedsExponent { delta: f64, beta: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
