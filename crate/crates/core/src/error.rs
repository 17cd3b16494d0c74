use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error("singular input: {0}")]
    Singular(String),

    #[error("eigensolver failed for matrix {fingerprint}: {reason}")]
    Eigensolver { fingerprint: String, reason: String },

    #[error("truncation schedule exhausted without convergence (last relative change {last_change:.3e}, tolerance {tolerance:.3e})")]
    NotConverged { last_change: f64, tolerance: f64 },

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("spin direction undefined: mean spin length {0:.3e}")]
    DirectionUndefined(f64),

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("positivity violation: minimum eigenvalue {min_eigenvalue:.3e} at t = {time}")]
    PositivityViolation { min_eigenvalue: f64, time: f64 },

    #[error("degenerate rate chain: {0}")]
    DegenerateChain(String),

    #[error("minimizer bracket failure: {0}")]
    BracketFailure(String),
}
