use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("length mismatch: {left} vs {right} sites")]
    LengthMismatch { left: usize, right: usize },

    #[error("interval [{first}, {last}] out of range for {len} sites")]
    IntervalOutOfRange {
        first: usize,
        last: usize,
        len: usize,
    },

    #[error("{what} of size {size} exceeds the dense limit {limit}")]
    Oversize {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("invalid Pauli string: {0}")]
    InvalidPauli(String),

    #[error("degenerate factorization: overlap {value} on window [{first}, {last}] is not positive")]
    DegenerateFactorization { first: usize, last: usize, value: f64 },

    #[error("degenerate estimate: {quantity} = {value} on window [{first}, {last}]")]
    DegenerateEstimate {
        quantity: &'static str,
        first: usize,
        last: usize,
        value: f64,
    },

    #[error("zero purity in fidelity denominator")]
    ZeroPurity,

    #[error("site tensors are not translation invariant (site {0} differs)")]
    NotTranslationInvariant(usize),

    #[error("bond dimension {bond} exceeds the hard cap {cap}")]
    Capacity { bond: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative conditional probability {value} at site {site}")]
    NegativeProbability { site: usize, value: f64 },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("ill-conditioned local system at site {site} (condition estimate {condition:e})")]
    Conditioning { site: usize, condition: f64 },

    #[error("trace collapsed to {0:e} during normalization")]
    TraceCollapse(f64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
