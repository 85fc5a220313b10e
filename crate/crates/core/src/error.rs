use thiserror::Error;

/// Errors raised by the statistics, simulation and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input at row {row}: {msg}")]
    MalformedRow { row: usize, msg: String },
    #[error("self-loop at row {row} (node {label:?})")]
    SelfLoop { row: usize, label: String },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("values missing for nodes: {}", .0.join(", "))]
    MissingNodes(Vec<String>),
    #[error("values given for unknown nodes: {}", .0.join(", "))]
    UnknownNodes(Vec<String>),
    #[error("no-ties: weight matrix has no positive entry")]
    NoTies,
    #[error("zero-variance: values are constant")]
    ZeroVariance,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("analytic-moments-unavailable: need n >= 4, got n = {0}; use the permutation test")]
    MomentsUnavailable(usize),
    #[error("too-large-for-enumeration: n = {0} exceeds 8")]
    TooLargeForEnumeration(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("could-not-connect: no connected network after {attempts} attempts")]
    CouldNotConnect { attempts: usize },
    #[error("degenerate-degrees: all nodes have the same degree")]
    DegenerateDegrees,
    #[error("singular-design: design matrix is rank deficient")]
    SingularDesign,
    #[error("bad-covariance: {0}")]
    BadCovariance(String),
    #[error("optimization failure: {0}")]
    Optimization(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by a degenerate statistic rather than bad input.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::NoTies | Error::ZeroVariance | Error::DegenerateDegrees | Error::SingularDesign
        )
    }

    /// True for numerical failures inside otherwise valid computations.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Optimization(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
