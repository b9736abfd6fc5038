use thiserror::Error;

pub type Result<T> = std::result::Result<T, SliError>;

#[derive(Debug, Error)]
pub enum SliError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("insufficient data: need more than {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate bandwidth at sample {index}: k-th neighbour distance is zero")]
    DegenerateBandwidth { index: usize },

    #[error("degenerate bandwidth at query {index}: k-th neighbour distance is zero")]
    DegenerateQueryBandwidth { index: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("query {index} is isolated: no sample lies within any kernel support")]
    IsolatedQuery { index: usize },

    #[error("query {index} has non-positive self precision {value}")]
    NonPositiveQueryPrecision { index: usize, value: f64 },

    #[error("precision matrix is not positive definite (pivot {pivot_index} = {pivot})")]
    NotPermissible { pivot_index: usize, pivot: f64 },

    #[error("size limit exceeded: N = {n} > {limit}")]
    SizeLimit { n: usize, limit: usize },

    #[error("unsupported parameter: {0}")]
    Unsupported(String),

    #[error("ill-conditioned covariance: {0}")]
    IllConditioned(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("internal error: {0}")]
    Internal(String),
}
