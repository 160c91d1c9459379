use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    /// A stop cannot be served even by a dedicated trip.
    #[error("infeasible instance: stop {stop} of school {school} {reason}")]
    InfeasibleStop { school: u32, stop: u32, reason: String },

    #[error("cost matrix is empty")]
    EmptyMatrix,

    #[error("cost matrix entry ({row}, {col}) is NaN")]
    NanCost { row: usize, col: usize },

    #[error("k-means: k = {k} must be in 1..={points}")]
    InvalidClusterCount { k: usize, points: usize },

    #[error("invalid move: {0}")]
    InvalidMove(String),

    #[error("oracle limit exceeded: {what} = {actual} > {limit}")]
    OracleLimit {
        what: &'static str,
        actual: usize,
        limit: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
