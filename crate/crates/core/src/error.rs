use thiserror::Error;

use crate::types::ClusterId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("no input locations")]
    NoInputLocations,

    #[error("unknown cluster {0}")]
    UnknownCluster(ClusterId),

    #[error("infeasible placement")]
    InfeasiblePlacement,

    #[error("invalid execution record: {0}")]
    InvalidRecord(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("simulated time exceeded horizon {horizon} with {unfinished} unfinished jobs")]
    HorizonExceeded { horizon: f64, unfinished: usize },

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("state space overflow after {count} states")]
    StateSpaceOverflow { count: u64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
