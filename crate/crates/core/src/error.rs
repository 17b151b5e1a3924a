use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("communication graph is disconnected")]
    CommGraphDisconnected,

    #[error("all particle weights are zero or non-finite")]
    DegenerateWeights,

    #[error("object {0} has no observing agent")]
    EmptyObserverSet(usize),

    #[error("observer subnetwork of object {object} is disconnected")]
    LdtSubgraphDisconnected { object: usize },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
