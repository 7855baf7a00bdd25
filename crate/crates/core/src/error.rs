use thiserror::Error;

/// Errors raised while building, bounding or solving a topology design task.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid document: {0}")]
    Document(String),

    #[error("unknown edge index {0}")]
    UnknownEdge(usize),

    #[error("disconnected topology: reduced Laplacian is singular")]
    DisconnectedTopology,

    #[error("existing network is disconnected; augmentation bounds do not apply, use new-design bounds")]
    DisconnectedExisting,

    #[error("singular interior block in Kron reduction")]
    SingularInteriorBlock,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("bound tightening must run first: {0}")]
    MissingBounds(String),

    #[error("missing trace window or lower bounds: {0}")]
    UnboundedSweep(String),

    #[error("lyapunov solve failed: {0}")]
    Lyapunov(String),

    #[error("impulse response did not decay within {horizon} s; retry with a longer horizon")]
    NonDecaying { horizon: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver backend: {0}")]
    Backend(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
