use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error in {path}: {detail}")]
    ConfigParse { path: String, detail: String },

    #[error("config validation error: field `{field}` violates `{invariant}`")]
    ConfigInvalid { field: String, invariant: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("trajectory has {waypoints} waypoints but {velocities} velocities")]
    InconsistentTrajectory { waypoints: usize, velocities: usize },

    #[error("speed must be non-negative, got {0}")]
    NegativeSpeed(f64),

    #[error("Fisher information matrix is singular or ill-conditioned ({detail})")]
    SingularFim { detail: String },

    #[error("measurement set is empty")]
    EmptyMeasurements,

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
