use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no roads")]
    NoRoads,
    #[error("invalid center line `{road}`: {reason}")]
    InvalidCenterLine { road: String, reason: String },
    #[error("unknown road `{0}`")]
    UnknownRoad(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("singular innovation covariance")]
    SingularInnovation,
    #[error("degenerate constraint set")]
    DegenerateConstraint,
    #[error("cluster too large: {size} tracks exceed the cap of {cap}; tighten the gate (lower P_G) or raise the cap")]
    ClusterTooLarge { size: usize, cap: usize },
    #[error("degenerate association: all joint hypothesis weights are zero")]
    DegenerateAssociation,
    #[error("external-source intensity is zero")]
    ZeroExternalIntensity,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
