use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("bodies {0} and {1} collide exactly; the unregularized potential is singular")]
    CollisionSingularity(usize, usize),

    #[error("invalid time interval: T2 = {t2} must exceed T1 = {t1}")]
    InvalidInterval { t1: f64, t2: f64 },

    #[error("mass vectors of the two endpoints differ")]
    MassMismatch,

    #[error("endpoint {endpoint} lies outside the requested order sector")]
    SectorMismatch { endpoint: &'static str },

    #[error("Newton iteration failed to converge; best scaled residual {best_residual:e}")]
    NewtonDivergence { best_residual: f64 },

    #[error("input is not a central configuration (scaled residual {scaled_residual:e})")]
    NotCentralConfiguration { scaled_residual: f64 },

    #[error("fit window has {available} usable nodes, {required} required")]
    InsufficientWindow { available: usize, required: usize },

    #[error("poor power-law fit (r^2 = {r2})")]
    PoorFit { r2: f64 },

    #[error("cluster {0} is a singleton; no normalized configuration exists")]
    SingletonCluster(usize),

    #[error("relabeled path jumps by {jump:e} at t = {time}")]
    ContinuityFailure { time: f64, jump: f64 },

    #[error("gap {gap} does not return to the plateau level on the {side} side")]
    WindowNotFound { gap: usize, side: &'static str },

    #[error("segment contains a near-collision (gap {gap:e} at node {node})")]
    SegmentContainsCollision { node: usize, gap: f64 },

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
