use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported order m = {m} (max {max})")]
    UnsupportedOrder { m: u32, max: u32 },

    #[error("unsupported zero index j = {j} (max {max})")]
    UnsupportedIndex { j: u32, max: u32 },

    #[error("support precondition violated: {0}")]
    Support(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("CFL violation: max|u| dt / h = {courant:.3} exceeds {limit}")]
    Cfl { courant: f64, limit: f64 },

    #[error("conservation drift in {quantity}: relative drift {drift:.3e} at t = {time:.4}")]
    ConservationDrift {
        quantity: &'static str,
        drift: f64,
        time: f64,
    },

    #[error("degenerate constraints: {0}")]
    Degenerate(String),

    #[error("newton iteration did not converge after {iters} iterations (|G| = {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("singular jacobian: {0}")]
    Singular(String),

    #[error("Lyapunov decomposition mismatch: direct {direct:.12e} vs expanded {expanded:.12e}")]
    DecompositionMismatch { direct: f64, expanded: f64 },

    #[error("snapshot {index}: {source}")]
    Snapshot {
        index: usize,
        #[source]
        source: Box<LabError>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
