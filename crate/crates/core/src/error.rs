use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("element {element} has non-positive Jacobian determinant {det:.3e}")]
    DegenerateElement { element: usize, det: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual norm {residual:.3e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("sensor {index} at {coords:?} lies outside the mesh")]
    SensorOutsideMesh { index: usize, coords: Vec<f64> },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design matrix is rank deficient (numerical rank {rank} < {columns} columns); draw more samples")]
    RankDeficient { rank: usize, columns: usize },

    #[error("forward solve for sample {index} (xi = {xi:?}) failed: {source}")]
    SampleFailed {
        index: usize,
        xi: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("{what} is not positive definite after jitter {jitter:.1e} (smallest eigenvalue estimate {min_eigenvalue:.3e})")]
    NotPositiveDefinite {
        what: String,
        jitter: f64,
        min_eigenvalue: f64,
    },

    #[error("negative log marginal likelihood is not finite at rho = {rho}, ln sigma_d = {ln_sigma_d}, ln l_d = {ln_l_d}")]
    NonFiniteObjective { rho: f64, ln_sigma_d: f64, ln_l_d: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMesh(_) => "invalid_mesh",
            Error::DegenerateElement { .. } => "degenerate_element",
            Error::Singular(_) => "singular",
            Error::NewtonDivergence { .. } => "newton_divergence",
            Error::SensorOutsideMesh { .. } => "sensor_outside_mesh",
            Error::InvalidInput(_) => "invalid_input",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::SampleFailed { .. } => "sample_failed",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::NonFiniteObjective { .. } => "non_finite_objective",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }
}
