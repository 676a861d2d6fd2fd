use crate::estimator::SparseChannelEstimate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("scenario sampling failed: {0}")]
    Scenario(String),
    #[error("estimator diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        last: Box<SparseChannelEstimate>,
    },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("beam leaves the visible region on subcarrier {m}")]
    OutOfVisibleRegion { m: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(String),
}

impl Error {
    /// Stable machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::NotHermitian(_) => "not_hermitian",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Scenario(_) => "scenario",
            Error::Diverged { .. } => "diverged",
            Error::DegenerateGeometry(_) => "degenerate_geometry",
            Error::OutOfVisibleRegion { .. } => "out_of_visible_region",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
        }
    }
}
