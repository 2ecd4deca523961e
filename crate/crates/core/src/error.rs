use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The model violates one of its standing assumptions.
    #[error("invalid model: {}", .failures.join("; "))]
    InvalidModel { failures: Vec<String> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("decay fit failed: {0}")]
    FitFailure(String),

    #[error("escape rate of level {level} vanishes")]
    ZeroEscapeRate { level: usize },

    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("lost track of the Perron eigenvalue at p = {p:?}: {reason}")]
    TrackingLoss { p: Vec<f64>, reason: String },

    #[error(
        "finite differences inconsistent: relative change {relative_change:e} between h and h/2"
    )]
    FdInconsistency { relative_change: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// `true` for errors caused by the user's input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidModel { .. }
                | Error::Config(_)
                | Error::Json(_)
                | Error::Io(_)
                | Error::DimensionMismatch { .. }
                | Error::Precondition(_)
        )
    }

    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidModel { .. } => "invalid_model",
            Error::Config(_) => "config",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::QuadratureNonConvergence(_) => "quadrature_nonconvergence",
            Error::FitFailure(_) => "fit_failure",
            Error::ZeroEscapeRate { .. } => "zero_escape_rate",
            Error::NonConvergence { .. } => "nonconvergence",
            Error::TrackingLoss { .. } => "tracking_loss",
            Error::FdInconsistency { .. } => "fd_inconsistency",
            Error::Precondition(_) => "precondition",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
