use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "covariance matrix is singular or indefinite (smallest eigenvalue {min_eigenvalue:e})"
    )]
    SingularCovariance { min_eigenvalue: f64 },

    #[error("matrix is not symmetric (max |a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside the domain of {kind}: {detail}")]
    Domain { kind: &'static str, detail: String },

    #[error("slope parameter s = {0:e} is too small; the frontier is degenerate")]
    DegenerateSlope(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not positive semi-definite (eigenvalue {0:e})")]
    NotPositiveSemiDefinite(f64),

    #[error("degrees of freedom {dof} must be positive (n = {n}, p = {p})")]
    DegenerateDof { n: usize, p: usize, dof: i64 },

    #[error("sample covariance matrix is singular")]
    SingularSampleCovariance,

    #[error("insufficient sample: n = {n} must exceed p = {p}")]
    InsufficientSample { n: usize, p: usize },

    #[error("consistent slope estimate is not positive ({0:e})")]
    NonpositiveSlopeEstimate(f64),

    #[error("estimated asymptotic covariance is singular or indefinite")]
    SingularOmega,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0} of draws violated the portfolio domain, above the 50% limit")]
    ExcessiveDomainViolations(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by the user's input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Json(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::InvalidParameter(_)
                | Error::Dimension(_)
                | Error::InsufficientSample { .. }
                | Error::DegenerateDof { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
