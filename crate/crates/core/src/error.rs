use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure classes shared by every module of the toolkit.
///
/// The CLI maps these onto process exit codes, so variants are grouped by
/// whether they describe bad input ([`Error::is_input_error`]) or a numerical
/// failure on valid input.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error(
        "integration did not converge (estimated error {error_estimate:.3e}, value {value:.6e})"
    )]
    Integration { value: f64, error_estimate: f64 },

    #[error("fit failed: {reason}")]
    FitFailure {
        reason: String,
        /// Best parameter vector reached before giving up, if any.
        best: Option<Vec<f64>>,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("approximation quality: {0}")]
    ApproximationQuality(String),

    #[error("sampling density: {0}")]
    SamplingDensity(String),

    #[error("insensitive configuration: {0}")]
    InsensitiveConfiguration(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True when the error stems from invalid inputs rather than from a
    /// numerical procedure failing on valid inputs.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::InvalidParameter { .. }
                | Error::UnsupportedModel(_)
                | Error::Resolution(_)
                | Error::Range(_)
                | Error::Geometry(_)
                | Error::ApproximationQuality(_)
                | Error::SamplingDensity(_)
                | Error::InsensitiveConfiguration(_)
        )
    }
}
