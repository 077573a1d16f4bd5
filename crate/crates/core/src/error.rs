use thiserror::Error;

/// Failures raised by the formation, internal-model and simulation layers.
///
/// Agent identifiers in messages are the 1-based external IDs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate bearing: points are {distance:e} apart (threshold {threshold:e})")]
    DegenerateBearing { distance: f64, threshold: f64 },

    #[error("input vector is not unit length (norm {norm})")]
    NonUnitInput { norm: f64 },

    #[error("edge ({0}, {1}) has no desired bearing")]
    MissingBearing(u32, u32),

    #[error("follower block B_ff is singular (smallest singular value {sigma_min:e})")]
    NotLocalizable { sigma_min: f64 },

    #[error("frequency {0} appears more than once")]
    DuplicateFrequency(f64),

    #[error("frequency {0} is not positive")]
    NonPositiveFrequency(f64),

    #[error("Sylvester operator is singular: spectra of M and Phi overlap")]
    SingularSylvesterOperator,

    #[error("Sylvester solution T is singular (smallest singular value {sigma_min:e})")]
    SingularT { sigma_min: f64 },

    #[error("follower {0} has no neighbors")]
    IsolatedFollower(u32),

    #[error("gain condition violated: {0}")]
    GainConditionViolated(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Lyapunov certificate failed: {0}")]
    CertificateFailed(String),

    #[error("collision at t = {t}: agents {a} and {b} are {distance:e} apart")]
    CollisionDetected { t: f64, a: u32, b: u32, distance: f64 },

    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),
}

impl Error {
    /// Stable variant name, used when errors are surfaced through validation reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DegenerateBearing { .. } => "DegenerateBearing",
            Error::NonUnitInput { .. } => "NonUnitInput",
            Error::MissingBearing(..) => "MissingBearing",
            Error::NotLocalizable { .. } => "NotLocalizable",
            Error::DuplicateFrequency(_) => "DuplicateFrequency",
            Error::NonPositiveFrequency(_) => "NonPositiveFrequency",
            Error::SingularSylvesterOperator => "SingularSylvesterOperator",
            Error::SingularT { .. } => "SingularT",
            Error::IsolatedFollower(_) => "IsolatedFollower",
            Error::GainConditionViolated(_) => "GainConditionViolated",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::CertificateFailed(_) => "CertificateFailed",
            Error::CollisionDetected { .. } => "CollisionDetected",
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::InvalidGraph(_) => "InvalidGraph",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
