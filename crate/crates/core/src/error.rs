use thiserror::Error;

/// Failures raised by the fitting and detection pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("bandwidth collapsed to zero at rank {rank}; duplicated points dominate the distance matrix")]
    DegenerateBandwidth { rank: usize },

    #[error("eigensolver did not converge within {max_iter} iterations")]
    ConvergenceFailure { max_iter: usize },

    #[error("conic does not describe a real, non-degenerate ellipse")]
    NotAnEllipse,

    #[error("quadric does not describe a real, non-degenerate ellipsoid")]
    NotAnEllipsoid,

    #[error("gradient of the model vanishes at the query point")]
    SingularPoint,

    #[error("vector is identically zero")]
    ZeroVector,

    #[error("no eigenvector passed the eligibility filters")]
    NoEligibleVectors,

    #[error("quantile interval excluded every element")]
    AllFlagged,

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),

    #[error("every minimal sample was degenerate")]
    NoValidModel,

    #[error("label vectors differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}-D data, got {got}-D")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for failures caused by the numbers rather than by the caller's
    /// configuration. The CLI maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidConfig(_) | Error::LengthMismatch { .. } | Error::DimensionMismatch { .. }
        )
    }
}
