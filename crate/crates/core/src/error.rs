use alloc::string::String;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid arguments: {0}")]
    InvalidArgs(String),
    #[error("adaptive quadrature did not converge after {subdivisions} subdivisions (relative error estimate {rel_error:e})")]
    NonConvergence { subdivisions: usize, rel_error: f64 },
    #[error("endpoint exponent {0} is not integrable (must be > -1)")]
    SingularEndpoint(f64),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("moment kind {kind} is not available in closed form for family {family}")]
    UnsupportedMomentKind {
        kind: &'static str,
        family: &'static str,
    },
    #[error("reduction check needs alpha = {expected} for this family, got {found}")]
    WrongAlphaForReduction { expected: f64, found: f64 },
    #[error("could not draw a non-degenerate tangent direction after {0} attempts")]
    DegenerateDraw(usize),
    #[error("rejection envelope violated: acceptance probability {0} > 1")]
    EnvelopeError(f64),
    #[error("duplicate points: pairwise distance {distance:e} between rows {first} and {second}")]
    DuplicatePoints {
        first: usize,
        second: usize,
        distance: f64,
    },
    #[error("sample mean is (numerically) zero; mean direction undefined")]
    DegenerateMeanDirection,
    #[error("no root inside the parameter box: {0}")]
    NoRootInBox(String),
    #[error("fit did not converge: {0}")]
    UnconvergedFit(String),
    #[error("{dropped} of {total} null replicates were dropped (limit 2%)")]
    TooManyDropped { dropped: usize, total: usize },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgs(msg.into())
}

impl Error {
    /// True for errors caused by numerical non-convergence rather than bad input.
    pub fn is_numeric_failure(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::NoRootInBox(_)
                | Error::UnconvergedFit(_)
                | Error::TooManyDropped { .. }
                | Error::DegenerateDraw(_)
                | Error::EnvelopeError(_)
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
