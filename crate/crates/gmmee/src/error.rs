use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Error {
    /// Cholesky failed even after one jitter retry.
    NotPositiveDefinite,
    /// Triangularization produced a diagonal entry below [`crate::linalg::RANK_TOL`].
    RankDeficient,
    /// A NaN or infinite value reached a routine that requires finite input.
    NonFinite,
    /// Argument outside the mathematical domain of the function.
    DomainError,
    /// Operand shapes do not agree.
    DimensionMismatch,
    /// An operation over samples received none.
    EmptyInput,
    /// Least-squares system too ill-conditioned to trust.
    IllConditioned { estimate: f64 },
    /// A configuration or model parameter violates its invariant.
    InvalidParameter(&'static str),
    /// The robust gain system was singular or the fixed point diverged.
    NumericBreakdown,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotPositiveDefinite => write!(f, "matrix is not positive definite"),
            Error::RankDeficient => write!(f, "matrix is numerically rank deficient"),
            Error::NonFinite => write!(f, "non-finite value encountered"),
            Error::DomainError => write!(f, "argument outside function domain"),
            Error::DimensionMismatch => write!(f, "dimension mismatch"),
            Error::EmptyInput => write!(f, "empty input"),
            Error::IllConditioned { estimate } => {
                write!(f, "ill-conditioned system (condition estimate {estimate:.3e})")
            }
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::NumericBreakdown => write!(f, "numeric breakdown in robust update"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
