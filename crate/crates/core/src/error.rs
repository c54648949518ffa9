use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("problem domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("invalid constant: {0}")]
    InvalidConstant(String),

    #[error("no valid scaling exponent: the inequality fails even at nu = {0}")]
    NoValidNu(f64),

    #[error("operation not supported for this region: {0}")]
    Unsupported(String),

    #[error("vertex enumeration too large: {count} vertices exceeds cap {cap}")]
    TooLarge { count: u128, cap: u128 },

    #[error("line search did not terminate after {0} evaluations")]
    LineSearchDiverged(usize),

    #[error("infeasible start: {0}")]
    InfeasibleStart(String),

    #[error("kernel mismatch: {0}")]
    KernelMismatch(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("unknown bound kind `{0}`")]
    UnknownKind(String),

    #[error("unknown dataset recipe `{0}`")]
    UnknownRecipe(String),

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    /// True for errors caused by bad input (configuration, specs, constants)
    /// rather than by something going wrong while solving.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::UnknownKind(_)
                | Error::UnknownRecipe(_)
                | Error::InvalidConstant(_)
                | Error::ShapeMismatch { .. }
                | Error::DomainMismatch(_)
                | Error::KernelMismatch(_)
                | Error::Unsupported(_)
                | Error::TooLarge { .. }
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
