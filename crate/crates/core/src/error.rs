use thiserror::Error;

/// Failure of the Jacobi-preconditioned conjugate gradient iteration.
///
/// Carries the full relative-residual history so a caller can tell a stalled
/// iteration from a slowly converging one.
#[derive(Debug, Clone, Error)]
#[error("conjugate gradients did not reach tol {tol:e} within {iterations} iterations (last relative residual {last:e})", last = self.last_residual())]
pub struct CgFailure {
    pub tol: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

impl CgFailure {
    pub fn last_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Error)]
pub enum BtnError {
    #[error("invalid {name}: {reason}")]
    Validation { name: String, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0} must vanish on the boundary")]
    NotBoundaryZero(&'static str),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error(transparent)]
    Solver(#[from] CgFailure),

    #[error("time step {dt:e} exceeds the explicit-term bound {bound:e}")]
    TimeStep { dt: f64, bound: f64 },

    #[error("decay fit: {0}")]
    Fit(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse failure class, used by the command line to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

impl BtnError {
    pub fn validation(name: impl Into<String>, reason: impl Into<String>) -> Self {
        BtnError::Validation {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            BtnError::Validation { .. }
            | BtnError::Parse { .. }
            | BtnError::GridMismatch
            | BtnError::NotBoundaryZero(_)
            | BtnError::TimeStep { .. } => ErrorKind::Validation,
            BtnError::NonFinite(_) | BtnError::Solver(_) | BtnError::Fit(_) => ErrorKind::Numerical,
            BtnError::Io(_) | BtnError::Format(_) => ErrorKind::Io,
        }
    }
}

pub type Result<T, E = BtnError> = std::result::Result<T, E>;
