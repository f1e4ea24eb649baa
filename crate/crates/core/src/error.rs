use thiserror::Error;

/// Errors raised by the reduction toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("shifted matrix is singular at lambda = {re:e}{im:+e}i")]
    SingularShift { re: f64, im: f64 },

    #[error("defective pencil: eigenvector condition number {cond:e}")]
    Defective { cond: f64 },

    #[error("unstable pencil: spectral abscissa {abscissa:e}{hint}")]
    Unstable { abscissa: f64, hint: String },

    #[error("{what}: residual {residual:e} exceeds tolerance {tol:e}")]
    Residual {
        what: &'static str,
        residual: f64,
        tol: f64,
    },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::InvalidNetwork(_)
                | Error::InvalidArgument(_)
                | Error::Dimension { .. }
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { what, expected, got });
    }
    Ok(())
}
