use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid increment order n = {0}, must be >= 1")]
    InvalidOrder(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("window too short: need more than {needed} samples, got {got}")]
    InsufficientWindow { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("frequency {0} outside [-pi, pi)")]
    Domain(f64),

    #[error("spectral density is singular near lambda = {lambda}")]
    SingularDensity { lambda: f64 },

    #[error("spectral density is not positive semidefinite near lambda = {lambda} (min eigenvalue {min_eig:e})")]
    NotPsd { lambda: f64, min_eig: f64 },

    #[error("integral appears divergent near lambda = {near}")]
    Divergent { near: f64 },

    #[error("quadrature did not converge: last two estimates differ by {diff:e} (tol {tol:e})")]
    Convergence { diff: f64, tol: f64, last: f64, previous: f64 },

    #[error("ill-conditioned system (condition estimate {cond:e})")]
    Conditioning { cond: f64 },

    #[error("spectral characteristic has an uncompensated pole at lambda = {0}")]
    Pole(f64),

    #[error("infeasible admissible class: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors that come from numerics rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDensity { .. }
                | Error::NotPsd { .. }
                | Error::Divergent { .. }
                | Error::Convergence { .. }
                | Error::Conditioning { .. }
                | Error::Pole(_)
                | Error::Infeasible(_)
        )
    }
}
