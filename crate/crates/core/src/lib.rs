//! Mean-square optimal and minimax-robust linear estimation of functionals of
//! sequences with periodically stationary `n`-th increments observed with
//! additive stationary noise.
//!
//! A scalar sequence with period `T` is blocked into a `T`-dimensional vector
//! sequence with stationary increments ([`increments::block_series`]). The
//! estimation problem for `Σ a(k)ᵀ ξ(k), k = 0..=N` from observations of
//! `ξ + η` outside `0..=N` is solved in the frequency domain:
//!
//! * [`increments`] holds the coefficient transforms (`b`, `v`, `a_μ`, `d_μ`);
//! * [`spectra`] holds density models, quadrature and the block matrices;
//! * [`estimator`] solves for the spectral characteristic and the error;
//! * [`minimax`] searches for least favorable densities in admissible classes;
//! * [`simulate`] synthesizes paths and provides independent oracles.

pub mod error;
pub mod estimator;
pub mod fixtures;
pub mod increments;
pub mod io;
pub mod linalg;
pub mod minimax;
pub mod simulate;
pub mod spectra;

pub use error::{Error, Result};
pub use estimator::{EstimateSolution, EstimationProblem};
pub use increments::{CoefficientSet, IncrementSpec};
pub use spectra::{DensityPair, SpectralDensity};

pub use num_complex::Complex64;

/// Complex `T × T` (or larger) dense matrix used throughout the crate.
pub type CMat = nalgebra::DMatrix<Complex64>;
/// Complex dense column vector.
pub type CVec = nalgebra::DVector<Complex64>;
