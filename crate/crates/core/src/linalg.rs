//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::linalg::{Cholesky, SymmetricEigen};

use crate::error::{Error, Result};
use crate::{CMat, CVec, Complex64};

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `(M + M^*) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(hermitian_part(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Factor `A` with `A A^* = m` for a Hermitian PSD `m`, clipping tiny negative
/// eigenvalues produced by rounding.
pub fn psd_sqrt(m: &CMat) -> CMat {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let d = eig.eigenvalues.map(|x| c(x.max(0.0).sqrt()));
    &eig.eigenvectors * CMat::from_diagonal(&d)
}

/// Inverse of a Hermitian positive definite matrix.
pub fn hermitian_inverse(m: &CMat) -> Option<CMat> {
    if m.nrows() == 1 {
        let x = m[(0, 0)].re;
        return if x > 0.0 && x.is_finite() { Some(CMat::from_element(1, 1, c(1.0 / x))) } else { None };
    }
    let inv = Cholesky::new(hermitian_part(m))?.inverse();
    Some(hermitian_part(&inv))
}

/// Swap every `t × t` block for its transpose, keeping block positions.
pub fn transpose_blocks(m: &CMat, t: usize) -> CMat {
    let mut out = m.clone();
    let nb = m.nrows() / t;
    for bj in 0..nb {
        for bk in 0..nb {
            for p in 0..t {
                for q in 0..t {
                    out[(bj * t + p, bk * t + q)] = m[(bj * t + q, bk * t + p)];
                }
            }
        }
    }
    out
}

/// Cholesky solve for a Hermitian positive definite system. Fails with a
/// condition estimate when the matrix is not numerically positive definite.
pub struct SpdSolver {
    chol: Cholesky<Complex64, nalgebra::Dyn>,
    pub condition: f64,
}

impl SpdSolver {
    pub const MAX_CONDITION: f64 = 1e13;

    pub fn new(m: &CMat) -> Result<Self> {
        let h = hermitian_part(m);
        let ev = hermitian_eigenvalues(&h);
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition < Self::MAX_CONDITION) {
            return Err(Error::Conditioning { cond: condition });
        }
        let chol = Cholesky::new(h).ok_or(Error::Conditioning { cond: condition })?;
        Ok(Self { chol, condition })
    }

    pub fn solve(&self, rhs: &CVec) -> CVec {
        self.chol.solve(rhs)
    }
}

/// `⟨x, y⟩ = Σ x_i conj(y_i)`.
pub fn inner(x: &CVec, y: &CVec) -> Complex64 {
    y.dotc(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spd_solver_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 12;
        let x = CMat::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let a = &x * x.adjoint() + CMat::identity(n, n) * c(0.1);
        let rhs = CVec::from_fn(n, |_, _| Complex64::new(rng.random(), rng.random()));
        let solver = SpdSolver::new(&a).unwrap();
        let sol = solver.solve(&rhs);
        assert!((&a * sol - &rhs).norm() <= 1e-10 * rhs.norm());
    }

    #[test]
    fn singular_matrix_reports_condition() {
        let a = CMat::from_element(2, 2, c(1.0));
        assert!(matches!(SpdSolver::new(&a), Err(Error::Conditioning { .. })));
    }

    #[test]
    fn psd_sqrt_factorizes() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0), Complex64::new(0.5, 0.3), Complex64::new(0.5, -0.3), c(1.0)]);
        let a = psd_sqrt(&m);
        assert!((&a * a.adjoint() - &m).norm() < 1e-12);
    }
}
