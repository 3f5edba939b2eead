//! Reference problems used by the test suites, the acceptance runner and the
//! CLI's `--fixture` shortcut.
//!
//! Signal densities are increment-compensated where `μ ≥ 2`, so that the
//! increments have a smooth, bounded density and the minimality integral is
//! finite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::increments::IncrementSpec;
use crate::linalg::c;
use crate::spectra::{DensityPair, SpectralDensity};
use crate::{CMat, CVec, Complex64};

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub spec: IncrementSpec,
    pub pair: DensityPair,
    pub a: Vec<CVec>,
}

fn real_vecs(rows: &[&[f64]]) -> Vec<CVec> {
    rows.iter().map(|r| CVec::from_iterator(r.len(), r.iter().map(|&x| c(x)))).collect()
}

fn real_mat(dim: usize, vals: &[f64]) -> CMat {
    CMat::from_row_slice(dim, dim, &vals.iter().map(|&x| c(x)).collect::<Vec<_>>())
}

/// Scalar problem `T = 1, n = 1, μ = 1, N = 2`: MA(1) increments observed with
/// MA(1) noise.
pub fn scalar_toy() -> Fixture {
    let spec = IncrementSpec::new(1, 1, 1, 2).unwrap();
    let f = SpectralDensity::compensated(
        1,
        1,
        SpectralDensity::moving_average(vec![real_mat(1, &[1.0]), real_mat(1, &[0.4])]),
    );
    let g = SpectralDensity::moving_average(vec![real_mat(1, &[0.5]), real_mat(1, &[0.2])]);
    Fixture {
        name: "scalar-toy".into(),
        spec,
        pair: DensityPair::new(f, g, 1, 1).unwrap(),
        a: real_vecs(&[&[1.0], &[0.5], &[-0.3]]),
    }
}

/// Increment-compensated `μ = 3` problem with `T = 2`, constant noise.
pub fn compensated_mu3() -> Fixture {
    let spec = IncrementSpec::new(1, 3, 2, 1).unwrap();
    let base = SpectralDensity::constant(real_mat(2, &[1.0, 0.3, 0.3, 0.8]));
    let f = SpectralDensity::compensated(1, 3, base);
    let g = SpectralDensity::constant(real_mat(2, &[0.05, 0.0, 0.0, 0.08]));
    Fixture {
        name: "compensated-mu3".into(),
        spec,
        pair: DensityPair::new(f, g, 1, 3).unwrap(),
        a: real_vecs(&[&[1.0, -0.5], &[0.25, 0.75]]),
    }
}

/// `T = 2, n = 1, μ = 1, N = 1` with a coupled matrix MA(1) increment density
/// and correlated constant noise. Real coefficients, so sample paths are real.
pub fn matrix_fixture() -> Fixture {
    let spec = IncrementSpec::new(1, 1, 2, 1).unwrap();
    let base = SpectralDensity::moving_average(vec![
        real_mat(2, &[1.0, 0.0, 0.3, 0.9]),
        real_mat(2, &[0.4, 0.1, -0.2, 0.3]),
    ]);
    let f = SpectralDensity::compensated(1, 1, base);
    let g = SpectralDensity::constant(real_mat(2, &[0.04, 0.01, 0.01, 0.03]));
    Fixture {
        name: "matrix-t2".into(),
        spec,
        pair: DensityPair::new(f, g, 1, 1).unwrap(),
        a: real_vecs(&[&[1.0, 0.5], &[-0.4, 0.8]]),
    }
}

/// Complex Hermitian (not real-symmetric) densities and complex weights.
pub fn complex_fixture() -> Fixture {
    let spec = IncrementSpec::new(1, 1, 2, 1).unwrap();
    let i = Complex64::new(0.0, 1.0);
    let th1 = CMat::from_row_slice(2, 2, &[c(0.3), i * 0.2, c(0.1), c(-0.25)]);
    let base = SpectralDensity::moving_average(vec![CMat::identity(2, 2), th1]);
    let f = SpectralDensity::compensated(1, 1, base);
    let g = SpectralDensity::constant(CMat::from_row_slice(2, 2, &[c(0.06), i * 0.02, -i * 0.02, c(0.05)]));
    Fixture {
        name: "complex-t2".into(),
        spec,
        pair: DensityPair::new(f, g, 1, 1).unwrap(),
        a: vec![
            CVec::from_vec(vec![Complex64::new(1.0, 0.5), c(0.2)]),
            CVec::from_vec(vec![c(-0.3), Complex64::new(0.0, 0.7)]),
        ],
    }
}

fn random_sym_pd(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> CMat {
    let x = CMat::from_fn(dim, dim, |_, _| c(rng.random::<f64>() - 0.5));
    (&x * x.adjoint() + CMat::identity(dim, dim) * c(0.5)) * c(scale)
}

/// Twenty deterministic problems spanning `n ∈ {1,2}`, `μ ∈ {1,2,3}`,
/// `T ∈ {1,2,3}`, `N ∈ {0..3}`, including [`scalar_toy`] and
/// [`compensated_mu3`].
pub fn fixture_family() -> Vec<Fixture> {
    let mut out = vec![scalar_toy(), compensated_mu3(), matrix_fixture(), complex_fixture()];
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let shapes = [
        (1, 1, 1, 0),
        (1, 2, 1, 2),
        (2, 1, 1, 1),
        (1, 3, 1, 1),
        (2, 2, 1, 0),
        (1, 1, 3, 1),
        (1, 2, 2, 2),
        (2, 1, 2, 1),
        (1, 1, 1, 3),
        (2, 3, 1, 0),
        (1, 3, 3, 0),
        (1, 1, 2, 2),
        (2, 1, 1, 3),
        (1, 2, 3, 1),
        (1, 1, 1, 1),
        (1, 2, 1, 1),
    ];
    for (idx, &(n, mu, t, horizon)) in shapes.iter().enumerate() {
        let spec = IncrementSpec::new(n, mu, t, horizon).unwrap();
        let ma = vec![random_sym_pd(&mut rng, t, 1.0), CMat::from_fn(t, t, |_, _| c(0.4 * (rng.random::<f64>() - 0.5)))];
        let base = SpectralDensity::moving_average(ma);
        // Bounded signal densities are only admissible when μ = 1.
        let f = if mu == 1 && idx % 3 == 0 {
            SpectralDensity::constant(random_sym_pd(&mut rng, t, 0.5))
        } else {
            SpectralDensity::compensated(n, mu, base)
        };
        let g = if idx % 2 == 0 {
            SpectralDensity::constant(random_sym_pd(&mut rng, t, 0.1))
        } else {
            SpectralDensity::moving_average(vec![
                random_sym_pd(&mut rng, t, 0.3),
                CMat::from_fn(t, t, |_, _| c(0.1 * (rng.random::<f64>() - 0.5))),
            ])
        };
        let complex_weights = idx % 4 == 1;
        let a = (0..=horizon)
            .map(|_| {
                CVec::from_fn(t, |_, _| {
                    let im = if complex_weights { rng.random::<f64>() - 0.5 } else { 0.0 };
                    Complex64::new(rng.random::<f64>() * 2.0 - 1.0, im)
                })
            })
            .collect();
        out.push(Fixture {
            name: format!("family-{idx:02}-n{n}-mu{mu}-t{t}-h{horizon}"),
            spec,
            pair: DensityPair::new(f, g, n, mu).unwrap(),
            a,
        });
    }
    out
}
