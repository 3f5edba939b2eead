//! Optimal linear estimate of `A_N ξ = Σ_{k=0}^{N} a(k)ᵀ ξ(k)`: the linear
//! system for the unknown coefficients `c`, the spectral characteristic
//! `h(λ) = h₁(λ) - h₂(λ)`, the mean-square error in bracket and integral form,
//! and the time-domain filter obtained from `h`.
//!
//! Vectors are columns throughout; a row-vector identity `xᵀ M` from the
//! frequency-domain derivation appears here as `Mᵀ x`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::increments::{flatten, increment_value, unflatten, CoefficientSet, IncrementSpec, Series};
use crate::linalg::{c, inner, SpdSolver};
use crate::spectra::{
    assemble_matrices, difference_factor, BlockMatrices, CompositeRule, DensityPair, PairPoint, Quadrature,
};
use crate::{CMat, CVec, Complex64};

/// Relative residual accepted from the linear solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct EstimationProblem {
    pub coeffs: CoefficientSet,
    pub pair: DensityPair,
    pub quad: Quadrature,
}

impl EstimationProblem {
    pub fn new(spec: IncrementSpec, a: Vec<CVec>, pair: DensityPair) -> Result<Self> {
        crate::spectra::check_spec_pair(&pair, &spec)?;
        Ok(Self { coeffs: CoefficientSet::new(spec, a)?, pair, quad: Quadrature::default() })
    }

    pub fn with_quadrature(mut self, quad: Quadrature) -> Self {
        self.quad = quad;
        self
    }

    pub fn spec(&self) -> &IncrementSpec {
        &self.coeffs.spec
    }

    /// Assemble the block matrices (after the minimality check) and solve.
    pub fn solve(&self) -> Result<EstimateSolution> {
        let matrices = assemble_matrices(&self.pair, self.spec(), &self.quad)?;
        self.solve_with(matrices)
    }

    /// Solve with already assembled matrices.
    pub fn solve_with(&self, matrices: BlockMatrices) -> Result<EstimateSolution> {
        let s = matrices.system_p();
        let t = matrices.system_t();
        let q = matrices.system_q();
        let solver = SpdSolver::new(&s)?;

        let rhs_b = self.coeffs.padded_b();
        let rhs_t = &t * self.coeffs.flat_a_mu();
        let c_b = solver.solve(&rhs_b);
        let c_t = solver.solve(&rhs_t);
        let rhs = &rhs_b - &rhs_t;
        let c_all = &c_b - &c_t;

        let scale = rhs_b.norm().max(rhs_t.norm()).max(1e-300);
        let residual = ((&s * &c_b - &rhs_b).norm() + (&s * &c_t - &rhs_t).norm()) / scale;
        if residual > SOLVE_RESIDUAL_TOL {
            return Err(Error::Conditioning { cond: solver.condition });
        }

        let a = self.coeffs.flat_a();
        let system_term = inner(&rhs, &c_all).re;
        let noise_term = inner(&(&q * &a), &a).re;
        let mse = 2.0 * PI * (system_term + noise_term);

        let dim = self.spec().period;
        let mut coeffs = self.coeffs.clone();
        coeffs.c = Some(unflatten(&c_all, dim));
        Ok(EstimateSolution {
            problem: self.clone(),
            coeffs,
            c_b: unflatten(&c_b, dim),
            c_t: unflatten(&c_t, dim),
            matrices,
            mse,
            system_term: 2.0 * PI * system_term,
            noise_term: 2.0 * PI * noise_term,
            residual,
            condition: solver.condition,
        })
    }
}

/// `h`, `h₁`, `h₂` at one frequency.
#[derive(Debug, Clone)]
pub struct Characteristic {
    pub h: CVec,
    pub h1: CVec,
    pub h2: CVec,
}

#[derive(Debug, Clone)]
pub struct EstimateSolution {
    pub problem: EstimationProblem,
    /// Coefficient families with `c` filled in.
    pub coeffs: CoefficientSet,
    /// Solution against `[D a]` alone (enters `h₁`).
    pub c_b: Vec<CVec>,
    /// Solution against `T a_μ` alone (enters `h₂`).
    pub c_t: Vec<CVec>,
    pub matrices: BlockMatrices,
    /// Mean-square error from the bracket form.
    pub mse: f64,
    pub system_term: f64,
    pub noise_term: f64,
    pub residual: f64,
    pub condition: f64,
}

/// `Σ_k v_k e^{ikλ}`.
pub fn trig_poly(v: &[CVec], lambda: f64) -> CVec {
    let dim = v.first().map_or(0, |x| x.len());
    let mut acc = CVec::zeros(dim);
    for (k, vk) in v.iter().enumerate() {
        acc += vk * Complex64::from_polar(1.0, k as f64 * lambda);
    }
    acc
}

/// `(1 - e^{-iμλ})^n / (iλ)^n`.
pub fn chi(lambda: f64, n: usize, mu: usize) -> Complex64 {
    (difference_factor(lambda, mu) * Complex64::new(0.0, -1.0)).powu(n as u32)
}

/// `(1 - e^{iμλ})^n`.
fn forward_factor(lambda: f64, n: usize, mu: usize) -> Complex64 {
    (c(1.0) - Complex64::from_polar(1.0, mu as f64 * lambda)).powu(n as u32)
}

/// `(-iλ)^n`.
fn neg_i_lambda(lambda: f64, n: usize) -> Complex64 {
    Complex64::new(0.0, -lambda).powu(n as u32)
}

/// `xᵀ M conj(x)`.
pub fn quad_form(x: &CVec, m: &CMat) -> f64 {
    (x.transpose() * m * x.conjugate())[(0, 0)].re
}

impl EstimateSolution {
    pub fn spec(&self) -> &IncrementSpec {
        &self.coeffs.spec
    }

    pub fn pair(&self) -> &DensityPair {
        &self.problem.pair
    }

    pub fn c(&self) -> &[CVec] {
        self.coeffs.c.as_deref().unwrap_or(&[])
    }

    /// `x(λ) = (1 - e^{iμλ})^n gᵀ A + C`.
    fn x_vec(&self, pt: &PairPoint, a: &CVec, cc: &CVec) -> CVec {
        let s = self.spec();
        pt.g.transpose() * a * forward_factor(pt.lambda, s.n, s.mu) + cc
    }

    /// `h(λ)/χ(λ) = B - p^{-T} x / gain`, finite everywhere including the
    /// zeros of `χ`.
    pub fn h_over_chi(&self, lambda: f64) -> Result<CVec> {
        let pt = self.pair().point(lambda)?;
        Ok(self.h_over_chi_at(&pt))
    }

    fn h_over_chi_at(&self, pt: &PairPoint) -> CVec {
        let l = pt.lambda;
        let a = trig_poly(&self.coeffs.a, l);
        let cc = trig_poly(self.c(), l);
        let x = self.x_vec(pt, &a, &cc);
        trig_poly(&self.coeffs.b, l) - pt.p_inv.transpose() * x * c(1.0 / pt.gain)
    }

    /// Spectral characteristic and its two parts. Fails at the zeros of `χ`
    /// away from the origin, where the parts are not defined.
    pub fn characteristic(&self, lambda: f64) -> Result<Characteristic> {
        let s = self.spec();
        let ch = chi(lambda, s.n, s.mu);
        if ch.norm() < 1e-12 {
            return Err(Error::Pole(lambda));
        }
        let pt = self.pair().point(lambda)?;
        let kappa = ch.conj().inv();
        let p_inv_t = pt.p_inv.transpose();
        let a = trig_poly(&self.coeffs.a, lambda);
        let h1 = trig_poly(&self.coeffs.b, lambda) * ch - &p_inv_t * trig_poly(&self.c_b, lambda) * kappa;
        let h2 = (&pt.g * &pt.p_inv).transpose() * a * neg_i_lambda(lambda, s.n)
            - &p_inv_t * trig_poly(&self.c_t, lambda) * kappa;
        Ok(Characteristic { h: &h1 - &h2, h1, h2 })
    }

    /// `(u, v) = (p^{-T} x, p^{-T} w)` with `w = fᵀ A - λ^{2n}(1 - e^{iμλ})^{-n} C`,
    /// so that the error is `∫ uᵀ f conj(u) / gain + vᵀ g conj(v) dλ`. Both
    /// stay finite at the zeros of the gain.
    pub fn weighted_errors(&self, pt: &PairPoint) -> (CVec, CVec) {
        let s = self.spec();
        let l = pt.lambda;
        let a = trig_poly(&self.coeffs.a, l);
        let cc = trig_poly(self.c(), l);
        let x = self.x_vec(pt, &a, &cc);
        let lam_ratio = Complex64::new(l, 0.0).powu(s.n as u32) / difference_factor(l, s.mu).conj().powu(s.n as u32);
        let w = pt.f.transpose() * a - cc * lam_ratio;
        let p_inv_t = pt.p_inv.transpose();
        (&p_inv_t * x, p_inv_t * w)
    }

    /// Mean-square error as a frequency integral, independent of the bracket
    /// form used for [`EstimateSolution::mse`].
    pub fn mse_integral(&self) -> Result<f64> {
        let integrand = |l: f64| -> Vec<Complex64> {
            let pt = match self.pair().point(l) {
                Ok(p) => p,
                Err(_) => return vec![c(f64::NAN); 2],
            };
            let (u, v) = self.weighted_errors(&pt);
            vec![c(quad_form(&u, &pt.f) / pt.gain), c(quad_form(&v, &pt.g))]
        };
        let r = self.problem.quad.integrate_circle(&integrand, &self.pair().hints())?;
        let v = r.value[0].re + r.value[1].re;
        if !v.is_finite() {
            return Err(Error::SingularDensity { lambda: f64::NAN });
        }
        Ok(v)
    }

    /// Largest relative Fourier coefficient of `h/χ` at `j = 0..=N+μn`; zero
    /// when `h` is an admissible characteristic.
    pub fn membership_residual(&self) -> Result<f64> {
        let len = self.spec().system_len();
        let dim = self.spec().period;
        let integrand = |l: f64| -> Vec<Complex64> {
            let v = match self.h_over_chi(l) {
                Ok(v) => v,
                Err(_) => return vec![c(f64::NAN); len * dim],
            };
            (0..len)
                .flat_map(|j| {
                    let e = Complex64::from_polar(1.0 / (2.0 * PI), -(j as f64) * l);
                    v.iter().map(move |z| z * e).collect::<Vec<_>>()
                })
                .collect()
        };
        let r = self.problem.quad.integrate_circle(&integrand, &self.pair().hints())?;
        Ok(r.value.iter().map(|z| z.norm()).fold(0.0, f64::max) / self.coefficient_scale())
    }

    /// Largest relative Fourier coefficient, at the sampled `k` outside
    /// `0..=N+μn`, of `conj(χ)[pᵀ(χB - h) - (-iλ)^n gᵀ A]`.
    pub fn orthogonality_residual(&self, samples: usize) -> Result<f64> {
        let s = *self.spec();
        let len = s.system_len() as i64;
        let ks: Vec<i64> = (1..=samples as i64).flat_map(|i| [-i, len - 1 + i]).collect();
        let dim = s.period;
        let integrand = |l: f64| -> Vec<Complex64> {
            let r = (|| -> Result<CVec> {
                let ch = chi(l, s.n, s.mu);
                let pt = self.pair().point(l)?;
                let h = self.characteristic(l)?.h;
                let b = trig_poly(&self.coeffs.b, l);
                let a = trig_poly(&self.coeffs.a, l);
                let u = b * ch - h;
                Ok((pt.p.transpose() * u - pt.g.transpose() * a * neg_i_lambda(l, s.n)) * ch.conj())
            })();
            let r = match r {
                Ok(r) => r,
                Err(_) => return vec![c(f64::NAN); ks.len() * dim],
            };
            ks.iter()
                .flat_map(|&k| {
                    let e = Complex64::from_polar(1.0 / (2.0 * PI), -(k as f64) * l);
                    r.iter().map(move |z| z * e).collect::<Vec<_>>()
                })
                .collect()
        };
        let r = self.problem.quad.integrate_circle(&integrand, &self.pair().hints())?;
        Ok(r.value.iter().map(|z| z.norm()).fold(0.0, f64::max) / self.coefficient_scale())
    }

    fn coefficient_scale(&self) -> f64 {
        let m = |v: &[CVec]| v.iter().flat_map(|x| x.iter().map(|z| z.norm())).fold(0.0, f64::max);
        1.0 + m(&self.coeffs.b) + m(self.c())
    }

    /// Filter weights `s(k) = (1/2π) ∫ (h/χ)(λ) e^{-ikλ} dλ` for `k` within
    /// `radius` of the observed region on either side.
    pub fn filter(&self, radius: usize) -> Result<FilterWeights> {
        let s = *self.spec();
        let first_future = s.system_len() as i64;
        let max_lag = first_future as usize + radius;
        let panels = 256.max(2 * max_lag);
        let hints: Vec<f64> = self.pair().hints().iter().map(|h| h.at).collect();
        let rule = CompositeRule::new(panels, 16, &hints);
        let values: Vec<CVec> = rule
            .nodes
            .par_iter()
            .map(|&l| self.h_over_chi(l))
            .collect::<Result<_>>()?;
        let weight_at = |k: i64| -> CVec {
            let mut acc = CVec::zeros(s.period);
            for ((l, w), v) in rule.nodes.iter().zip(&rule.weights).zip(&values) {
                acc += v * Complex64::from_polar(w / (2.0 * PI), -(k as f64) * l);
            }
            acc
        };
        let (past, future): (Vec<CVec>, Vec<CVec>) = (1..=radius as i64)
            .into_par_iter()
            .map(|i| (weight_at(-i), weight_at(first_future - 1 + i)))
            .unzip();
        let inside: Vec<CVec> = (0..first_future).map(weight_at).collect();
        Ok(FilterWeights { spec: s, past, future, inside, v: self.coeffs.v.clone() })
    }

    /// [`EstimateSolution::filter`] with the radius doubled from `start` until
    /// the weight norm beyond the radius is below `tol` or `max_radius` is hit.
    pub fn filter_auto(&self, start: usize, tol: f64, max_radius: usize) -> Result<FilterWeights> {
        let mut radius = start.max(1).min(max_radius);
        loop {
            let wide = self.filter((2 * radius).min(2 * max_radius))?;
            let tail = wide.tail_norm(radius);
            if tail < tol || radius >= max_radius {
                return Ok(wide.truncate(radius));
            }
            radius = (2 * radius).min(max_radius);
        }
    }
}

/// Time-domain weights of the optimal estimate
/// `Â = Σ s(k)ᵀ ζ^{(n)}(k, μ) - Σ_{k=-μn}^{-1} v(k)ᵀ ζ(k)`, the first sum over
/// observed increments.
#[derive(Debug, Clone)]
pub struct FilterWeights {
    pub spec: IncrementSpec,
    /// `past[i]` is `s(-(i+1))`.
    pub past: Vec<CVec>,
    /// `future[i]` is `s(N + μn + 1 + i)`.
    pub future: Vec<CVec>,
    /// `s(k)` for `k = 0..=N+μn`; numerically zero for an optimal `h`.
    pub inside: Vec<CVec>,
    /// `v[i]` is `v(-(i+1))`.
    pub v: Vec<CVec>,
}

impl FilterWeights {
    pub fn radius(&self) -> usize {
        self.past.len()
    }

    /// `(k, s(k))` over every observed lag, ascending.
    pub fn weights(&self) -> Vec<(i64, &CVec)> {
        let first_future = self.spec.system_len() as i64;
        let mut out: Vec<(i64, &CVec)> = self.past.iter().enumerate().map(|(i, w)| (-(i as i64) - 1, w)).rev().collect();
        out.extend(self.future.iter().enumerate().map(|(i, w)| (first_future + i as i64, w)));
        out
    }

    /// `sqrt(Σ |s(k)|²)` over weights more than `radius` steps from the
    /// observed boundary.
    pub fn tail_norm(&self, radius: usize) -> f64 {
        let sq = |v: &[CVec]| v.iter().skip(radius).map(|x| x.norm_squared()).sum::<f64>();
        (sq(&self.past) + sq(&self.future)).sqrt()
    }

    pub fn truncate(mut self, radius: usize) -> Self {
        self.past.truncate(radius);
        self.future.truncate(radius);
        self
    }

    /// Earliest and latest time index of `ζ` the estimate reads.
    pub fn window(&self) -> (i64, i64) {
        let s = &self.spec;
        let lag = s.lag_span() as i64;
        let r = self.radius() as i64;
        (-r - lag, s.system_len() as i64 - 1 + r)
    }

    /// Apply the filter to an observed path. Values of `path` at times
    /// `0..=N` are never read.
    pub fn apply(&self, path: &Series) -> Result<Complex64> {
        let s = &self.spec;
        let (lo, hi) = self.window();
        if path.start > lo || path.end() < hi {
            return Err(Error::InsufficientWindow { needed: (hi - lo + 1) as usize, got: path.len() });
        }
        let mut acc = Complex64::default();
        for (k, w) in self.weights() {
            let inc = increment_value(path, k, s.n, s.mu as i64)
                .ok_or(Error::InsufficientWindow { needed: (hi - lo + 1) as usize, got: path.len() })?;
            acc += w.dot(&inc);
        }
        for (i, v) in self.v.iter().enumerate() {
            let k = -(i as i64) - 1;
            acc -= v.dot(path.get(k).expect("window checked"));
        }
        Ok(acc)
    }
}

/// Mean-square error of the estimate with an arbitrary characteristic `h`:
/// `∫ uᵀ f conj(u) + vᵀ g conj(v)` with `u = Bχ - h`, `v = (iλ)^n u - A`.
pub fn mse_of_characteristic<H>(pair: &DensityPair, coeffs: &CoefficientSet, h: H, quad: &Quadrature) -> Result<f64>
where
    H: Fn(f64) -> Result<CVec> + Sync,
{
    let s = coeffs.spec;
    let integrand = |l: f64| -> Vec<Complex64> {
        let r = (|| -> Result<(f64, f64)> {
            let f = pair.f.eval(l)?;
            let g = pair.g.eval(l)?;
            let u = trig_poly(&coeffs.b, l) * chi(l, s.n, s.mu) - h(l)?;
            let v = &u * Complex64::new(0.0, l).powu(s.n as u32) - trig_poly(&coeffs.a, l);
            Ok((quad_form(&u, &f), quad_form(&v, &g)))
        })();
        match r {
            Ok((x, y)) => vec![c(x), c(y)],
            Err(_) => vec![c(f64::NAN); 2],
        }
    };
    let r = quad.integrate_circle(&integrand, &pair.hints())?;
    let v = r.value[0].re + r.value[1].re;
    if !v.is_finite() {
        return Err(Error::SingularDensity { lambda: f64::NAN });
    }
    Ok(v)
}

/// Flattened `c` (length `(N+μn+1)·T`).
pub fn flat_c(sol: &EstimateSolution) -> CVec {
    flatten(sol.c())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::spectra::SpectralDensity;

    fn solve(fx: &fixtures::Fixture) -> EstimateSolution {
        EstimationProblem::new(fx.spec, fx.a.clone(), fx.pair.clone()).unwrap().solve().unwrap()
    }

    #[test]
    fn identity_increment_density_gives_c_equal_to_padded_b() {
        // f compensated to identity increments, no noise: P = I, T = 0, Q = 0.
        let spec = IncrementSpec::new(1, 3, 2, 1).unwrap();
        let f = SpectralDensity::compensated(1, 3, SpectralDensity::identity(2));
        let pair = DensityPair::new(f, SpectralDensity::zero(2), 1, 3).unwrap();
        let a = vec![CVec::from_vec(vec![c(1.0), c(2.0)]), CVec::from_vec(vec![c(-1.0), c(0.5)])];
        let sol = EstimationProblem::new(spec, a, pair).unwrap().solve().unwrap();
        let b = sol.coeffs.padded_b();
        assert!((flat_c(&sol) - &b).norm() < 1e-9);
        assert!((sol.mse - 2.0 * PI * b.norm_squared()).abs() < 1e-8 * sol.mse);
        assert!(sol.noise_term.abs() < 1e-12);
    }

    #[test]
    fn bracket_and_integral_forms_agree() {
        for fx in [fixtures::scalar_toy(), fixtures::matrix_fixture(), fixtures::complex_fixture(), fixtures::compensated_mu3()] {
            let sol = solve(&fx);
            let integral = sol.mse_integral().unwrap();
            assert!(sol.mse > 0.0);
            assert!((sol.mse - integral).abs() < 1e-7 * sol.mse, "{}: {} vs {}", fx.name, sol.mse, integral);
        }
    }

    #[test]
    fn characteristic_satisfies_both_conditions() {
        for fx in [fixtures::scalar_toy(), fixtures::complex_fixture(), fixtures::compensated_mu3()] {
            let sol = solve(&fx);
            assert!(sol.membership_residual().unwrap() < 1e-8, "{}", fx.name);
            assert!(sol.orthogonality_residual(6).unwrap() < 1e-8, "{}", fx.name);
        }
    }

    #[test]
    fn characteristic_parts_and_general_mse() {
        let fx = fixtures::matrix_fixture();
        let sol = solve(&fx);
        for l in [-2.9, -0.7, 0.0, 0.3, 1.9] {
            let ch = sol.characteristic(l).unwrap();
            assert!((&ch.h - (&ch.h1 - &ch.h2)).norm() < 1e-12);
            let direct = sol.h_over_chi(l).unwrap() * chi(l, 1, 1);
            assert!((&ch.h - direct).norm() < 1e-9 * (1.0 + ch.h.norm()));
        }
        let general = mse_of_characteristic(&fx.pair, &sol.coeffs, |l| Ok(sol.characteristic(l)?.h), &sol.problem.quad).unwrap();
        assert!((general - sol.mse).abs() < 1e-7 * sol.mse);
    }

    #[test]
    fn characteristic_rejects_gain_zeros() {
        let sol = solve(&fixtures::compensated_mu3());
        assert!(matches!(sol.characteristic(2.0 * PI / 3.0), Err(Error::Pole(_))));
        assert!(sol.h_over_chi(2.0 * PI / 3.0).is_ok());
    }

    #[test]
    fn divergent_pair_is_rejected() {
        let spec = IncrementSpec::new(1, 2, 1, 0).unwrap();
        let pair = DensityPair::new(SpectralDensity::identity(1), SpectralDensity::zero(1), 1, 2).unwrap();
        let p = EstimationProblem::new(spec, vec![CVec::from_element(1, c(1.0))], pair).unwrap();
        assert!(matches!(p.solve(), Err(Error::Divergent { .. })));
    }

    #[test]
    fn filter_weights_vanish_inside_and_decay() {
        let sol = solve(&fixtures::scalar_toy());
        let fw = sol.filter_auto(64, 1e-8, 1024).unwrap();
        assert!(fw.inside.iter().all(|w| w.norm() < 1e-9));
        assert!(fw.tail_norm(fw.radius() / 2) < 1e-6);
        let (lo, hi) = fw.window();
        assert_eq!(lo, -(fw.radius() as i64) - 1);
        assert_eq!(hi, 3 + fw.radius() as i64);
    }

    #[test]
    fn filter_never_reads_the_unobserved_block() {
        let fx = fixtures::matrix_fixture();
        let sol = solve(&fx);
        let fw = sol.filter(16).unwrap();
        let (lo, hi) = fw.window();
        let mk = |fill: f64| {
            let vals: Vec<CVec> = (lo..=hi)
                .map(|t| {
                    if (0..=fx.spec.horizon as i64).contains(&t) {
                        CVec::from_element(2, c(fill))
                    } else {
                        CVec::from_vec(vec![c((t as f64 * 0.37).sin()), c((t as f64 * 0.11).cos())])
                    }
                })
                .collect();
            Series::new(lo, vals)
        };
        let x = fw.apply(&mk(0.0)).unwrap();
        let y = fw.apply(&mk(1e6)).unwrap();
        assert_eq!(x, y);
        let short = Series::new(lo + 1, mk(0.0).values[1..].to_vec());
        assert!(matches!(fw.apply(&short), Err(Error::InsufficientWindow { .. })));
    }
}
