//! Spectral densities, the combined density `p(λ) = f(λ) + λ^{2n} g(λ)`, the
//! minimality check and the Fourier-coefficient block matrices `P`, `T`, `Q`.

pub mod density;
pub mod quadrature;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use density::{difference_factor, gain_zeros, increment_gain, GridDensity, GridInterp, MatrixData, SpectralDensity};
pub use quadrature::{CompositeRule, Hint, QuadResult, Quadrature};

use crate::error::{Error, Result};
use crate::increments::IncrementSpec;
use crate::linalg::{c, hermitian_inverse, hermitian_part, transpose_blocks};
use crate::{CMat, Complex64};

/// Signal density `f` (of the increment representation) and noise density
/// `g`, together with the increment order and step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPair {
    pub f: SpectralDensity,
    pub g: SpectralDensity,
    pub n: usize,
    pub mu: usize,
}

/// Everything the estimator needs from the densities at one frequency.
#[derive(Debug, Clone)]
pub struct PairPoint {
    pub lambda: f64,
    pub f: CMat,
    pub g: CMat,
    pub p: CMat,
    pub p_inv: CMat,
    /// `λ^{2n}`.
    pub lam2n: f64,
    /// `|1 - e^{iλμ}|^{2n} / λ^{2n}`.
    pub gain: f64,
}

impl DensityPair {
    pub fn new(f: SpectralDensity, g: SpectralDensity, n: usize, mu: usize) -> Result<Self> {
        f.validate()?;
        g.validate()?;
        if f.dim() != g.dim() {
            return Err(Error::Shape(format!("f has dimension {} but g has {}", f.dim(), g.dim())));
        }
        if n < 1 {
            return Err(Error::InvalidOrder(n));
        }
        if mu < 1 {
            return Err(Error::InvalidParameter("mu must be >= 1".into()));
        }
        Ok(Self { f, g, n, mu })
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    /// `(f(λ), g(λ), p(λ))`.
    pub fn eval(&self, lambda: f64) -> Result<(CMat, CMat, CMat)> {
        let f = self.f.eval(lambda)?;
        let g = self.g.eval(lambda)?;
        let p = &f + &g * c(lambda.powi(2 * self.n as i32));
        Ok((f, g, hermitian_part(&p)))
    }

    pub fn point(&self, lambda: f64) -> Result<PairPoint> {
        let f = self.f.eval_unchecked(lambda);
        let g = self.g.eval_unchecked(lambda);
        let lam2n = lambda.powi(2 * self.n as i32);
        let p = hermitian_part(&(&f + &g * c(lam2n)));
        let p_inv = hermitian_inverse(&p).ok_or(Error::SingularDensity { lambda })?;
        Ok(PairPoint { lambda, f, g, p, p_inv, lam2n, gain: increment_gain(lambda, self.n, self.mu) })
    }

    /// Panel boundaries for integrals involving this pair: zero, the zeros of
    /// the increment gain (marked singular), and the densities' own hints.
    pub fn hints(&self) -> Vec<Hint> {
        let mut h = vec![Hint::regular(0.0)];
        h.extend(gain_zeros(self.mu).into_iter().map(Hint::singular));
        h.extend(self.f.hints().into_iter().map(Hint::regular));
        h.extend(self.g.hints().into_iter().map(Hint::regular));
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Finite,
    SuspectDivergent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimalityReport {
    /// Estimate of `∫ Tr[λ^{2n} |1-e^{iλμ}|^{-2n} p(λ)^{-1}] dλ`; for a
    /// suspect-divergent integrand this is the value with the smallest excision.
    pub value: f64,
    pub verdict: Verdict,
    /// `(ε, integral with ε-neighbourhoods of the gain zeros removed)`.
    pub excisions: Vec<(f64, f64)>,
}

/// Successive excision increments growing by more than this ratio flag a
/// non-integrable singularity.
pub const DIVERGENCE_GROWTH_RATIO: f64 = 0.5;

fn excised_segments(points: &[f64], eps: f64) -> Vec<(f64, f64)> {
    let mut segs = vec![(-PI, PI)];
    for &s in points {
        let mut next = Vec::new();
        for (a, b) in segs {
            let (lo, hi) = (s - eps, s + eps);
            if hi <= a || lo >= b {
                next.push((a, b));
                continue;
            }
            if lo > a {
                next.push((a, lo));
            }
            if hi < b {
                next.push((hi, b));
            }
        }
        segs = next;
    }
    segs
}

fn trace_re(m: &CMat) -> f64 {
    m.trace().re
}

/// Minimality integral with a divergence verdict based on shrinking
/// excision neighbourhoods around the zeros of the increment gain.
pub fn minimality_integral(pair: &DensityPair, quad: &Quadrature) -> Result<MinimalityReport> {
    let integrand = |l: f64| -> Vec<Complex64> {
        match pair.point(l) {
            Ok(pt) => vec![c(trace_re(&pt.p_inv) / pt.gain)],
            Err(_) => vec![c(f64::NAN)],
        }
    };
    let poles = gain_zeros(pair.mu);
    let hints = pair.hints();
    let check = |v: f64, at: f64| if v.is_finite() { Ok(v) } else { Err(Error::SingularDensity { lambda: at }) };

    if poles.is_empty() {
        let v = quad.integrate_circle(&integrand, &hints)?.value[0].re;
        return Ok(MinimalityReport { value: check(v, 0.0)?, verdict: Verdict::Finite, excisions: Vec::new() });
    }

    let mut excisions = Vec::new();
    for eps in [1e-2, 1e-3, 1e-4, 1e-5] {
        let mut total = 0.0;
        for (a, b) in excised_segments(&poles, eps) {
            let r = quad.integrate(&integrand, a, b, &hints);
            let v = match r {
                Ok(r) => r.value[0].re,
                Err(Error::Convergence { last, .. }) => last,
                Err(e) => return Err(e),
            };
            total += check(v, a)?;
        }
        excisions.push((eps, total));
    }
    let inc: Vec<f64> = excisions.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let scale = excisions.last().map_or(1.0, |e| e.1.abs()).max(1e-300);
    let last = inc[inc.len() - 1];
    let prev = inc[inc.len() - 2];
    let growing = last > DIVERGENCE_GROWTH_RATIO * prev && last > 1e-9 * scale;
    if growing {
        return Ok(MinimalityReport { value: excisions.last().unwrap().1, verdict: Verdict::SuspectDivergent, excisions });
    }
    match quad.integrate_circle(&integrand, &hints) {
        Ok(r) => Ok(MinimalityReport { value: check(r.value[0].re, 0.0)?, verdict: Verdict::Finite, excisions }),
        Err(Error::Convergence { .. }) => Ok(MinimalityReport {
            value: excisions.last().unwrap().1,
            verdict: Verdict::SuspectDivergent,
            excisions,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// `λ^{2n} g p^{-1} / |1 - e^{iλμ}|^{2n}`.
    T,
    /// `λ^{2n} p^{-1} / |1 - e^{iλμ}|^{2n}`.
    P,
    /// `f p^{-1} g`.
    Q,
}

impl BlockKind {
    pub fn integrand(self, pt: &PairPoint) -> CMat {
        match self {
            BlockKind::P => &pt.p_inv * c(1.0 / pt.gain),
            BlockKind::T => (&pt.g * &pt.p_inv) * c(1.0 / pt.gain),
            BlockKind::Q => hermitian_part(&(&pt.f * &pt.p_inv * &pt.g)),
        }
    }
}

/// `(1/2π) ∫ e^{iλ·lag} M(λ) dλ` for every lag in `lags`, with `M` the
/// matrix-valued `integrand`.
pub fn fourier_coefficients<F>(integrand: F, dim: usize, lags: &[i64], hints: &[Hint], quad: &Quadrature) -> Result<Vec<CMat>>
where
    F: Fn(f64) -> Result<CMat> + Sync,
{
    let block = dim * dim;
    let f = |l: f64| -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); lags.len() * block];
        let m = match integrand(l) {
            Ok(m) => m,
            Err(_) => return vec![c(f64::NAN); lags.len() * block],
        };
        for (i, &lag) in lags.iter().enumerate() {
            let e = Complex64::from_polar(1.0 / (2.0 * PI), lag as f64 * l);
            for (j, z) in m.iter().enumerate() {
                out[i * block + j] = z * e;
            }
        }
        out
    };
    let r = quad.integrate_circle(&f, hints)?;
    if r.value.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SingularDensity { lambda: f64::NAN });
    }
    Ok(lags
        .iter()
        .enumerate()
        .map(|(i, _)| CMat::from_column_slice(dim, dim, &r.value[i * block..(i + 1) * block]))
        .collect())
}

/// One Fourier-coefficient block of kind `kind` at `lag = j - k`.
pub fn fourier_block(kind: BlockKind, pair: &DensityPair, lag: i64, quad: &Quadrature) -> Result<CMat> {
    let v = fourier_coefficients(|l| Ok(kind.integrand(&pair.point(l)?)), pair.dim(), &[lag], &pair.hints(), quad)?;
    Ok(v.into_iter().next().unwrap())
}

/// Block-Toeplitz matrices of the linear system, stored with the literal block
/// layout: block `(k, j)` is the coefficient at lag `j - k`.
#[derive(Debug, Clone)]
pub struct BlockMatrices {
    pub period: usize,
    pub p: CMat,
    pub t: CMat,
    pub q: CMat,
    pub tol: f64,
}

/// `coefs[i]` is the coefficient at lag `i - (blocks - 1)`.
fn toeplitz_from_lags(coefs: &[CMat], blocks: usize, dim: usize) -> CMat {
    let mut out = CMat::zeros(blocks * dim, blocks * dim);
    for k in 0..blocks {
        for j in 0..blocks {
            let blk = &coefs[j + blocks - 1 - k];
            out.view_mut((k * dim, j * dim), (dim, dim)).copy_from(&blk);
        }
    }
    out
}

/// Lags `-max_lag..=max_lag`. Hermitian integrands get exactly Hermitian
/// conjugate-lag pairs; `T` has no such symmetry.
fn all_lags(kind: BlockKind, pair: &DensityPair, max_lag: usize, quad: &Quadrature) -> Result<Vec<CMat>> {
    let m = max_lag as i64;
    let lags: Vec<i64> = (-m..=m).collect();
    let mut v = fourier_coefficients(|l| Ok(kind.integrand(&pair.point(l)?)), pair.dim(), &lags, &pair.hints(), quad)?;
    if kind != BlockKind::T {
        for i in 0..max_lag {
            v[i] = v[2 * max_lag - i].adjoint();
        }
        v[max_lag] = hermitian_part(&v[max_lag]);
    }
    Ok(v)
}

impl BlockMatrices {
    /// Matrices in the orientation the solver uses: every `T×T` block
    /// transposed in place. The literal layout multiplies row vectors from the
    /// right; the solver works with column vectors.
    pub fn system_p(&self) -> CMat {
        transpose_blocks(&self.p, self.period)
    }
    pub fn system_t(&self) -> CMat {
        transpose_blocks(&self.t, self.period)
    }
    pub fn system_q(&self) -> CMat {
        transpose_blocks(&self.q, self.period)
    }
}

/// Assemble `P`, `T` (size `(N+μn+1)T`) and `Q` (size `(N+1)T`). Fails with a
/// divergence error when the minimality check is not finite.
pub fn assemble_matrices(pair: &DensityPair, spec: &IncrementSpec, quad: &Quadrature) -> Result<BlockMatrices> {
    check_spec_pair(pair, spec)?;
    let report = minimality_integral(pair, quad)?;
    if report.verdict != Verdict::Finite {
        return Err(Error::Divergent { near: gain_zeros(pair.mu).first().copied().unwrap_or(0.0) });
    }
    assemble_unchecked(pair, spec, quad)
}

/// Assembly without the minimality pre-check; used where the caller already
/// knows the densities qualify (e.g. inside the minimax search).
pub fn assemble_unchecked(pair: &DensityPair, spec: &IncrementSpec, quad: &Quadrature) -> Result<BlockMatrices> {
    check_spec_pair(pair, spec)?;
    let dim = spec.period;
    let len = spec.system_len();
    let p = toeplitz_from_lags(&all_lags(BlockKind::P, pair, len - 1, quad)?, len, dim);
    let t = toeplitz_from_lags(&all_lags(BlockKind::T, pair, len - 1, quad)?, len, dim);
    let q = toeplitz_from_lags(&all_lags(BlockKind::Q, pair, spec.horizon, quad)?, spec.horizon + 1, dim);
    Ok(BlockMatrices { period: dim, p, t, q, tol: quad.rel_tol })
}

pub(crate) fn check_spec_pair(pair: &DensityPair, spec: &IncrementSpec) -> Result<()> {
    if pair.n != spec.n || pair.mu != spec.mu || pair.dim() != spec.period {
        return Err(Error::Shape(format!(
            "density pair (n={}, mu={}, T={}) does not match increment spec (n={}, mu={}, T={})",
            pair.n,
            pair.mu,
            pair.dim(),
            spec.n,
            spec.mu,
            spec.period
        )));
    }
    Ok(())
}

/// Structural function `∫ e^{iλm} (1-e^{-iμ₁λ})^n (1-e^{iμ₂λ})^n λ^{-2n} f(λ) dλ`.
pub fn structural_function(f: &SpectralDensity, n: usize, m: i64, mu1: usize, mu2: usize, quad: &Quadrature) -> Result<CMat> {
    let v = structural_lags(f, n, &[m], mu1, mu2, quad)?;
    Ok(v.into_iter().next().unwrap())
}

/// Structural function at several lags.
pub fn structural_lags(f: &SpectralDensity, n: usize, lags: &[i64], mu1: usize, mu2: usize, quad: &Quadrature) -> Result<Vec<CMat>> {
    let mut hints = vec![Hint::regular(0.0)];
    hints.extend(f.hints().into_iter().map(Hint::singular));
    let integrand = |l: f64| -> Result<CMat> {
        let w = difference_factor(l, mu1).powu(n as u32) * difference_factor(l, mu2).conj().powu(n as u32);
        Ok(f.eval_unchecked(l) * (w * c(2.0 * PI)))
    };
    fourier_coefficients(integrand, f.dim(), lags, &hints, quad).map_err(|e| match e {
        Error::Convergence { .. } | Error::SingularDensity { .. } => Error::Divergent { near: f64::NAN },
        other => other,
    })
}

/// Covariance `R(m) = ∫ e^{iλm} g(λ) dλ` of a stationary sequence with density `g`.
pub fn covariance_lags(g: &SpectralDensity, lags: &[i64], quad: &Quadrature) -> Result<Vec<CMat>> {
    let hints: Vec<Hint> = g.hints().into_iter().map(Hint::regular).collect();
    let v = fourier_coefficients(|l| Ok(g.eval_unchecked(l)), g.dim(), lags, &hints, quad)?;
    Ok(v.into_iter().map(|m| m * c(2.0 * PI)).collect())
}
