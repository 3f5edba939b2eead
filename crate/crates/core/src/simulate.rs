//! Gaussian path synthesis, joint signal/noise paths with exact increment
//! structure, the finite-window projection oracle and Monte Carlo checks of
//! the error formula.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimateSolution, EstimationProblem, FilterWeights};
use crate::increments::{increment_weights, CoefficientSet, Series};
use crate::linalg::{c, hermitian_part, min_eigenvalue, psd_sqrt, SpdSolver};
use crate::spectra::{
    covariance_lags, increment_gain, structural_lags, CompositeRule, DensityPair, Quadrature, SpectralDensity,
};
use crate::{CMat, CVec, Complex64};

/// Default number of frequencies in the synthesis grid.
pub const DEFAULT_GRID: usize = 1 << 14;
/// Ridge added to a singular oracle covariance, relative to its mean diagonal.
pub const ORACLE_RIDGE: f64 = 1e-10;

/// Precomputed square-root factors of a density on the midpoint grid
/// `λ_j = -π + 2π(j + ½)/M`, which avoids `0`, `±π` and the zeros of the
/// increment gain.
pub struct SynthesisPlan {
    dim: usize,
    grid: usize,
    factors: Vec<CMat>,
    real: bool,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SynthesisPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SynthesisPlan").field("dim", &self.dim).field("grid", &self.grid).field("real", &self.real).finish()
    }
}

fn midpoint(j: usize, grid: usize) -> f64 {
    -PI + 2.0 * PI * (j as f64 + 0.5) / grid as f64
}

impl SynthesisPlan {
    /// Plan for a path with covariance `R(m) = ∫ e^{iλm} S(λ) dλ`, where
    /// `density(λ) = S(λ)`. Paths are real when `S(-λ) = conj S(λ)` on the
    /// grid, complex circular otherwise.
    pub fn new<F>(dim: usize, grid: usize, density: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<CMat> + Sync,
    {
        if grid < 2 || grid % 2 != 0 {
            return Err(Error::InvalidParameter(format!("synthesis grid must be even and >= 2, got {grid}")));
        }
        let values: Vec<CMat> = (0..grid).into_par_iter().map(|j| density(midpoint(j, grid))).collect::<Result<_>>()?;
        let mut real = true;
        for (j, s) in values.iter().enumerate() {
            let lambda = midpoint(j, grid);
            let min_eig = min_eigenvalue(s);
            if min_eig < -1e-10 * (1.0 + s.norm()) {
                return Err(Error::NotPsd { lambda, min_eig });
            }
            // The grid is symmetric: λ_{M-1-j} = -λ_j.
            if (s.conjugate() - &values[grid - 1 - j]).norm() > 1e-12 * (1.0 + s.norm()) {
                real = false;
            }
        }
        let scale = c(2.0 * PI / grid as f64);
        let factors = values.iter().map(|s| psd_sqrt(&(hermitian_part(s) * scale))).collect();
        let fft = FftPlanner::new().plan_fft_inverse(grid);
        Ok(Self { dim, grid, factors, real, fft })
    }

    pub fn for_density(density: &SpectralDensity, grid: usize) -> Result<Self> {
        Self::new(density.dim(), grid, |l| density.eval(l))
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    /// One path of `len` consecutive values.
    pub fn sample(&self, len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<CVec>> {
        if len < 1 || len > self.grid {
            return Err(Error::InvalidParameter(format!("path length {len} must be in 1..={}", self.grid)));
        }
        let half = std::f64::consts::FRAC_1_SQRT_2;
        let mut cols = vec![vec![Complex64::default(); self.grid]; self.dim];
        for (j, a) in self.factors.iter().enumerate() {
            let eps = CVec::from_fn(self.dim, |_, _| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re * half, im * half)
            });
            let y = a * eps;
            for (p, col) in cols.iter_mut().enumerate() {
                col[j] = y[p];
            }
        }
        for col in cols.iter_mut() {
            self.fft.process(col);
        }
        let theta = -PI + PI / self.grid as f64;
        Ok((0..len)
            .map(|t| {
                let phase = Complex64::from_polar(1.0, theta * t as f64);
                CVec::from_fn(self.dim, |p, _| {
                    let z = cols[p][t] * phase;
                    if self.real {
                        c(std::f64::consts::SQRT_2 * z.re)
                    } else {
                        z
                    }
                })
            })
            .collect())
    }
}

/// RNG for `(seed, stream)`; every trial and every component gets its own
/// stream so results do not depend on scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stationary Gaussian path of `length` values with covariance
/// `∫ e^{iλm} g(λ) dλ`.
pub fn synthesize_stationary(density: &SpectralDensity, length: usize, seed: u64) -> Result<Vec<CVec>> {
    SynthesisPlan::for_density(density, DEFAULT_GRID)?.sample(length, &mut stream_rng(seed, 0))
}

/// Density of the signal increments `ζ^{(n)}(k, μ)`: `gain · f`.
pub fn signal_increment_density(pair: &DensityPair, lambda: f64) -> Result<CMat> {
    Ok(pair.f.eval(lambda)? * c(increment_gain(lambda, pair.n, pair.mu)))
}

/// Density of the observed increments: `gain · (f + λ^{2n} g)`.
pub fn observed_increment_density(pair: &DensityPair, lambda: f64) -> Result<CMat> {
    let (_, _, p) = pair.eval(lambda)?;
    Ok(p * c(increment_gain(lambda, pair.n, pair.mu)))
}

/// Joint signal/noise paths on `start..=start + len - 1`.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub xi: Series,
    pub eta: Series,
    pub zeta: Series,
    /// Simulated `ξ^{(n)}(k, μ)`, starting `μn` steps after `xi`.
    pub increments: Series,
    pub seed: u64,
    pub trial: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Zero,
    Random,
}

/// Synthesis plans for the signal increments and the noise of one pair.
#[derive(Debug)]
pub struct PairSynthesizer {
    pub n: usize,
    pub mu: usize,
    signal: SynthesisPlan,
    noise: SynthesisPlan,
}

impl PairSynthesizer {
    pub fn new(pair: &DensityPair, grid: usize) -> Result<Self> {
        let signal = SynthesisPlan::new(pair.dim(), grid, |l| signal_increment_density(pair, l)).map_err(|e| match e {
            Error::SingularDensity { lambda } => Error::Divergent { near: lambda },
            other => other,
        })?;
        let noise = SynthesisPlan::for_density(&pair.g, grid)?;
        Ok(Self { n: pair.n, mu: pair.mu, signal, noise })
    }

    pub fn is_real(&self) -> bool {
        self.signal.is_real() && self.noise.is_real()
    }

    /// Paths on `start..=end`. `ξ` is rebuilt from the simulated increments by
    /// `n`-fold `μ`-step summation from its first `μn` values.
    pub fn sample(&self, start: i64, end: i64, anchor: Anchor, seed: u64, trial: u64) -> Result<PathBundle> {
        let len = (end - start + 1) as usize;
        let lag = self.n * self.mu;
        if len <= lag {
            return Err(Error::InsufficientWindow { needed: lag + 1, got: len });
        }
        let mut rng_xi = stream_rng(seed, 3 * trial);
        let mut rng_eta = stream_rng(seed, 3 * trial + 1);
        let mut rng_anchor = stream_rng(seed, 3 * trial + 2);
        let inc = self.signal.sample(len - lag, &mut rng_xi)?;
        let eta = self.noise.sample(len, &mut rng_eta)?;
        let w = increment_weights(self.n)?;
        let dim = self.signal.dim;
        let mut xi: Vec<CVec> = Vec::with_capacity(len);
        for _ in 0..lag {
            xi.push(match anchor {
                Anchor::Zero => CVec::zeros(dim),
                Anchor::Random => CVec::from_fn(dim, |_, _| {
                    let x: f64 = StandardNormal.sample(&mut rng_anchor);
                    c(10.0 * x)
                }),
            });
        }
        for (i, d) in inc.iter().enumerate() {
            let t = lag + i;
            let mut v = d.clone();
            for (l, &wl) in w.iter().enumerate().skip(1) {
                v -= &xi[t - l * self.mu] * c(wl);
            }
            xi.push(v);
        }
        let zeta: Vec<CVec> = xi.iter().zip(&eta).map(|(x, e)| x + e).collect();
        Ok(PathBundle {
            xi: Series::new(start, xi),
            eta: Series::new(start, eta),
            zeta: Series::new(start, zeta),
            increments: Series::new(start + lag as i64, inc),
            seed,
            trial,
        })
    }
}

/// Paths on the window `[-L, N + L]` for a single seed.
pub fn synthesize_pair(pair: &DensityPair, horizon: usize, window: usize, seed: u64) -> Result<PathBundle> {
    PairSynthesizer::new(pair, DEFAULT_GRID)?.sample(-(window as i64), (horizon + window) as i64, Anchor::Zero, seed, 0)
}

/// `xᵀ R conj(y)`.
fn bilinear(x: &CVec, r: &CMat, y: &CVec) -> Complex64 {
    (x.transpose() * r * y.conjugate())[(0, 0)]
}

/// Covariances of the observed increments and the noise at every lag the
/// oracle needs.
struct OracleCovariances {
    max_lag: i64,
    /// `E ζ^{(n)}(k) ζ^{(n)}(k')^*` at lag `k - k'`.
    inc: Vec<CMat>,
    noise_max: i64,
    /// `E η(j) η(j')^*` at lag `j - j'`.
    noise: Vec<CMat>,
    weights: Vec<f64>,
    mu: i64,
}

impl OracleCovariances {
    fn new(pair: &DensityPair, max_lag: i64, quad: &Quadrature) -> Result<Self> {
        let mu = pair.mu as i64;
        let w = increment_weights(pair.n)?;
        let span = mu * pair.n as i64;
        let noise_max = max_lag + span;
        let lags: Vec<i64> = (-max_lag..=max_lag).collect();
        let sig = structural_lags(&pair.f, pair.n, &lags, pair.mu, pair.mu, quad)?;
        let nlags: Vec<i64> = (-noise_max..=noise_max).collect();
        let noise = covariance_lags(&pair.g, &nlags, quad)?;
        let mut me = Self { max_lag, inc: Vec::new(), noise_max, noise, weights: w, mu };
        me.inc = lags
            .iter()
            .zip(sig)
            .map(|(&m, s)| {
                let mut acc = s;
                for (l, &wl) in me.weights.iter().enumerate() {
                    for (lp, &wlp) in me.weights.iter().enumerate() {
                        acc += me.noise_at(m - l as i64 * mu + lp as i64 * mu) * c(wl * wlp);
                    }
                }
                acc
            })
            .collect();
        Ok(me)
    }

    fn noise_at(&self, m: i64) -> &CMat {
        &self.noise[(m + self.noise_max) as usize]
    }

    fn inc_at(&self, m: i64) -> &CMat {
        &self.inc[(m + self.max_lag) as usize]
    }

    /// `E η^{(n)}(k) η(j)^*` at lag `k - j`.
    fn inc_noise_at(&self, m: i64) -> CMat {
        let mut acc = CMat::zeros(self.noise[0].nrows(), self.noise[0].ncols());
        for (l, &wl) in self.weights.iter().enumerate() {
            acc += self.noise_at(m - l as i64 * self.mu) * c(wl);
        }
        acc
    }
}

/// Result of the finite-window projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleResult {
    pub window: usize,
    pub mse: f64,
    /// Projection weights on `ζ^{(n)}(k)`, paired with `k`.
    #[serde(skip)]
    pub weights: Vec<(i64, CVec)>,
    pub ridge: f64,
}

/// Best linear estimate of `A_N ξ` from the increments
/// `ζ^{(n)}(k, μ)`, `k ∈ [-L,-1] ∪ [N+μn+1, N+μn+L]`, together with the raw
/// values `ζ(k)`, `k ∈ [-μn, -1]`. The raw values carry the fixed weights
/// `-v(k)`: their second moments are not defined for a non-stationary `ξ`, and
/// `A_N ξ + Σ v(k)ᵀ ζ(k) = Σ b(k)ᵀ ζ^{(n)}(k) - A_N η` depends on stationary
/// quantities only. That target is projected onto the increments with
/// covariances from quadrature.
pub fn finite_window_oracle(problem: &EstimationProblem, window: usize) -> Result<OracleResult> {
    let coeffs = &problem.coeffs;
    let s = coeffs.spec;
    let dim = s.period;
    let first_future = s.system_len() as i64;
    let l = window as i64;
    let max_lag = first_future - 1 + 2 * l;
    let cov = OracleCovariances::new(&problem.pair, max_lag, &problem.quad)?;
    oracle_with(coeffs, &cov, window, dim, first_future)
}

fn oracle_with(coeffs: &CoefficientSet, cov: &OracleCovariances, window: usize, dim: usize, first_future: i64) -> Result<OracleResult> {
    let l = window as i64;
    let ks: Vec<i64> = (-l..=-1).chain(first_future..first_future + l).collect();
    let size = ks.len() * dim;

    let mut gamma_mat = CMat::zeros(size, size);
    for (i, &k) in ks.iter().enumerate() {
        for (j, &kp) in ks.iter().enumerate() {
            gamma_mat.view_mut((i * dim, j * dim), (dim, dim)).copy_from(cov.inc_at(k - kp));
        }
    }
    let gamma_mat = hermitian_part(&gamma_mat);

    // γ_m = E[Y_m conj(H)], H = Σ b(k)ᵀ ζ^{(n)}(k) - Σ a(j)ᵀ η(j).
    let mut gamma = CVec::zeros(size);
    for (i, &m) in ks.iter().enumerate() {
        let mut acc = CVec::zeros(dim);
        for (k, bk) in coeffs.b.iter().enumerate() {
            acc += cov.inc_at(m - k as i64) * bk.conjugate();
        }
        for (j, aj) in coeffs.a.iter().enumerate() {
            acc -= cov.inc_noise_at(m - j as i64) * aj.conjugate();
        }
        gamma.rows_mut(i * dim, dim).copy_from(&acc);
    }

    let mut target = Complex64::default();
    for (k, bk) in coeffs.b.iter().enumerate() {
        for (kp, bkp) in coeffs.b.iter().enumerate() {
            target += bilinear(bk, cov.inc_at(k as i64 - kp as i64), bkp);
        }
    }
    for (k, bk) in coeffs.b.iter().enumerate() {
        for (j, aj) in coeffs.a.iter().enumerate() {
            target -= bilinear(bk, &cov.inc_noise_at(k as i64 - j as i64), aj) * 2.0;
        }
    }
    // 2·Re of the cross term is what enters; only the real part of `target`
    // is used below.
    for (j, aj) in coeffs.a.iter().enumerate() {
        for (jp, ajp) in coeffs.a.iter().enumerate() {
            target += bilinear(aj, cov.noise_at(j as i64 - jp as i64), ajp);
        }
    }

    let (x, ridge) = match SpdSolver::new(&gamma_mat) {
        Ok(solver) => (solver.solve(&gamma), 0.0),
        Err(_) => {
            let ridge = ORACLE_RIDGE * gamma_mat.trace().re / size as f64;
            let solver = SpdSolver::new(&(&gamma_mat + CMat::identity(size, size) * c(ridge)))?;
            (solver.solve(&gamma), ridge)
        }
    };
    let explained = gamma.dotc(&x).re;
    let weights = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, x.rows(i * dim, dim).conjugate()))
        .collect();
    Ok(OracleResult { window, mse: target.re - explained, weights, ridge })
}

/// Oracle at several windows, sharing one set of covariances.
pub fn oracle_sequence(problem: &EstimationProblem, windows: &[usize]) -> Result<Vec<OracleResult>> {
    let coeffs = &problem.coeffs;
    let s = coeffs.spec;
    let first_future = s.system_len() as i64;
    let widest = windows.iter().copied().max().unwrap_or(0) as i64;
    let cov = OracleCovariances::new(&problem.pair, first_future - 1 + 2 * widest, &problem.quad)?;
    windows.iter().map(|&w| oracle_with(coeffs, &cov, w, s.period, first_future)).collect()
}

/// `E|Σ_{tail} s(k)ᵀ ζ^{(n)}(k)|²` for the filter weights beyond `radius`,
/// evaluated in the frequency domain against the observed increment density.
pub fn truncation_budget(solution: &EstimateSolution, radius: usize) -> Result<f64> {
    let wide = solution.filter(4 * radius.max(16))?;
    let first_future = solution.spec().system_len() as i64;
    let tail: Vec<(i64, CVec)> = wide
        .past
        .iter()
        .enumerate()
        .skip(radius)
        .map(|(i, w)| (-(i as i64) - 1, w.clone()))
        .chain(wide.future.iter().enumerate().skip(radius).map(|(i, w)| (first_future + i as i64, w.clone())))
        .collect();
    if tail.is_empty() {
        return Ok(0.0);
    }
    let pair = solution.pair();
    let max_lag = tail.iter().map(|(k, _)| k.abs()).max().unwrap_or(0) as usize;
    let hints: Vec<f64> = pair.hints().iter().map(|h| h.at).collect();
    let rule = CompositeRule::new(256.max(2 * max_lag), 16, &hints);
    let parts: Vec<f64> = rule
        .nodes
        .par_iter()
        .zip(rule.weights.par_iter())
        .map(|(&l, &w)| -> Result<f64> {
            let mut t = CVec::zeros(pair.dim());
            for (k, s) in &tail {
                t += s * Complex64::from_polar(1.0, *k as f64 * l);
            }
            let d = observed_increment_density(pair, l)?;
            Ok(w * (t.transpose() * d * t.conjugate())[(0, 0)].re)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

/// Monte Carlo estimate of the mean-square error of the filtered estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub window: usize,
    pub radius: usize,
    pub truncation_budget: f64,
    /// Mean-square error predicted by the bracket form.
    pub delta: f64,
    pub seed: u64,
    pub anchor: Anchor,
    pub real_paths: bool,
}

impl MonteCarloReport {
    /// `|mean - Δ| ≤ 3·stderr + truncation budget`.
    pub fn consistent(&self) -> bool {
        (self.mean - self.delta).abs() <= 3.0 * self.stderr + self.truncation_budget
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MonteCarloConfig {
    pub trials: usize,
    pub window: usize,
    pub seed: u64,
    pub grid: usize,
    pub anchor: Anchor,
}

impl MonteCarloConfig {
    pub fn new(trials: usize, window: usize, seed: u64) -> Self {
        Self { trials, window, seed, grid: DEFAULT_GRID, anchor: Anchor::Zero }
    }
}

/// Mean of `|A_N ξ - Â|²` over independent paths on `[-L, N + L]`. The filter
/// uses every increment available in the window (radius `L - μn`); the tail
/// beyond it is reported as the truncation budget.
pub fn monte_carlo_mse(solution: &EstimateSolution, cfg: &MonteCarloConfig) -> Result<MonteCarloReport> {
    let s = *solution.spec();
    if cfg.trials < 100 {
        return Err(Error::InvalidParameter(format!("at least 100 trials required, got {}", cfg.trials)));
    }
    let lag = s.lag_span();
    if cfg.window <= lag {
        return Err(Error::InsufficientWindow { needed: lag + 1, got: cfg.window });
    }
    let radius = cfg.window - lag;
    let filter = solution.filter(radius)?;
    monte_carlo_with_filter(solution, &filter, cfg)
}

/// [`monte_carlo_mse`] with a caller-supplied filter, which must fit the window.
pub fn monte_carlo_with_filter(solution: &EstimateSolution, filter: &FilterWeights, cfg: &MonteCarloConfig) -> Result<MonteCarloReport> {
    let s = *solution.spec();
    let (start, end) = (-(cfg.window as i64), (s.horizon + cfg.window) as i64);
    let (lo, hi) = filter.window();
    if lo < start || hi > end {
        return Err(Error::InsufficientWindow { needed: (hi - lo + 1) as usize, got: (end - start + 1) as usize });
    }
    let synth = PairSynthesizer::new(solution.pair(), cfg.grid)?;
    let a = &solution.coeffs.a;
    let errors: Vec<f64> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| -> Result<f64> {
            let paths = synth.sample(start, end, cfg.anchor, cfg.seed, trial)?;
            let mut target = Complex64::default();
            for (k, ak) in a.iter().enumerate() {
                target += ak.dot(paths.xi.get(k as i64).expect("window covers 0..=N"));
            }
            let est = filter.apply(&paths.zeta)?;
            Ok((target - est).norm_sqr())
        })
        .collect::<Result<_>>()?;
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MonteCarloReport {
        mean,
        stderr: (var / n).sqrt(),
        trials: cfg.trials,
        window: cfg.window,
        radius: filter.radius(),
        truncation_budget: truncation_budget(solution, filter.radius())?,
        delta: solution.mse,
        seed: cfg.seed,
        anchor: cfg.anchor,
        real_paths: synth.is_real(),
    })
}

/// Sample autocovariance `(1/len) Σ x(t+m) x(t)^*` of one path.
pub fn sample_autocovariance(path: &[CVec], lag: usize) -> CMat {
    let dim = path[0].len();
    let mut acc = CMat::zeros(dim, dim);
    for t in 0..path.len() - lag {
        acc += &path[t + lag] * path[t].adjoint();
    }
    acc / c((path.len() - lag) as f64)
}
