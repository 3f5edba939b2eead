//! Increment combinatorics and the coefficient transforms that turn the
//! weights `a` of the functional into the increment weights `b`, the
//! initial-value weights `v` and the differenced weights `a_μ`.
//!
//! Coefficient arrays are `Vec<CVec>`: one `T`-vector per time index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CVec, Complex64};

/// The integers `(n, μ, T, N)`: increment order, increment step, period
/// (vector dimension) and estimation horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncrementSpec {
    pub n: usize,
    pub mu: usize,
    pub period: usize,
    pub horizon: usize,
}

impl IncrementSpec {
    pub fn new(n: usize, mu: usize, period: usize, horizon: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidOrder(n));
        }
        if mu < 1 {
            return Err(Error::InvalidParameter(format!("increment step mu = {mu}, must be >= 1")));
        }
        if period < 1 {
            return Err(Error::InvalidParameter(format!("period T = {period}, must be >= 1")));
        }
        Ok(Self { n, mu, period, horizon })
    }

    /// `μ·n`, the number of leading initial values the decomposition needs.
    pub fn lag_span(&self) -> usize {
        self.mu * self.n
    }

    /// Number of vector unknowns `N + μn + 1`.
    pub fn system_len(&self) -> usize {
        self.horizon + self.lag_span() + 1
    }

    /// Scalar size of the linear system, `(N + μn + 1)·T`.
    pub fn system_size(&self) -> usize {
        self.system_len() * self.period
    }
}

/// Finite vector series on the explicit index window `start ..= start + len - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub start: i64,
    pub values: Vec<CVec>,
}

impl Series {
    pub fn new(start: i64, values: Vec<CVec>) -> Self {
        Self { start, values }
    }

    pub fn from_scalars(start: i64, values: &[Complex64]) -> Self {
        Self {
            start,
            values: values.iter().map(|&x| CVec::from_element(1, x)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Last index of the window (inclusive).
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn get(&self, m: i64) -> Option<&CVec> {
        if m < self.start {
            return None;
        }
        self.values.get((m - self.start) as usize)
    }
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Signed binomial weights `(-1)^l C(n, l)`, `l = 0..=n`.
pub fn increment_weights(n: usize) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(Error::InvalidOrder(n));
    }
    Ok((0..=n)
        .map(|l| if l % 2 == 0 { binomial(n, l) } else { -binomial(n, l) })
        .collect())
}

/// `Σ_l (-1)^l C(n,l) x(m - l·step)` for a signed step, or `None` when the
/// window does not cover all the taps.
pub fn increment_value(x: &Series, m: i64, n: usize, step: i64) -> Option<CVec> {
    let mut acc = CVec::zeros(x.dim());
    for (l, w) in increment_weights(n).ok()?.into_iter().enumerate() {
        let v = x.get(m - l as i64 * step)?;
        acc.axpy(Complex64::new(w, 0.0), v, Complex64::new(1.0, 0.0));
    }
    Some(acc)
}

/// `n`-th increment with step `μ` on the valid sub-window. The output window
/// starts `n·μ` indices later than the input.
pub fn apply_increment(x: &Series, n: usize, mu: usize) -> Result<Series> {
    if n < 1 {
        return Err(Error::InvalidOrder(n));
    }
    let span = n * mu;
    if x.len() <= span {
        return Err(Error::InsufficientWindow { needed: span, got: x.len() });
    }
    let start = x.start + span as i64;
    let values = (start..=x.end())
        .map(|m| increment_value(x, m, n, mu as i64).expect("window checked"))
        .collect();
    Ok(Series::new(start, values))
}

/// Coefficients `A_l` of `(1 + x + … + x^{k-1})^n`, relating increments with
/// step `k·μ` to increments with step `μ`.
pub fn multi_step_weights(n: usize, k: usize) -> Vec<f64> {
    let base = vec![1.0; k.max(1)];
    let mut acc = vec![1.0];
    for _ in 0..n {
        acc = poly_mul(&acc, &base);
    }
    acc
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &a) in p.iter().enumerate() {
        for (j, &b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// `d_μ(k)`, `k = 0..=max_index`: coefficients of `(Σ_j x^{μj})^n`.
pub fn d_coefficients(n: usize, mu: usize, max_index: usize) -> Vec<f64> {
    (0..=max_index)
        .map(|k| {
            if k % mu == 0 {
                binomial(k / mu + n - 1, n - 1)
            } else {
                0.0
            }
        })
        .collect()
}

fn check_dims(a: &[CVec]) -> Result<usize> {
    let t = a.first().map(|v| v.len()).ok_or_else(|| Error::Shape("empty weight array".into()))?;
    if a.iter().any(|v| v.len() != t) {
        return Err(Error::Shape("weight vectors have differing dimensions".into()));
    }
    Ok(t)
}

/// `b(k) = Σ_{m=k}^{N} a(m) d_μ(m-k)`, the upper-triangular `D^μ_N` applied
/// per coordinate.
pub fn b_from_a(a: &[CVec], n: usize, mu: usize) -> Result<Vec<CVec>> {
    let t = check_dims(a)?;
    let horizon = a.len() - 1;
    let d = d_coefficients(n, mu, horizon);
    Ok((0..=horizon)
        .map(|k| {
            let mut acc = CVec::zeros(t);
            for m in k..=horizon {
                if d[m - k] != 0.0 {
                    acc += &a[m] * Complex64::new(d[m - k], 0.0);
                }
            }
            acc
        })
        .collect())
}

/// Initial-value weights `v(k)` for `k = -1, -2, …, -μn`; element `i` of the
/// result holds `v(-(i+1))`.
pub fn v_from_b(b: &[CVec], n: usize, mu: usize) -> Result<Vec<CVec>> {
    let t = check_dims(b)?;
    let horizon = b.len() as i64 - 1;
    let mu_i = mu as i64;
    let weights = increment_weights(n)?;
    Ok((1..=(mu * n) as i64)
        .map(|neg| {
            let k = -neg;
            let lo = (-k + mu_i - 1).div_euclid(mu_i); // ceil(-k/μ)
            let hi = (horizon - k).div_euclid(mu_i).min(n as i64);
            let mut acc = CVec::zeros(t);
            for l in lo..=hi {
                let idx = (l * mu_i + k) as usize;
                acc += &b[idx] * Complex64::new(weights[l as usize], 0.0);
            }
            acc
        })
        .collect())
}

/// `a_μ(m)`, `m = 0..=N+μn`: coefficients of `(1 - x^μ)^n Σ_k a(k) x^k`.
pub fn a_mu_from_a(a: &[CVec], n: usize, mu: usize) -> Result<Vec<CVec>> {
    let t = check_dims(a)?;
    let weights = increment_weights(n)?;
    let len = a.len() + mu * n;
    let mut out = vec![CVec::zeros(t); len];
    for (l, &w) in weights.iter().enumerate() {
        for (k, ak) in a.iter().enumerate() {
            out[k + l * mu] += ak * Complex64::new(w, 0.0);
        }
    }
    Ok(out)
}

/// Vector sequence `ξ_p(m) = θ(mT + p - 1)`, `p = 1..=T`. The length must be a
/// multiple of `T`.
pub fn block_series(theta: &[Complex64], period: usize) -> Result<Vec<CVec>> {
    if period == 0 || theta.len() % period != 0 {
        return Err(Error::Shape(format!(
            "series length {} is not a multiple of the period {period}",
            theta.len()
        )));
    }
    Ok(theta.chunks(period).map(CVec::from_column_slice).collect())
}

pub fn unblock_series(xi: &[CVec]) -> Vec<Complex64> {
    xi.iter().flat_map(|v| v.iter().copied()).collect()
}

/// Vector weights `a(m)`, `m = 0..=⌊M/T⌋`, from scalar weights `a_θ(0..=M)`,
/// zero-padding the coordinates past `M`.
pub fn block_coefficients(a_theta: &[Complex64], period: usize) -> Result<Vec<CVec>> {
    if a_theta.is_empty() {
        return Err(Error::Shape("scalar weights are empty".into()));
    }
    if period == 0 {
        return Err(Error::InvalidParameter("period must be >= 1".into()));
    }
    let m_max = a_theta.len() - 1;
    let horizon = m_max / period;
    Ok((0..=horizon)
        .map(|m| {
            CVec::from_iterator(
                period,
                (0..period).map(|p| a_theta.get(m * period + p).copied().unwrap_or_default()),
            )
        })
        .collect())
}

/// The functional weights together with every derived weight family.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub spec: IncrementSpec,
    pub a: Vec<CVec>,
    pub b: Vec<CVec>,
    /// `v[i]` is `v(-(i+1))`.
    pub v: Vec<CVec>,
    pub a_mu: Vec<CVec>,
    /// Solved unknowns, `N + μn + 1` vectors, once available.
    pub c: Option<Vec<CVec>>,
}

impl CoefficientSet {
    pub fn new(spec: IncrementSpec, a: Vec<CVec>) -> Result<Self> {
        if a.len() != spec.horizon + 1 {
            return Err(Error::Shape(format!(
                "expected {} weight vectors, got {}",
                spec.horizon + 1,
                a.len()
            )));
        }
        if a.iter().any(|v| v.len() != spec.period) {
            return Err(Error::Shape(format!("weight vectors must have dimension {}", spec.period)));
        }
        let b = b_from_a(&a, spec.n, spec.mu)?;
        let v = v_from_b(&b, spec.n, spec.mu)?;
        let a_mu = a_mu_from_a(&a, spec.n, spec.mu)?;
        Ok(Self { spec, a, b, v, a_mu, c: None })
    }

    pub fn v_at(&self, k: i64) -> Option<&CVec> {
        if k >= 0 {
            return None;
        }
        self.v.get((-k - 1) as usize)
    }

    /// `[D a]_{+μn}` flattened to length `(N+μn+1)·T`.
    pub fn padded_b(&self) -> crate::CVec {
        let t = self.spec.period;
        let mut out = CVec::zeros(self.spec.system_size());
        for (k, bk) in self.b.iter().enumerate() {
            out.rows_mut(k * t, t).copy_from(bk);
        }
        out
    }

    pub fn flat_a_mu(&self) -> CVec {
        flatten(&self.a_mu)
    }

    pub fn flat_a(&self) -> CVec {
        flatten(&self.a)
    }
}

pub fn flatten(v: &[CVec]) -> CVec {
    CVec::from_iterator(v.iter().map(|x| x.len()).sum(), v.iter().flat_map(|x| x.iter().copied()))
}

pub fn unflatten(v: &CVec, dim: usize) -> Vec<CVec> {
    v.as_slice().chunks(dim).map(CVec::from_column_slice).collect()
}

/// `Σ_{k=0}^{N} a(k)ᵀ ζ(k)`.
pub fn functional_value(a: &[CVec], zeta: &Series) -> Option<Complex64> {
    let mut acc = Complex64::default();
    for (k, ak) in a.iter().enumerate() {
        acc += ak.dot(zeta.get(k as i64)?);
    }
    Some(acc)
}
