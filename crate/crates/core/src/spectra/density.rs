use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_part, min_eigenvalue};
use crate::{CMat, Complex64};

/// `|1 - e^{iλμ}|^{2n} / λ^{2n}`, evaluated as `(2 sin(μλ/2)/λ)^{2n}`.
/// Its value at `λ = 0` is the limit `μ^{2n}`; it vanishes at `λ = 2πj/μ`,
/// `j ≠ 0`.
pub fn increment_gain(lambda: f64, n: usize, mu: usize) -> f64 {
    let muf = mu as f64;
    let ratio = if lambda.abs() < 1e-4 {
        let x = muf * lambda;
        muf * (1.0 - x * x / 24.0)
    } else {
        2.0 * (0.5 * muf * lambda).sin() / lambda
    };
    ratio.powi(2 * n as i32)
}

/// `(1 - e^{-iμλ}) / λ` without cancellation near zero.
pub fn difference_factor(lambda: f64, mu: usize) -> Complex64 {
    let muf = mu as f64;
    let half = 0.5 * muf * lambda;
    let sinc = if half.abs() < 1e-4 { muf * (1.0 - half * half / 6.0) } else { 2.0 * half.sin() / lambda };
    Complex64::from_polar(1.0, -half) * Complex64::new(0.0, sinc)
}

/// Frequencies in `[-π, π]` where `increment_gain(·, n, μ)` vanishes.
pub fn gain_zeros(mu: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let half = mu as i64 / 2;
    for j in -half..=half {
        if j != 0 {
            out.push(2.0 * PI * j as f64 / mu as f64);
        }
    }
    out
}

/// Dense complex matrix with a `{"re": [[...]], "im": [[...]]}` serde form.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixData(pub CMat);

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    im: Option<Vec<Vec<f64>>>,
}

impl Serialize for MatrixData {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m = &self.0;
        let rows = |f: &dyn Fn(Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(m[(i, j)])).collect()).collect()
        };
        let im = if m.iter().any(|z| z.im != 0.0) { Some(rows(&|z| z.im)) } else { None };
        MatrixRepr { re: rows(&|z| z.re), im }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MatrixData {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MatrixRepr::deserialize(d)?;
        let n = r.re.len();
        let m = r.re.first().map_or(0, |row| row.len());
        if r.re.iter().any(|row| row.len() != m) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        if let Some(im) = &r.im {
            if im.len() != n || im.iter().any(|row| row.len() != m) {
                return Err(serde::de::Error::custom("imaginary part shape differs from real part"));
            }
        }
        Ok(MatrixData(CMat::from_fn(n, m, |i, j| {
            Complex64::new(r.re[i][j], r.im.as_ref().map_or(0.0, |im| im[i][j]))
        })))
    }
}

impl From<CMat> for MatrixData {
    fn from(m: CMat) -> Self {
        MatrixData(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridInterp {
    /// Value constant on each of the `K` cells; nodes are cell midpoints.
    Cell,
    /// Periodic linear interpolation between nodes `-π + 2πi/K`.
    Linear,
}

/// Density tabulated on a uniform grid over `[-π, π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub interp: GridInterp,
    pub values: Vec<CMat>,
}

impl GridDensity {
    pub fn new(interp: GridInterp, values: Vec<CMat>) -> Result<Self> {
        let dim = values.first().map(|m| m.nrows()).ok_or_else(|| Error::Shape("empty grid".into()))?;
        if values.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::Shape("grid matrices must all be square of equal size".into()));
        }
        Ok(Self { interp, values })
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn width(&self) -> f64 {
        2.0 * PI / self.values.len() as f64
    }

    /// Grid node for index `i` (cell midpoint or interpolation node).
    pub fn node(&self, i: usize) -> f64 {
        match self.interp {
            GridInterp::Cell => -PI + (i as f64 + 0.5) * self.width(),
            GridInterp::Linear => -PI + i as f64 * self.width(),
        }
    }

    /// Cell `i` covers `[edge(i), edge(i+1))`.
    pub fn edge(&self, i: usize) -> f64 {
        -PI + i as f64 * self.width()
    }

    pub fn cell_of(&self, lambda: f64) -> usize {
        let k = self.values.len();
        (((lambda + PI) / self.width()).floor().max(0.0) as usize).min(k - 1)
    }

    /// Tabulate `src` at the grid nodes.
    pub fn sample(src: &SpectralDensity, cells: usize, interp: GridInterp) -> Result<Self> {
        let proto = GridDensity { interp, values: vec![CMat::zeros(1, 1); cells] };
        let values = (0..cells).map(|i| src.eval(proto.node(i))).collect::<Result<Vec<_>>>()?;
        Self::new(interp, values)
    }

    pub fn eval(&self, lambda: f64) -> CMat {
        grid_eval(self.interp, self.values.len(), |i| &self.values[i], lambda)
    }
}

fn grid_eval<'a>(interp: GridInterp, k: usize, get: impl Fn(usize) -> &'a CMat, lambda: f64) -> CMat {
    let width = 2.0 * PI / k as f64;
    let pos = (lambda + PI) / width;
    let i0 = (pos.floor().max(0.0) as usize).min(k - 1);
    match interp {
        GridInterp::Cell => get(i0).clone(),
        GridInterp::Linear => {
            let t = (pos - i0 as f64).clamp(0.0, 1.0);
            get(i0) * c(1.0 - t) + get((i0 + 1) % k) * c(t)
        }
    }
}

/// Matrix-valued spectral density on `[-π, π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralDensity {
    /// Constant Hermitian PSD matrix.
    Constant { matrix: MatrixData },
    /// `(1/2π) Θ(λ) Θ(λ)^*` with `Θ(λ) = Σ_k Θ_k e^{-ikλ}`.
    MovingAverage { coeffs: Vec<MatrixData> },
    /// `(1/2π) Θ(λ) Θ(λ)^* / |φ(e^{-iλ})|²` with scalar `φ(z) = Σ_k φ_k z^k`.
    Rational { numerator: Vec<MatrixData>, denominator: Vec<f64> },
    /// Grid-tabulated values.
    Grid {
        interp: GridInterp,
        values: Vec<MatrixData>,
    },
    /// `base(λ) · λ^{2n} / |1 - e^{iλμ}|^{2n}`: the `n`-th increments with
    /// step `μ` of a sequence with this density have spectral density `base`.
    IncrementCompensated { n: usize, mu: usize, base: Box<SpectralDensity> },
    /// `factor · base(λ)`.
    Scaled { factor: f64, base: Box<SpectralDensity> },
}

fn ma_transfer(coeffs: &[MatrixData], lambda: f64) -> CMat {
    let dim = coeffs[0].0.nrows();
    let mut acc = CMat::zeros(dim, coeffs[0].0.ncols());
    for (k, m) in coeffs.iter().enumerate() {
        acc += &m.0 * Complex64::from_polar(1.0, -(k as f64) * lambda);
    }
    acc
}

impl SpectralDensity {
    pub fn constant(m: CMat) -> Self {
        SpectralDensity::Constant { matrix: m.into() }
    }

    pub fn scalar(value: f64) -> Self {
        Self::constant(CMat::from_element(1, 1, c(value)))
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(CMat::identity(dim, dim))
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(CMat::zeros(dim, dim))
    }

    pub fn moving_average(coeffs: Vec<CMat>) -> Self {
        SpectralDensity::MovingAverage { coeffs: coeffs.into_iter().map(MatrixData).collect() }
    }

    pub fn compensated(n: usize, mu: usize, base: SpectralDensity) -> Self {
        SpectralDensity::IncrementCompensated { n, mu, base: Box::new(base) }
    }

    pub fn from_grid(grid: GridDensity) -> Self {
        SpectralDensity::Grid { interp: grid.interp, values: grid.values.into_iter().map(MatrixData).collect() }
    }

    pub fn scaled(factor: f64, base: SpectralDensity) -> Self {
        SpectralDensity::Scaled { factor, base: Box::new(base) }
    }

    pub fn grid(&self) -> Option<GridDensity> {
        match self {
            SpectralDensity::Grid { interp, values } => {
                Some(GridDensity { interp: *interp, values: values.iter().map(|m| m.0.clone()).collect() })
            }
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            SpectralDensity::Constant { .. } => "constant",
            SpectralDensity::MovingAverage { .. } => "moving-average",
            SpectralDensity::Rational { .. } => "rational",
            SpectralDensity::Grid { .. } => "grid-tabulated",
            SpectralDensity::IncrementCompensated { .. } => "increment-compensated",
            SpectralDensity::Scaled { .. } => "scaled",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SpectralDensity::Constant { matrix } => matrix.0.nrows(),
            SpectralDensity::MovingAverage { coeffs } => coeffs.first().map_or(0, |m| m.0.nrows()),
            SpectralDensity::Rational { numerator, .. } => numerator.first().map_or(0, |m| m.0.nrows()),
            SpectralDensity::Grid { values, .. } => values.first().map_or(0, |m| m.0.nrows()),
            SpectralDensity::IncrementCompensated { base, .. } | SpectralDensity::Scaled { base, .. } => base.dim(),
        }
    }

    /// Checks that the model is well formed (shapes, non-empty coefficient lists).
    pub fn validate(&self) -> Result<()> {
        let square = |m: &MatrixData| m.0.nrows() == m.0.ncols();
        match self {
            SpectralDensity::Constant { matrix } if !square(matrix) => Err(Error::Shape("constant density must be square".into())),
            SpectralDensity::MovingAverage { coeffs } | SpectralDensity::Rational { numerator: coeffs, .. } => {
                if coeffs.is_empty() {
                    return Err(Error::Shape("moving-average coefficient list is empty".into()));
                }
                let d = coeffs[0].0.nrows();
                if coeffs.iter().any(|m| m.0.nrows() != d) {
                    return Err(Error::Shape("moving-average coefficients have differing row counts".into()));
                }
                if let SpectralDensity::Rational { denominator, .. } = self {
                    if denominator.is_empty() || denominator.iter().all(|x| *x == 0.0) {
                        return Err(Error::Shape("rational denominator is empty".into()));
                    }
                }
                Ok(())
            }
            SpectralDensity::Grid { values, .. } => {
                GridDensity::new(GridInterp::Cell, values.iter().map(|m| m.0.clone()).collect()).map(|_| ())
            }
            SpectralDensity::IncrementCompensated { n, mu, base } => {
                if *n < 1 || *mu < 1 {
                    return Err(Error::InvalidParameter("compensation needs n >= 1 and mu >= 1".into()));
                }
                base.validate()
            }
            SpectralDensity::Scaled { factor, base } => {
                if !(factor.is_finite() && *factor >= 0.0) {
                    return Err(Error::InvalidParameter("scale factor must be finite and >= 0".into()));
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    /// Value at `λ ∈ [-π, π)`.
    pub fn eval(&self, lambda: f64) -> Result<CMat> {
        if !(-PI..PI).contains(&lambda) && !(lambda == PI) {
            return Err(Error::Domain(lambda));
        }
        Ok(self.eval_unchecked(lambda))
    }

    pub(crate) fn eval_unchecked(&self, lambda: f64) -> CMat {
        match self {
            SpectralDensity::Constant { matrix } => matrix.0.clone(),
            SpectralDensity::MovingAverage { coeffs } => {
                let th = ma_transfer(coeffs, lambda);
                hermitian_part(&(&th * th.adjoint())) * c(1.0 / (2.0 * PI))
            }
            SpectralDensity::Rational { numerator, denominator } => {
                let th = ma_transfer(numerator, lambda);
                let phi: Complex64 = denominator
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| Complex64::from_polar(p, -(k as f64) * lambda))
                    .sum();
                hermitian_part(&(&th * th.adjoint())) * c(1.0 / (2.0 * PI * phi.norm_sqr()))
            }
            SpectralDensity::Grid { interp, values } => grid_eval(*interp, values.len(), |i| &values[i].0, lambda),
            SpectralDensity::IncrementCompensated { n, mu, base } => {
                base.eval_unchecked(lambda) * c(1.0 / increment_gain(lambda, *n, *mu))
            }
            SpectralDensity::Scaled { factor, base } => base.eval_unchecked(lambda) * c(*factor),
        }
    }

    /// Points where the density has a pole or a jump; quadrature panels are
    /// split there.
    pub fn hints(&self) -> Vec<f64> {
        match self {
            SpectralDensity::IncrementCompensated { mu, base, .. } => {
                let mut h = gain_zeros(*mu);
                h.extend(base.hints());
                h
            }
            SpectralDensity::Scaled { base, .. } => base.hints(),
            SpectralDensity::Grid { interp: GridInterp::Cell, values } => {
                let k = values.len();
                (1..k).map(|i| -PI + 2.0 * PI * i as f64 / k as f64).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Checks Hermitian PSD at `samples` evenly spaced frequencies.
    pub fn check_psd(&self, samples: usize, tol: f64) -> Result<()> {
        for i in 0..samples {
            let lambda = -PI + (i as f64 + 0.5) * 2.0 * PI / samples as f64;
            let m = self.eval_unchecked(lambda);
            let scale = m.norm().max(1.0);
            if (&m - m.adjoint()).norm() > tol * scale {
                return Err(Error::NotPsd { lambda, min_eig: f64::NAN });
            }
            let me = min_eigenvalue(&m);
            if me < -tol * scale {
                return Err(Error::NotPsd { lambda, min_eig: me });
            }
        }
        Ok(())
    }
}
