use std::f64::consts::PI;

use rayon::prelude::*;

use super::{DiagPoint, MinimaxProblem, Side};
use crate::error::{Error, Result};
use crate::estimator::{trig_poly, EstimateSolution};
use crate::linalg::c;
use crate::spectra::{gain_zeros, increment_gain, GridDensity, Hint, SpectralDensity};
use crate::{CMat, CVec, Complex64};

/// Anchor of the linearized objective: the optimal estimate at `(f⁰, g⁰)`.
///
/// For a fixed characteristic `h⁰` the error is
/// `∫ e_fᵀ (gain·f) conj(e_f) + vᵀ g conj(v) dλ` with `e_f = B - h⁰/χ` and
/// `v = (1 - e^{-iμλ})^n e_f - A`, which is linear in `(f, g)`.
#[derive(Debug, Clone)]
pub struct Context {
    pub solution: EstimateSolution,
}

impl Context {
    pub fn new(solution: EstimateSolution) -> Self {
        Self { solution }
    }

    pub fn mse(&self) -> f64 {
        self.solution.mse
    }

    /// `(e_f, v)` at `λ`.
    pub fn error_weights(&self, lambda: f64) -> Result<(CVec, CVec)> {
        let s = self.solution.spec();
        let coeffs = &self.solution.coeffs;
        let e = trig_poly(&coeffs.b, lambda) - self.solution.h_over_chi(lambda)?;
        let back = (c(1.0) - Complex64::from_polar(1.0, -(s.mu as f64) * lambda)).powu(s.n as u32);
        let v = &e * back - trig_poly(&coeffs.a, lambda);
        Ok((e, v))
    }

    fn hints(&self) -> Vec<Hint> {
        self.solution.pair().hints().into_iter().map(|h| Hint::regular(h.at)).collect()
    }
}

/// `conj(x) xᵀ`, so that `Tr(M · outer(x)) = xᵀ M conj(x)`.
fn outer(x: &CVec) -> CMat {
    x.conjugate() * x.transpose()
}

/// `Δ(h⁰; f, g)` for arbitrary densities.
pub fn objective(ctx: &Context, f: &SpectralDensity, g: &SpectralDensity) -> Result<f64> {
    let s = ctx.solution.spec();
    let mut hints = ctx.hints();
    hints.extend(f.hints().into_iter().chain(g.hints()).map(Hint::regular));
    let integrand = |l: f64| -> Vec<Complex64> {
        match ctx.error_weights(l) {
            Ok((e, v)) => {
                let q = f.eval_unchecked(l) * c(increment_gain(l, s.n, s.mu));
                let gv = g.eval_unchecked(l);
                vec![c(crate::estimator::quad_form(&e, &q) + crate::estimator::quad_form(&v, &gv))]
            }
            Err(_) => vec![c(f64::NAN)],
        }
    };
    let v = ctx.solution.problem.quad.integrate_circle(&integrand, &hints)?.value[0].re;
    if !v.is_finite() {
        return Err(Error::SingularDensity { lambda: f64::NAN });
    }
    Ok(v)
}

/// Objective gradients per grid cell: `Δ(h⁰; f, g) = Σ Tr(Φ_q q) + Σ Tr(Φ_g g)`
/// for cell-constant `q = gain·f` and `g`.
#[derive(Debug, Clone)]
pub struct CellGradients {
    pub phi_q: Vec<CMat>,
    pub phi_g: Vec<CMat>,
}

impl CellGradients {
    pub fn value(&self, q: &GridDensity, g: &GridDensity) -> f64 {
        let tr = |phi: &[CMat], vals: &[CMat]| -> f64 { phi.iter().zip(vals).map(|(p, m)| (p * m).trace().re).sum() };
        tr(&self.phi_q, &q.values) + tr(&self.phi_g, &g.values)
    }

    /// Gradient with respect to the diagonal search variable.
    pub(crate) fn diag(&self, side: Side, cell: usize, k: usize) -> f64 {
        match side {
            Side::F => self.phi_q[cell][(k, k)].re,
            Side::G => self.phi_g[cell][(k, k)].re,
        }
    }
}

fn edges(cells: usize) -> Vec<f64> {
    (1..cells).map(|i| -PI + 2.0 * PI * i as f64 / cells as f64).collect()
}

/// Integrate the outer products of `e_f` and `v` over every f-cell and g-cell.
pub fn cell_gradients(ctx: &Context, f_cells: usize, g_cells: usize) -> Result<CellGradients> {
    let dim = ctx.solution.spec().period;
    let mut cuts = vec![-PI, PI, 0.0];
    cuts.extend(edges(f_cells));
    cuts.extend(edges(g_cells));
    cuts.extend(gain_zeros(ctx.solution.spec().mu));
    cuts.extend(ctx.hints().iter().map(|h| h.at));
    cuts.retain(|x| (-PI..=PI).contains(x));
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let quad = ctx.solution.problem.quad;
    let integrand = |l: f64| -> Vec<Complex64> {
        match ctx.error_weights(l) {
            Ok((e, v)) => outer(&e).iter().chain(outer(&v).iter()).copied().collect(),
            Err(_) => vec![c(f64::NAN); 2 * dim * dim],
        }
    };
    let pieces: Vec<(f64, Vec<Complex64>)> = cuts
        .par_windows(2)
        .map(|w| Ok((0.5 * (w[0] + w[1]), quad.integrate(&integrand, w[0], w[1], &[])?.value)))
        .collect::<Result<_>>()?;
    let fg = GridDensity { interp: crate::spectra::GridInterp::Cell, values: vec![CMat::zeros(1, 1); f_cells] };
    let gg = GridDensity { interp: crate::spectra::GridInterp::Cell, values: vec![CMat::zeros(1, 1); g_cells] };
    let mut phi_q = vec![CMat::zeros(dim, dim); f_cells];
    let mut phi_g = vec![CMat::zeros(dim, dim); g_cells];
    for (mid, val) in pieces {
        if val.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::SingularDensity { lambda: mid });
        }
        phi_q[fg.cell_of(mid)] += CMat::from_column_slice(dim, dim, &val[..dim * dim]);
        phi_g[gg.cell_of(mid)] += CMat::from_column_slice(dim, dim, &val[dim * dim..]);
    }
    Ok(CellGradients { phi_q, phi_g })
}

/// Maximizer of the linearized objective over the (diagonal, gridded) classes:
/// in each constraint group all mass goes to the variables with the largest
/// gradient per unit of constrained moment, split equally between ties.
/// A g-group keeps `d = 0` when no variable has positive gradient.
pub fn best_response(grads: &CellGradients, problem: &MinimaxProblem) -> Result<DiagPoint> {
    let dim = problem.dim();
    let mut pt = DiagPoint {
        q: vec![vec![0.0; dim]; problem.f_cells],
        d: vec![vec![0.0; dim]; problem.g_class.reference.cells()],
    };
    for group in problem.groups()? {
        let ratios: Vec<f64> = group.vars.iter().zip(&group.r).map(|(&(i, k), r)| grads.diag(group.side, i, k) / r).collect();
        let best = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if group.slack && best <= 0.0 {
            continue;
        }
        let ties: Vec<usize> = (0..ratios.len()).filter(|&j| ratios[j] >= best - 1e-9 * best.abs()).collect();
        let share = group.mass / ties.len() as f64;
        for j in ties {
            let (i, k) = group.vars[j];
            pt.set(group.side, i, k, share / group.r[j]);
        }
    }
    Ok(pt)
}
