//! Minimax-robust estimation: admissible classes of densities, the objective
//! `Δ(h(f⁰,g⁰); f, g)` that is linear in `(f, g)`, best responses, the search
//! for least favorable densities and verification of saddle and Lagrange
//! conditions.
//!
//! Inside the search, the signal is described by its increment density
//! `q = gain · f` and the noise by `g`, both constant on the cells of uniform
//! grids. Every f-class fixes weighted moments of `q`, so with a diagonal
//! parameterization each class is a product of weighted simplices. Every
//! g-class is an L1 ball around `g₁`; the objective has nonnegative weight on
//! the diagonal of `g`, so the search moves `g = g₁ + diag(d)`, `d ≥ 0`, on the
//! face `Σ ω d ≤ δ` where the maximum is attained.

mod objective;
mod search;
mod verify;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use objective::{best_response, cell_gradients, objective, CellGradients, Context};
pub use search::{least_favorable_search, SaddleCandidate, SearchOptions};
pub use verify::{lagrange_residual, perturbed_point, saddle_check, GroupResidual, LagrangeReport, SaddleReport};

use crate::error::{Error, Result};
use crate::linalg::c;
use crate::spectra::{increment_gain, GridDensity, GridInterp, Hint, MatrixData, Quadrature, SpectralDensity};
use crate::CMat;

/// Constraint on the signal density, stated for `q = gain · f`:
/// `(1/2π) ∫ q(λ) dλ` (or a functional of it) equals the given target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FClass {
    /// `(1/2π) ∫ q = P`.
    F1 { p: MatrixData },
    /// `(1/2π) ∫ Tr q = p`.
    F2 { p: f64 },
    /// `(1/2π) ∫ q_kk = p_k`.
    F3 { p: Vec<f64> },
    /// `(1/2π) ∫ ⟨B₁, q⟩ = p`.
    F4 { b1: MatrixData, p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GKind {
    G1,
    G2,
    G3,
    G4,
}

/// L1 neighbourhood of a reference noise density `g₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GRadius {
    /// `(1/2π) ∫ |Tr(g - g₁)| ≤ δ`.
    G1 { delta: f64 },
    /// `(1/2π) ∫ |g_kk - g₁_kk| ≤ δ_k`.
    G2 { delta: Vec<f64> },
    /// `(1/2π) ∫ |⟨B₂, g - g₁⟩| ≤ δ`.
    G3 { b2: MatrixData, delta: f64 },
    /// `(1/2π) ∫ |g_ij - g₁_ij| ≤ δ_i^j`.
    G4 { delta: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GClass {
    pub radius: GRadius,
    /// Bounded reference density, cell-constant.
    pub reference: GridDensity,
}

/// Either side of an admissible class, for [`constraint_eval`].
#[derive(Debug, Clone, PartialEq)]
pub enum AdmissibleClass {
    F(FClass),
    G(GClass),
}

fn check_hpd(m: &CMat, what: &str) -> Result<()> {
    if (m - m.adjoint()).norm() > 1e-12 * (1.0 + m.norm()) || crate::linalg::min_eigenvalue(m) <= 0.0 {
        return Err(Error::InvalidParameter(format!("{what} must be Hermitian positive definite")));
    }
    Ok(())
}

impl FClass {
    pub fn kind(&self) -> u8 {
        match self {
            FClass::F1 { .. } => 1,
            FClass::F2 { .. } => 2,
            FClass::F3 { .. } => 3,
            FClass::F4 { .. } => 4,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            FClass::F1 { p } => {
                if p.0.nrows() != dim {
                    return Err(Error::Shape(format!("P must be {dim}×{dim}")));
                }
                check_hpd(&p.0, "P")
            }
            FClass::F2 { p } => positive(*p, "p"),
            FClass::F3 { p } => {
                if p.len() != dim {
                    return Err(Error::Shape(format!("p_k needs {dim} entries")));
                }
                p.iter().try_for_each(|&x| positive(x, "p_k"))
            }
            FClass::F4 { b1, p } => {
                if b1.0.nrows() != dim {
                    return Err(Error::Shape(format!("B1 must be {dim}×{dim}")));
                }
                check_hpd(&b1.0, "B1")?;
                positive(*p, "p")
            }
        }
    }

    /// Simplex groups over the diagonal of `q` on `cells` cells.
    pub(crate) fn groups(&self, dim: usize, cells: usize) -> Result<Vec<Group>> {
        let omega = 1.0 / cells as f64;
        let per_coord = |targets: Vec<f64>| -> Vec<Group> {
            targets
                .into_iter()
                .enumerate()
                .map(|(k, mass)| Group::new(Side::F, (0..cells).map(|i| (i, k, omega)).collect(), mass, false))
                .collect()
        };
        let all = |w: &dyn Fn(usize) -> f64, mass: f64| {
            vec![Group::new(
                Side::F,
                (0..cells).flat_map(|i| (0..dim).map(move |k| (i, k))).map(|(i, k)| (i, k, omega * w(k))).collect(),
                mass,
                false,
            )]
        };
        Ok(match self {
            FClass::F1 { p } => {
                let off = (0..dim).flat_map(|i| (0..dim).filter(move |&j| j != i).map(move |j| (i, j)));
                if off.into_iter().any(|(i, j)| p.0[(i, j)].norm() > 1e-14) {
                    return Err(Error::Unsupported(
                        "the search parameterizes diagonal densities; P must be diagonal".into(),
                    ));
                }
                per_coord((0..dim).map(|k| p.0[(k, k)].re).collect())
            }
            FClass::F2 { p } => all(&|_| 1.0, *p),
            FClass::F3 { p } => per_coord(p.clone()),
            FClass::F4 { b1, p } => all(&|k| b1.0[(k, k)].re, *p),
        })
    }
}

fn positive(x: f64, what: &str) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidParameter(format!("{what} must be positive, got {x}")));
    }
    Ok(())
}

fn nonneg(x: f64, what: &str) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::InvalidParameter(format!("{what} must be nonnegative, got {x}")));
    }
    Ok(())
}

impl GClass {
    pub fn new(radius: GRadius, reference: GridDensity) -> Result<Self> {
        let me = Self { radius, reference };
        me.validate()?;
        Ok(me)
    }

    pub fn kind(&self) -> GKind {
        match self.radius {
            GRadius::G1 { .. } => GKind::G1,
            GRadius::G2 { .. } => GKind::G2,
            GRadius::G3 { .. } => GKind::G3,
            GRadius::G4 { .. } => GKind::G4,
        }
    }

    pub fn dim(&self) -> usize {
        self.reference.values[0].nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if self.reference.interp != GridInterp::Cell {
            return Err(Error::InvalidParameter("reference density must be cell-constant".into()));
        }
        for (i, m) in self.reference.values.iter().enumerate() {
            if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::InvalidParameter(format!("reference density is unbounded in cell {i}")));
            }
            let e = crate::linalg::min_eigenvalue(m);
            if e < -1e-12 {
                return Err(Error::NotPsd { lambda: self.reference.node(i), min_eig: e });
            }
        }
        match &self.radius {
            GRadius::G1 { delta } => nonneg(*delta, "delta"),
            GRadius::G2 { delta } => {
                if delta.len() != dim {
                    return Err(Error::Shape(format!("delta_k needs {dim} entries")));
                }
                delta.iter().try_for_each(|&d| nonneg(d, "delta_k"))
            }
            GRadius::G3 { b2, delta } => {
                if b2.0.nrows() != dim {
                    return Err(Error::Shape(format!("B2 must be {dim}×{dim}")));
                }
                check_hpd(&b2.0, "B2")?;
                nonneg(*delta, "delta")
            }
            GRadius::G4 { delta } => {
                if delta.len() != dim || delta.iter().any(|r| r.len() != dim) {
                    return Err(Error::Shape(format!("delta_ij must be {dim}×{dim}")));
                }
                delta.iter().flatten().try_for_each(|&d| nonneg(d, "delta_ij"))
            }
        }
    }

    /// Simplex groups over the diagonal increments `d ≥ 0`, each with a slack
    /// vertex (no movement).
    pub(crate) fn groups(&self) -> Vec<Group> {
        let dim = self.dim();
        let cells = self.reference.cells();
        let omega = 1.0 / cells as f64;
        let per_coord = |radii: Vec<f64>| -> Vec<Group> {
            radii
                .into_iter()
                .enumerate()
                .map(|(k, r)| Group::new(Side::G, (0..cells).map(|i| (i, k, omega)).collect(), r, true))
                .collect()
        };
        let all = |w: &dyn Fn(usize) -> f64, r: f64| {
            vec![Group::new(
                Side::G,
                (0..cells).flat_map(|i| (0..dim).map(move |k| (i, k))).map(|(i, k)| (i, k, omega * w(k))).collect(),
                r,
                true,
            )]
        };
        match &self.radius {
            GRadius::G1 { delta } => all(&|_| 1.0, *delta),
            GRadius::G2 { delta } => per_coord(delta.clone()),
            GRadius::G3 { b2, delta } => all(&|k| b2.0[(k, k)].re, *delta),
            GRadius::G4 { delta } => per_coord((0..dim).map(|k| delta[k][k]).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    F,
    G,
}

/// Variables `(cell, coordinate)` with constraint weights `r`, sharing a
/// total weighted mass. With `slack`, the mass is an upper bound.
#[derive(Debug, Clone)]
pub(crate) struct Group {
    pub side: Side,
    pub vars: Vec<(usize, usize)>,
    pub r: Vec<f64>,
    pub mass: f64,
    pub slack: bool,
}

impl Group {
    fn new(side: Side, vars: Vec<(usize, usize, f64)>, mass: f64, slack: bool) -> Self {
        Self {
            side,
            r: vars.iter().map(|v| v.2).collect(),
            vars: vars.into_iter().map(|v| (v.0, v.1)).collect(),
            mass,
            slack,
        }
    }
}

/// Diagonal search variables: `q` per f-cell and `d` per g-cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagPoint {
    pub q: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
}

impl DiagPoint {
    pub(crate) fn get(&self, side: Side, cell: usize, k: usize) -> f64 {
        match side {
            Side::F => self.q[cell][k],
            Side::G => self.d[cell][k],
        }
    }

    pub(crate) fn set(&mut self, side: Side, cell: usize, k: usize, v: f64) {
        match side {
            Side::F => self.q[cell][k] = v,
            Side::G => self.d[cell][k] = v,
        }
    }
}

/// The robust estimation problem: functional, increment structure, classes,
/// and the f-grid resolution.
#[derive(Debug, Clone)]
pub struct MinimaxProblem {
    pub spec: crate::IncrementSpec,
    pub a: Vec<crate::CVec>,
    pub f_class: FClass,
    pub g_class: GClass,
    pub f_cells: usize,
    pub quad: Quadrature,
}

impl MinimaxProblem {
    pub fn new(spec: crate::IncrementSpec, a: Vec<crate::CVec>, f_class: FClass, g_class: GClass, f_cells: usize) -> Result<Self> {
        let dim = spec.period;
        f_class.validate(dim)?;
        g_class.validate()?;
        if g_class.dim() != dim {
            return Err(Error::Shape(format!("reference density has dimension {} but T = {dim}", g_class.dim())));
        }
        if f_cells < 1 {
            return Err(Error::InvalidParameter("f grid needs at least one cell".into()));
        }
        Ok(Self { spec, a, f_class, g_class, f_cells, quad: Quadrature::default() })
    }

    pub fn dim(&self) -> usize {
        self.spec.period
    }

    pub(crate) fn groups(&self) -> Result<Vec<Group>> {
        let mut g = self.f_class.groups(self.dim(), self.f_cells)?;
        g.extend(self.g_class.groups());
        Ok(g)
    }

    /// Feasible starting point: `q` spread evenly over each f-group, `g = g₁`.
    pub fn default_init(&self) -> Result<DiagPoint> {
        let dim = self.dim();
        let mut pt = DiagPoint { q: vec![vec![0.0; dim]; self.f_cells], d: vec![vec![0.0; dim]; self.g_class.reference.cells()] };
        for g in self.f_class.groups(dim, self.f_cells)? {
            let total: f64 = g.r.iter().sum();
            for &(i, k) in &g.vars {
                pt.q[i][k] = g.mass / total;
            }
        }
        Ok(pt)
    }

    /// Point from cell-constant grids `q` (increment density of the signal)
    /// and `g`. Both must be diagonal and `g ≥ g₁` on the diagonal.
    pub fn point_from_grids(&self, q: &GridDensity, g: &GridDensity) -> Result<DiagPoint> {
        let dim = self.dim();
        if q.cells() != self.f_cells || g.cells() != self.g_class.reference.cells() {
            return Err(Error::Shape("initial grids do not match the class grids".into()));
        }
        let diag = |m: &CMat| -> Result<Vec<f64>> {
            for i in 0..dim {
                for j in 0..dim {
                    if i != j && m[(i, j)].norm() > 1e-14 {
                        return Err(Error::Unsupported("the search parameterizes diagonal densities".into()));
                    }
                }
            }
            Ok((0..dim).map(|k| m[(k, k)].re).collect())
        };
        let qv = q.values.iter().map(diag).collect::<Result<Vec<_>>>()?;
        let mut dv = Vec::new();
        for (gi, g1) in g.values.iter().zip(&self.g_class.reference.values) {
            let d = diag(&(gi - g1))?;
            if d.iter().any(|&x| x < -1e-14) {
                return Err(Error::InvalidParameter("initial g must satisfy g >= g1 on the diagonal".into()));
            }
            dv.push(d.into_iter().map(|x| x.max(0.0)).collect());
        }
        let pt = DiagPoint { q: qv, d: dv };
        self.check_feasible(&pt, 1e-8)?;
        Ok(pt)
    }

    pub(crate) fn check_feasible(&self, pt: &DiagPoint, tol: f64) -> Result<()> {
        for g in self.groups()? {
            let used: f64 = g.vars.iter().zip(&g.r).map(|(&(i, k), r)| r * pt.get(g.side, i, k)).sum();
            let bad = if g.slack { used > g.mass * (1.0 + tol) + tol } else { (used - g.mass).abs() > tol * (1.0 + g.mass) };
            if bad || g.vars.iter().any(|&(i, k)| pt.get(g.side, i, k) < 0.0) {
                return Err(Error::Infeasible(format!("group constraint {used} vs {}", g.mass)));
            }
        }
        Ok(())
    }

    /// Increment density grid `q`.
    pub fn q_grid(&self, pt: &DiagPoint) -> GridDensity {
        let vals = pt.q.iter().map(|v| CMat::from_diagonal(&crate::CVec::from_iterator(v.len(), v.iter().map(|&x| c(x))))).collect();
        GridDensity { interp: GridInterp::Cell, values: vals }
    }

    pub fn g_grid(&self, pt: &DiagPoint) -> GridDensity {
        let vals = pt
            .d
            .iter()
            .zip(&self.g_class.reference.values)
            .map(|(d, g1)| g1 + CMat::from_diagonal(&crate::CVec::from_iterator(d.len(), d.iter().map(|&x| c(x)))))
            .collect();
        GridDensity { interp: GridInterp::Cell, values: vals }
    }

    /// `(f, g)` for the estimator: `f = q / gain`.
    pub fn densities(&self, pt: &DiagPoint) -> (SpectralDensity, SpectralDensity) {
        let f = SpectralDensity::compensated(self.spec.n, self.spec.mu, SpectralDensity::from_grid(self.q_grid(pt)));
        (f, SpectralDensity::from_grid(self.g_grid(pt)))
    }

    pub fn estimation_problem(&self, pt: &DiagPoint) -> Result<crate::EstimationProblem> {
        let (f, g) = self.densities(pt);
        let pair = crate::DensityPair::new(f, g, self.spec.n, self.spec.mu)?;
        Ok(crate::EstimationProblem::new(self.spec, self.a.clone(), pair)?.with_quadrature(self.quad.clone()))
    }
}

/// Per-constraint report: for f-classes the moment minus its target
/// (feasible at 0), for g-classes `δ` minus the L1 distance (feasible ≥ 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub values: Vec<f64>,
    pub feasible: bool,
}

/// Evaluate the class constraints for a signal density `f` (f-classes, using
/// the increment order and step) or a noise density `g` (g-classes).
pub fn constraint_eval(density: &SpectralDensity, class: &AdmissibleClass, n: usize, mu: usize, quad: &Quadrature, tol: f64) -> Result<ConstraintReport> {
    let dim = density.dim();
    let mut hints: Vec<Hint> = density.hints().into_iter().map(Hint::regular).collect();
    hints.extend(crate::spectra::gain_zeros(mu).into_iter().map(Hint::singular));
    hints.push(Hint::regular(0.0));
    let scale = 1.0 / (2.0 * PI);
    match class {
        AdmissibleClass::F(fc) => {
            if let Err(e) = fc.validate(dim) {
                return Err(Error::Shape(format!("density does not match class: {e}")));
            }
            let integrand = |l: f64| -> Vec<crate::Complex64> {
                let m = density.eval_unchecked(l) * c(increment_gain(l, n, mu) * scale);
                m.iter().copied().collect()
            };
            let r = quad.integrate_circle(&integrand, &hints)?;
            let moment = CMat::from_column_slice(dim, dim, &r.value);
            let values: Vec<f64> = match fc {
                FClass::F1 { p } => (&moment - &p.0).iter().map(|z| z.norm()).collect(),
                FClass::F2 { p } => vec![moment.trace().re - p],
                FClass::F3 { p } => (0..dim).map(|k| moment[(k, k)].re - p[k]).collect(),
                FClass::F4 { b1, p } => vec![frobenius(&b1.0, &moment) - p],
            };
            let feasible = values.iter().all(|v| v.abs() <= tol);
            Ok(ConstraintReport { values, feasible })
        }
        AdmissibleClass::G(gc) => {
            if gc.dim() != dim {
                return Err(Error::Shape(format!("density has dimension {dim}, class {}", gc.dim())));
            }
            hints.extend(SpectralDensity::from_grid(gc.reference.clone()).hints().into_iter().map(Hint::regular));
            let integrand = |l: f64| -> Vec<crate::Complex64> {
                let diff = density.eval_unchecked(l) - gc.reference.eval(l);
                let v: Vec<f64> = match &gc.radius {
                    GRadius::G1 { .. } => vec![diff.trace().norm()],
                    GRadius::G2 { .. } => (0..dim).map(|k| diff[(k, k)].norm()).collect(),
                    GRadius::G3 { b2, .. } => vec![frobenius_c(&b2.0, &diff).norm()],
                    GRadius::G4 { .. } => diff.iter().map(|z| z.norm()).collect(),
                };
                v.into_iter().map(|x| c(x * scale)).collect()
            };
            let r = quad.integrate_circle(&integrand, &hints)?;
            let dist: Vec<f64> = r.value.iter().map(|z| z.re).collect();
            let values: Vec<f64> = match &gc.radius {
                GRadius::G1 { delta } | GRadius::G3 { delta, .. } => vec![delta - dist[0]],
                GRadius::G2 { delta } => delta.iter().zip(&dist).map(|(d, x)| d - x).collect(),
                // column-major storage of the integrated matrix
                GRadius::G4 { delta } => (0..dim * dim).map(|idx| delta[idx % dim][idx / dim] - dist[idx]).collect(),
            };
            let feasible = values.iter().all(|v| *v >= -tol);
            Ok(ConstraintReport { values, feasible })
        }
    }
}

/// `⟨B, M⟩ = Σ B_ij conj(M_ij)`, real part.
fn frobenius(b: &CMat, m: &CMat) -> f64 {
    frobenius_c(b, m).re
}

fn frobenius_c(b: &CMat, m: &CMat) -> crate::Complex64 {
    b.iter().zip(m.iter()).map(|(x, y)| x * y.conj()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_ref(cells: usize, v: f64) -> GridDensity {
        GridDensity::new(GridInterp::Cell, vec![CMat::from_element(1, 1, c(v)); cells]).unwrap()
    }

    #[test]
    fn reference_density_has_full_slack() {
        let gc = GClass::new(GRadius::G1 { delta: 0.3 }, scalar_ref(8, 0.2)).unwrap();
        let g = SpectralDensity::from_grid(gc.reference.clone());
        let r = constraint_eval(&g, &AdmissibleClass::G(gc), 1, 1, &Quadrature::default(), 1e-9).unwrap();
        assert!((r.values[0] - 0.3).abs() < 1e-12);
        assert!(r.feasible);
    }

    #[test]
    fn f2_moment_of_compensated_constant() {
        // f = c0 I / gain has increment density c0 I: moment c0 · T.
        let q = Quadrature::default();
        let f = SpectralDensity::compensated(1, 2, SpectralDensity::constant(CMat::identity(2, 2) * c(0.75)));
        let good = constraint_eval(&f, &AdmissibleClass::F(FClass::F2 { p: 1.5 }), 1, 2, &q, 1e-9).unwrap();
        assert!(good.feasible && good.values[0].abs() < 1e-9);
        let bad = constraint_eval(&f, &AdmissibleClass::F(FClass::F2 { p: 1.0 }), 1, 2, &q, 1e-9).unwrap();
        assert!(!bad.feasible);
        // Weighted by |1-e^{iλ}|²/λ² for a bounded f: closed-form oracle.
        let f1 = SpectralDensity::scalar(2.0);
        let w = q
            .integrate_scalar(&|l: f64| c(increment_gain(l, 1, 1)), -PI, PI, &[Hint::regular(0.0)])
            .unwrap()
            .re
            / (2.0 * PI);
        let r = constraint_eval(&f1, &AdmissibleClass::F(FClass::F2 { p: 2.0 * w }), 1, 1, &q, 1e-9).unwrap();
        assert!(r.values[0].abs() < 1e-10);
    }

    #[test]
    fn zero_radius_rejects_any_deviation() {
        let gc = GClass::new(GRadius::G1 { delta: 0.0 }, scalar_ref(8, 0.2)).unwrap();
        let mut vals = gc.reference.values.clone();
        vals[3][(0, 0)] += c(1e-3);
        let g = SpectralDensity::from_grid(GridDensity::new(GridInterp::Cell, vals).unwrap());
        let r = constraint_eval(&g, &AdmissibleClass::G(gc), 1, 1, &Quadrature::default(), 1e-9).unwrap();
        assert!(!r.feasible);
    }

    #[test]
    fn class_validation() {
        assert!(FClass::F2 { p: -1.0 }.validate(1).is_err());
        assert!(FClass::F1 { p: MatrixData(CMat::from_element(2, 2, c(1.0))) }.validate(2).is_err());
        assert!(GClass::new(GRadius::G2 { delta: vec![0.1] }, scalar_ref(4, 1.0)).is_ok());
        assert!(GClass::new(GRadius::G1 { delta: -0.1 }, scalar_ref(4, 1.0)).is_err());
        let unbounded = GridDensity::new(GridInterp::Cell, vec![CMat::from_element(1, 1, c(f64::INFINITY)); 2]).unwrap();
        assert!(GClass::new(GRadius::G1 { delta: 0.1 }, unbounded).is_err());
    }
}
