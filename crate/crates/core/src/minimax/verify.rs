use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::objective::{best_response, CellGradients};
use super::search::SaddleCandidate;
use super::{DiagPoint, MinimaxProblem, Side};
use crate::error::Result;
use crate::estimator::{chi, mse_of_characteristic};
use crate::{CVec, Complex64};

/// Worst relative margins of the two saddle inequalities; both are `≥ 0` at
/// an exact saddle point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaddleReport {
    pub delta0: f64,
    /// `min (Δ(h⁰; f⁰, g⁰) - Δ(h⁰; f, g)) / Δ⁰` over sampled feasible `(f, g)`.
    pub density_margin: f64,
    /// `min (Δ(h; f⁰, g⁰) - Δ(h⁰; f⁰, g⁰)) / Δ⁰` over sampled admissible `h`.
    pub characteristic_margin: f64,
    pub density_samples: usize,
    pub characteristic_samples: usize,
}

impl SaddleReport {
    pub fn worst(&self) -> f64 {
        self.density_margin.min(self.characteristic_margin)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.worst() >= -tol
    }
}

/// Random feasible point: each group's mass fractions are a Dirichlet(1)
/// draw, mixed with `base` by weight `t`.
fn random_point(problem: &MinimaxProblem, base: &DiagPoint, t: f64, rng: &mut ChaCha8Rng) -> Result<DiagPoint> {
    let mut p = base.clone();
    for g in problem.groups()? {
        let n = g.vars.len() + usize::from(g.slack);
        let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = e.iter().sum();
        for (j, &(i, k)) in g.vars.iter().enumerate() {
            let theta = e[j] / total;
            let v = (1.0 - t) * base.get(g.side, i, k) + t * theta * g.mass / g.r[j];
            p.set(g.side, i, k, v);
        }
    }
    Ok(p)
}

/// `base` moved a fraction `frac` of the way toward a random feasible point.
pub fn perturbed_point(problem: &MinimaxProblem, base: &DiagPoint, frac: f64, seed: u64) -> Result<DiagPoint> {
    random_point(problem, base, frac, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Check both saddle inequalities. The density side uses `samples` random
/// feasible points (at random distances from the candidate) plus the best
/// response; the characteristic side perturbs `h⁰/χ` by trigonometric
/// polynomials supported outside the observed band, which keeps `h`
/// admissible.
pub fn saddle_check(cand: &SaddleCandidate, samples: usize, seed: u64) -> Result<SaddleReport> {
    let problem = &cand.problem;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let value = |pt: &DiagPoint| cand.gradients.value(&problem.q_grid(pt), &problem.g_grid(pt));
    let delta0 = value(&cand.point);
    let mut density_margin = f64::INFINITY;
    let mut points = vec![best_response(&cand.gradients, problem)?];
    for _ in 0..samples {
        let t: f64 = rng.random();
        points.push(random_point(problem, &cand.point, t, &mut rng)?);
    }
    for p in &points {
        density_margin = density_margin.min((delta0 - value(p)) / delta0);
    }

    let sol = &cand.solution0;
    let s = *sol.spec();
    let first_future = s.system_len() as i64;
    let scale = sol.coeffs.b.iter().flat_map(|v| v.iter().map(|z| z.norm())).fold(0.0, f64::max).max(1e-3);
    let h_samples = samples.div_ceil(10).max(4);
    let mut characteristic_margin = f64::INFINITY;
    for _ in 0..h_samples {
        let eps = scale * 10f64.powf(-1.0 - 2.0 * rng.random::<f64>());
        let terms: Vec<(i64, CVec)> = (1..=3i64)
            .flat_map(|j| [-j, first_future - 1 + j])
            .map(|k| (k, CVec::from_fn(s.period, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * eps)))
            .collect();
        let h = |l: f64| -> Result<CVec> {
            let mut hc = sol.h_over_chi(l)?;
            for (k, v) in &terms {
                hc += v * Complex64::from_polar(1.0, *k as f64 * l);
            }
            Ok(hc * chi(l, s.n, s.mu))
        };
        let d = mse_of_characteristic(sol.pair(), &sol.coeffs, h, &sol.problem.quad)?;
        characteristic_margin = characteristic_margin.min((d - sol.mse) / delta0);
    }
    Ok(SaddleReport {
        delta0,
        density_margin,
        characteristic_margin,
        density_samples: points.len(),
        characteristic_samples: h_samples,
    })
}

/// Fitted multiplier and residuals of one constraint group's extremal
/// equation. On the support the gradient per unit of constrained moment must
/// equal the squared multiplier; off the support it may not exceed it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupResidual {
    pub side: String,
    /// Coordinate of a per-coordinate group, `None` for a pooled group.
    pub coordinate: Option<usize>,
    /// `α²` (signal side) or `β²` (noise side).
    pub multiplier: f64,
    /// Relative misfit of the equality on the support.
    pub equation: f64,
    /// Relative excess of the gradient over the multiplier off the support.
    pub complementarity: f64,
    /// Moment minus target (signal side), `δ` minus distance (noise side).
    pub constraint: f64,
    /// Sign function of `g⁰ - g₁` per variable (noise side), fitted in `[-1, 1]`.
    pub gamma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagrangeReport {
    pub groups: Vec<GroupResidual>,
    /// Largest `equation + complementarity` over the groups.
    pub residual: f64,
}

const SUPPORT_TOL: f64 = 1e-9;

/// Extremal-equation residuals at a feasible point with known gradients.
pub(crate) fn lagrange_at(problem: &MinimaxProblem, pt: &DiagPoint, grads: &CellGradients) -> Result<LagrangeReport> {
    let mut out = Vec::new();
    let dim = problem.dim();
    for g in problem.groups()? {
        let x: Vec<f64> = g.vars.iter().map(|&(i, k)| pt.get(g.side, i, k)).collect();
        let l: Vec<f64> = g.vars.iter().map(|&(i, k)| grads.diag(g.side, i, k)).collect();
        let xmax = x.iter().copied().fold(0.0, f64::max);
        let support: Vec<bool> = x.iter().map(|&v| v > SUPPORT_TOL * xmax.max(1e-300)).collect();
        let used: f64 = x.iter().zip(&g.r).map(|(a, b)| a * b).sum();
        let any = support.iter().any(|&s| s) && xmax > 0.0;
        // Least squares l ≈ m·r on the support, m ≥ 0.
        let (num, den) = (0..x.len()).filter(|&j| support[j]).fold((0.0, 0.0), |(n, d), j| (n + l[j] * g.r[j], d + g.r[j] * g.r[j]));
        let multiplier = if any {
            (num / den).max(0.0)
        } else {
            l.iter().zip(&g.r).map(|(a, b)| a / b).fold(0.0, f64::max)
        };
        let norm = l.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let eq = (0..x.len()).filter(|&j| support[j] && any).map(|j| (l[j] - multiplier * g.r[j]).powi(2)).sum::<f64>().sqrt() / norm;
        let comp = (0..x.len())
            .filter(|&j| !(support[j] && any))
            .map(|j| (l[j] - multiplier * g.r[j]).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
            / norm;
        let (side, constraint, gamma) = match g.side {
            Side::F => ("f", used - g.mass, None),
            Side::G => {
                let gamma = (0..x.len())
                    .map(|j| {
                        if support[j] && any {
                            1.0
                        } else if multiplier > 0.0 {
                            (l[j] / (multiplier * g.r[j])).clamp(-1.0, 1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                ("g", g.mass - used, Some(gamma))
            }
        };
        let coordinate = {
            let k0 = g.vars[0].1;
            (dim > 1 && g.vars.iter().all(|v| v.1 == k0)).then_some(k0)
        };
        out.push(GroupResidual {
            side: side.into(),
            coordinate,
            multiplier,
            equation: eq,
            complementarity: comp,
            constraint,
            gamma,
        });
    }
    let residual = out.iter().map(|r| r.equation + r.complementarity).fold(0.0, f64::max);
    Ok(LagrangeReport { groups: out, residual })
}

/// Residuals of the class's extremal equations at the candidate.
pub fn lagrange_residual(cand: &SaddleCandidate) -> Result<LagrangeReport> {
    lagrange_at(&cand.problem, &cand.point, &cand.gradients)
}
