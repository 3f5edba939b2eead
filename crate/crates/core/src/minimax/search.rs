use serde::{Deserialize, Serialize};

use super::objective::{cell_gradients, CellGradients, Context};
use super::verify::{lagrange_at, LagrangeReport};
use super::{DiagPoint, Group, MinimaxProblem};
use crate::error::Result;
use crate::estimator::EstimateSolution;
use crate::spectra::{GridDensity, SpectralDensity};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Stop when the duality gap is below `tol · Δ`. The gap is first order
    /// in the distance to the optimum, so values much below `√ε` stall.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative derivative tolerance of the line search.
    pub line_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, line_tol: 1e-6 }
    }
}

/// Result of the least-favorable search. `converged == false` means the
/// iteration budget ran out or the line search stalled; the candidate is
/// still the best point seen.
#[derive(Debug, Clone)]
pub struct SaddleCandidate {
    pub problem: MinimaxProblem,
    pub point: DiagPoint,
    /// Increment density `q⁰ = gain·f⁰` on the f-grid.
    pub q0: GridDensity,
    pub f0: SpectralDensity,
    pub g0: GridDensity,
    pub solution0: EstimateSolution,
    pub gradients: CellGradients,
    /// `Δ` after each accepted iteration, starting with the initial point.
    pub history: Vec<f64>,
    /// Duality gap `max_{feasible} Δ(h; ·) - Δ(h; current)` per iteration.
    pub gaps: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub lagrange: LagrangeReport,
}

impl SaddleCandidate {
    pub fn mse(&self) -> f64 {
        self.solution0.mse
    }
}

struct State {
    point: DiagPoint,
    solution: EstimateSolution,
    grads: CellGradients,
}

fn evaluate(problem: &MinimaxProblem, point: DiagPoint) -> Result<State> {
    let solution = problem.estimation_problem(&point)?.solve()?;
    let grads = cell_gradients(&Context::new(solution.clone()), problem.f_cells, problem.g_class.reference.cells())?;
    Ok(State { point, solution, grads })
}

/// Per-group view in mass-fraction coordinates `θ_v = r_v x_v / mass`; the
/// slack vertex of a g-group is last, with zero gradient.
struct Simplex {
    theta: Vec<f64>,
    grad: Vec<f64>,
}

fn simplex(group: &Group, st: &State) -> Option<Simplex> {
    if group.mass <= 0.0 {
        return None;
    }
    let mut theta: Vec<f64> = group.vars.iter().zip(&group.r).map(|(&(i, k), r)| r * st.point.get(group.side, i, k) / group.mass).collect();
    let mut grad: Vec<f64> = group.vars.iter().zip(&group.r).map(|(&(i, k), r)| st.grads.diag(group.side, i, k) * group.mass / r).collect();
    if group.slack {
        theta.push((1.0 - theta.iter().sum::<f64>()).max(0.0));
        grad.push(0.0);
    }
    Some(Simplex { theta, grad })
}

fn gap(groups: &[Group], st: &State) -> f64 {
    groups
        .iter()
        .filter_map(|g| simplex(g, st))
        .map(|s| {
            let best = s.grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let cur: f64 = s.theta.iter().zip(&s.grad).map(|(t, g)| t * g).sum();
            (best - cur).max(0.0)
        })
        .sum()
}

/// Pairwise direction within one group: move the mass of the worst
/// supported vertex onto the best vertex. Returned as `(side, cell, k, change)`
/// on the search variables at step length 1.
fn direction(g: &Group, st: &State) -> Vec<(super::Side, usize, usize, f64)> {
    let mut out = Vec::new();
    let Some(s) = simplex(g, st) else { return out };
    let fw = (0..s.grad.len()).max_by(|&a, &b| s.grad[a].total_cmp(&s.grad[b])).unwrap();
    let away = (0..s.grad.len()).filter(|&j| s.theta[j] > 1e-15).min_by(|&a, &b| s.grad[a].total_cmp(&s.grad[b]));
    let Some(away) = away else { return out };
    if fw == away || s.grad[fw] <= s.grad[away] {
        return out;
    }
    let moved = s.theta[away] * g.mass;
    let nv = g.vars.len();
    if fw < nv {
        let (i, k) = g.vars[fw];
        out.push((g.side, i, k, moved / g.r[fw]));
    }
    if away < nv {
        let (i, k) = g.vars[away];
        out.push((g.side, i, k, -st.point.get(g.side, i, k)));
    }
    out
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &v) in u.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (j + 1) as f64;
        if v - t > 0.0 {
            tau = t;
        }
    }
    y.iter().map(|v| (v - tau).max(0.0)).collect()
}

/// Projected-gradient direction within one group, `proj(θ + τ∇) - θ` in
/// mass-fraction coordinates.
fn projected_direction(g: &Group, st: &State, tau: f64) -> Vec<(super::Side, usize, usize, f64)> {
    let Some(s) = simplex(g, st) else { return Vec::new() };
    let y: Vec<f64> = s.theta.iter().zip(&s.grad).map(|(t, d)| t + tau * d).collect();
    let target = project_simplex(&y);
    g.vars
        .iter()
        .enumerate()
        .filter_map(|(j, &(i, k))| {
            let dv = (target[j] - s.theta[j]) * g.mass / g.r[j];
            let dv = if target[j] == 0.0 { -st.point.get(g.side, i, k) } else { dv };
            (dv != 0.0).then_some((g.side, i, k, dv))
        })
        .collect()
}

fn step(point: &DiagPoint, dir: &[(super::Side, usize, usize, f64)], gamma: f64) -> DiagPoint {
    let mut p = point.clone();
    for &(side, i, k, dv) in dir {
        let v = p.get(side, i, k) + gamma * dv;
        p.set(side, i, k, v.max(0.0));
    }
    // A full drop step lands exactly on zero.
    if gamma == 1.0 {
        for &(side, i, k, dv) in dir {
            if dv < 0.0 && dv == -point.get(side, i, k) {
                p.set(side, i, k, 0.0);
            }
        }
    }
    p
}

fn slope(st: &State, dir: &[(super::Side, usize, usize, f64)]) -> f64 {
    dir.iter().map(|&(side, i, k, dv)| st.grads.diag(side, i, k) * dv).sum()
}

/// Newton direction on the current face: free variables are the supported
/// ones; groups whose constraint is tight keep their weighted mass. The
/// Hessian comes from forward differences of the cell gradients. The step is
/// shortened so that no variable turns negative.
fn newton_direction(problem: &MinimaxProblem, groups: &[Group], cur: &State) -> Option<Vec<(super::Side, usize, usize, f64)>> {
    let mut vars: Vec<(super::Side, usize, usize)> = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for g in groups {
        let s = simplex(g, cur)?;
        let xmax = g.vars.iter().map(|&(i, k)| cur.point.get(g.side, i, k)).fold(0.0, f64::max);
        let mut row = Vec::new();
        for (j, &(i, k)) in g.vars.iter().enumerate() {
            if s.theta[j] > 1e-12 && cur.point.get(g.side, i, k) > 1e-9 * xmax {
                row.push((vars.len(), g.r[j]));
                vars.push((g.side, i, k));
            }
        }
        let tight = !g.slack || s.theta.last().is_some_and(|t| *t <= 1e-12);
        if tight && !row.is_empty() {
            rows.push(row);
        }
    }
    let m = vars.len();
    if m == 0 {
        return None;
    }
    let grad = |st: &State| -> Vec<f64> { vars.iter().map(|&(side, i, k)| st.grads.diag(side, i, k)).collect() };
    let g0 = grad(cur);
    let mut hess = nalgebra::DMatrix::<f64>::zeros(m, m);
    for (j, &(side, i, k)) in vars.iter().enumerate() {
        let x = cur.point.get(side, i, k);
        let h = 1e-5 * x.max(1e-3);
        let mut p = cur.point.clone();
        p.set(side, i, k, x + h);
        let st = evaluate(problem, p).ok()?;
        for (r, v) in grad(&st).iter().enumerate() {
            hess[(r, j)] = (v - g0[r]) / h;
        }
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    let nc = rows.len();
    let mut kkt = nalgebra::DMatrix::<f64>::zeros(m + nc, m + nc);
    kkt.view_mut((0, 0), (m, m)).copy_from(&hess);
    let mut rhs = nalgebra::DVector::<f64>::zeros(m + nc);
    for j in 0..m {
        rhs[j] = -g0[j];
    }
    for (c, row) in rows.iter().enumerate() {
        for &(j, r) in row {
            kkt[(m + c, j)] = r;
            kkt[(j, m + c)] = r;
        }
    }
    let sol = kkt.lu().solve(&rhs)?;
    let step: Vec<f64> = (0..m).map(|j| sol[j]).collect();
    if step.iter().zip(&g0).map(|(a, b)| a * b).sum::<f64>() <= 0.0 {
        return None;
    }
    let mut limit = 1.0;
    let mut limiting = None;
    for (j, &(side, i, k)) in vars.iter().enumerate() {
        if step[j] < 0.0 {
            let t = cur.point.get(side, i, k) / -step[j];
            if t < limit {
                limit = t;
                limiting = Some(j);
            }
        }
    }
    Some(
        vars.iter()
            .enumerate()
            .map(|(j, &(side, i, k))| {
                let dv = if Some(j) == limiting { -cur.point.get(side, i, k) } else { step[j] * limit };
                (side, i, k, dv)
            })
            .collect(),
    )
}

/// Maximize `γ ↦ Δ(x + γD)` on `[0, 1]`. `Δ` is concave along the segment, so
/// the root of its derivative is bracketed by Illinois false position; a point
/// where the problem cannot be solved is treated as lying past the maximum.
/// Returns the best evaluated point.
fn line_search(problem: &MinimaxProblem, cur: &State, dir: &[(super::Side, usize, usize, f64)], d0: f64, tol: f64) -> Option<State> {
    let at = |gamma: f64| -> Option<(State, f64)> {
        let st = evaluate(problem, step(&cur.point, dir, gamma)).ok()?;
        let d = slope(&st, dir);
        Some((st, d))
    };
    let mut best: Option<State> = None;
    let keep = |st: State, best: &mut Option<State>| {
        if best.as_ref().is_none_or(|b| st.solution.mse > b.solution.mse) {
            *best = Some(st);
        }
    };
    let (mut b, mut db) = (1.0, None);
    if let Some((st, d1)) = at(1.0) {
        if d1 >= 0.0 {
            return Some(st);
        }
        db = Some(d1);
        keep(st, &mut best);
    }
    let (mut a, mut da) = (0.0, d0);
    let mut last = 0i8;
    for _ in 0..60 {
        let m = match db {
            Some(db) => {
                let t = (a * db - b * da) / (db - da);
                if t.is_finite() && t > a && t < b {
                    t
                } else {
                    0.5 * (a + b)
                }
            }
            None => 0.5 * (a + b),
        };
        match at(m) {
            Some((st, dm)) => {
                keep(st, &mut best);
                if dm.abs() <= tol * d0.abs() {
                    break;
                }
                if dm > 0.0 {
                    a = m;
                    da = dm;
                    if last == 1 {
                        if let Some(v) = db.as_mut() {
                            *v *= 0.5;
                        }
                    }
                    last = 1;
                } else {
                    b = m;
                    db = Some(dm);
                    if last == -1 {
                        da *= 0.5;
                    }
                    last = -1;
                }
            }
            None => {
                b = m;
                db = None;
            }
        }
        if b - a < 1e-12 {
            break;
        }
    }
    best
}

/// Search for least favorable densities: pairwise Frank–Wolfe ascent of the
/// (concave) optimal error over the gridded classes. Each iteration solves the
/// best-response LP through the gradient, moves toward it with an exact line
/// search, and records `Δ` and the duality gap. The candidate's `h⁰` satisfies
/// `Δ(h⁰; f, g) ≤ Δ + gap` for every feasible grid pair.
pub fn least_favorable_search(problem: &MinimaxProblem, init: &DiagPoint, opts: &SearchOptions) -> Result<SaddleCandidate> {
    problem.check_feasible(init, 1e-8)?;
    let groups = problem.groups()?;
    let mut cur = evaluate(problem, init.clone())?;
    let mut history = vec![cur.solution.mse];
    let mut gaps = Vec::new();
    let mut converged = false;
    let mut iterations = 1;
    let mut memory: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; groups.len()];
    loop {
        let g = gap(&groups, &cur);
        gaps.push(g);
        if g <= opts.tol * cur.solution.mse.abs() {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        // One sweep: in every group a projected-gradient step (Barzilai–Borwein
        // length from the group's previous step) and then a pairwise step.
        let mut moved = false;
        for (gi, group) in groups.iter().enumerate() {
            for kind in 0..2 {
                let Some(s) = simplex(group, &cur) else { continue };
                let dir = if kind == 0 {
                    let spread = s.grad.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                        - s.grad.iter().copied().fold(f64::INFINITY, f64::min);
                    let tau = match &memory[gi] {
                        Some((t0, g0)) => {
                            let dt: Vec<f64> = s.theta.iter().zip(t0).map(|(a, b)| a - b).collect();
                            let dg: f64 = dt.iter().zip(s.grad.iter().zip(g0)).map(|(d, (a, b))| d * (a - b)).sum();
                            let tt: f64 = dt.iter().map(|d| d * d).sum();
                            if dg < 0.0 && tt > 0.0 { tt / -dg } else { 1.0 / spread.max(1e-300) }
                        }
                        None => 1.0 / spread.max(1e-300),
                    };
                    memory[gi] = Some((s.theta.clone(), s.grad.clone()));
                    projected_direction(group, &cur, tau)
                } else {
                    direction(group, &cur)
                };
                let d0 = slope(&cur, &dir);
                if dir.is_empty() || d0 <= 0.0 {
                    continue;
                }
                let Some(next) = line_search(problem, &cur, &dir, d0, opts.line_tol) else { continue };
                if next.solution.mse > cur.solution.mse {
                    history.push(next.solution.mse);
                    cur = next;
                    moved = true;
                }
            }
        }
        if let Some(dir) = newton_direction(problem, &groups, &cur) {
            let d0 = slope(&cur, &dir);
            if d0 > 0.0 {
                if let Some(next) = line_search(problem, &cur, &dir, d0, opts.line_tol) {
                    if next.solution.mse > cur.solution.mse {
                        history.push(next.solution.mse);
                        cur = next;
                        moved = true;
                    }
                }
            }
        }
        iterations += 1;
        if !moved {
            break;
        }
    }
    let lagrange = lagrange_at(problem, &cur.point, &cur.grads)?;
    let (f0, _) = problem.densities(&cur.point);
    Ok(SaddleCandidate {
        problem: problem.clone(),
        q0: problem.q_grid(&cur.point),
        g0: problem.g_grid(&cur.point),
        f0,
        point: cur.point,
        solution0: cur.solution,
        gradients: cur.grads,
        history,
        gaps,
        iterations,
        converged,
        lagrange,
    })
}
