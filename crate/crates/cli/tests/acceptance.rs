//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Run with `cargo test --release -p ps-increments-cli --test acceptance`.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ps_increments::estimator::chi;
use ps_increments::fixtures::{self, Fixture};
use ps_increments::increments::{apply_increment, d_coefficients, functional_value, CoefficientSet, Series};
use ps_increments::linalg::c;
use ps_increments::minimax::{
    least_favorable_search, perturbed_point, saddle_check, DiagPoint, FClass, GClass, GRadius, MinimaxProblem,
    SearchOptions,
};
use ps_increments::simulate::{monte_carlo_mse, oracle_sequence, MonteCarloConfig};
use ps_increments::spectra::{GridDensity, GridInterp};
use ps_increments::{CMat, CVec, Complex64, EstimationProblem, IncrementSpec, Result};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn within(elapsed: Duration, limit: Duration) -> (bool, String) {
    (elapsed <= limit, format!("{:.2}s of {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()))
}

fn problem(fx: &Fixture) -> Result<EstimationProblem> {
    EstimationProblem::new(fx.spec, fx.a.clone(), fx.pair.clone())
}

// 1. Pathwise decomposition of the functional on random cases.
fn pathwise() -> Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = |rng: &mut ChaCha8Rng| Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (n, mu, t, horizon) =
            (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(0..=8usize));
        let spec = IncrementSpec::new(n, mu, t, horizon)?;
        let a: Vec<CVec> = (0..=horizon).map(|_| CVec::from_fn(t, |_, _| z(&mut rng))).collect();
        let lag = n * mu;
        let zeta = Series::new(-(lag as i64), (0..=horizon + lag).map(|_| CVec::from_fn(t, |_, _| z(&mut rng))).collect());
        let set = CoefficientSet::new(spec, a.clone())?;
        let lhs = functional_value(&a, &zeta).expect("ζ covers the horizon");
        let inc = apply_increment(&zeta, n, mu)?;
        let b_part = functional_value(&set.b, &inc).expect("increments cover the horizon");
        let v_part: Complex64 = (1..=lag as i64).map(|k| set.v_at(-k).unwrap().dot(zeta.get(-k).unwrap())).sum();
        worst = worst.max((lhs - (b_part - v_part)).norm() / (1.0 + lhs.norm()));
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(5));
    outcome(worst <= 1e-10 && fast, format!("200 cases, worst relative {worst:.2e} (tol 1e-10), {time}"))
}

// 2. Closed-form d coefficients against the series (1 + x^μ + x^{2μ} + …)^n.
fn d_closed_form() -> Result<Outcome> {
    let start = Instant::now();
    let mut bad = 0;
    for n in 1..=5 {
        for mu in 1..=5 {
            let base: Vec<f64> = (0..=50).map(|k| if k % mu == 0 { 1.0 } else { 0.0 }).collect();
            let mut acc = vec![0.0; 51];
            acc[0] = 1.0;
            for _ in 0..n {
                let mut next = vec![0.0; 51];
                for (i, &p) in acc.iter().enumerate() {
                    for (j, &q) in base.iter().enumerate().take(51 - i) {
                        next[i + j] += p * q;
                    }
                }
                acc = next;
            }
            if d_coefficients(n, mu, 50) != acc {
                bad += 1;
            }
        }
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(1));
    outcome(bad == 0 && fast, format!("{bad} of 25 (n, μ) pairs differ, {time}"))
}

// 3. Bracket and integral forms of the error on all fixtures.
fn cross_form(family: &[Fixture]) -> Result<Outcome> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for fx in family {
        let sol = problem(fx)?.solve()?;
        worst = worst.max((sol.mse - sol.mse_integral()?).abs() / sol.mse.abs());
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(120));
    outcome(worst <= 1e-6 && fast, format!("{} fixtures, worst relative {worst:.2e} (tol 1e-6), {time}", family.len()))
}

// 4. Membership and orthogonality residuals.
fn projection(family: &[Fixture]) -> Result<Outcome> {
    let (mut mem, mut orth) = (0.0f64, 0.0f64);
    for fx in family {
        let sol = problem(fx)?.solve()?;
        mem = mem.max(sol.membership_residual()?);
        orth = orth.max(sol.orthogonality_residual(20)?);
    }
    outcome(mem <= 1e-6 && orth <= 1e-6, format!("membership {mem:.2e}, orthogonality {orth:.2e} (tol 1e-6)"))
}

// 5. Finite-window oracle on the scalar toy.
fn oracle() -> Result<Outcome> {
    let p = problem(&fixtures::scalar_toy())?;
    let delta = p.solve()?.mse;
    let seq = oracle_sequence(&p, &[8, 16, 32, 64])?;
    let dominates = seq.iter().all(|r| r.mse >= delta - 1e-6);
    let monotone = seq.windows(2).all(|w| w[1].mse <= w[0].mse);
    let rel = (seq[3].mse - delta) / delta;
    let list: Vec<String> = seq.iter().map(|r| format!("{:.8}", r.mse)).collect();
    outcome(
        dominates && monotone && rel <= 1e-3,
        format!("Δ = {delta:.8}, L = 8/16/32/64 → [{}], relative gap at 64 {rel:.2e} (tol 1e-3)", list.join(", ")),
    )
}

// 6. Monte Carlo on the scalar toy and a T = 2 fixture.
fn monte_carlo() -> Result<Outcome> {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for fx in [fixtures::scalar_toy(), fixtures::matrix_fixture()] {
        let sol = problem(&fx)?.solve()?;
        let r = monte_carlo_mse(&sol, &MonteCarloConfig::new(10_000, 128, 42))?;
        let bound = 3.0 * r.stderr + r.truncation_budget;
        pass &= (r.mean - r.delta).abs() <= bound;
        parts.push(format!("{} (T={}): mean {:.5} vs Δ {:.5}, |diff| {:.2e} ≤ {:.2e}", fx.name, fx.spec.period, r.mean, r.delta, (r.mean - r.delta).abs(), bound));
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(300));
    outcome(pass && fast, format!("{}; {time}", parts.join("; ")))
}

// 7. h = h1 - h2 at 50 frequencies.
fn decomposition(family: &[Fixture]) -> Result<Outcome> {
    let mut worst = 0.0f64;
    for fx in family {
        let sol = problem(fx)?.solve()?;
        let s = fx.spec;
        for i in 0..50 {
            let l = -PI + (i as f64 + 0.5) * 2.0 * PI / 50.0;
            let ch = sol.characteristic(l)?;
            let h = sol.h_over_chi(l)? * chi(l, s.n, s.mu);
            worst = worst.max((&h - (&ch.h1 - &ch.h2)).norm() / (1.0 + h.norm()));
        }
    }
    outcome(worst <= 1e-10, format!("worst relative {worst:.2e} at 50 frequencies (tol 1e-10)"))
}

fn toy_minimax(delta: f64, f_cells: usize) -> Result<MinimaxProblem> {
    let reference = GridDensity::new(
        GridInterp::Cell,
        (0..8).map(|i| CMat::from_element(1, 1, c(0.3 + 0.05 * (i as f64 - 3.5).abs()))).collect(),
    )?;
    let g = GClass::new(GRadius::G1 { delta }, reference)?;
    MinimaxProblem::new(IncrementSpec::new(1, 1, 1, 0)?, vec![CVec::from_element(1, c(1.0))], FClass::F2 { p: 1.0 }, g, f_cells)
}

// 8. Zero radius and a single f-cell leave nothing to move.
fn pinning() -> Result<Outcome> {
    let p = toy_minimax(0.0, 1)?;
    let cand = least_favorable_search(&p, &p.default_init()?, &SearchOptions::default())?;
    let exact = cand.g0 == p.g_class.reference;
    outcome(exact && cand.iterations == 1 && cand.converged, format!("g⁰ == g₁: {exact}, iterations {}", cand.iterations))
}

/// Brute-force maximum of Δ over the toy's feasible set. The toy is symmetric
/// under λ → -λ and Δ is concave in (q, g), so a symmetric maximizer exists;
/// the search runs over the four mirrored cells of q and of d = g - g₁: a
/// lattice scan of both simplices, then pairwise compass moves.
fn brute_force(p: &MinimaxProblem) -> Result<f64> {
    const Q_MASS: f64 = 4.0; // Σ_{8 cells} q / 8 = 1
    const D_MASS: f64 = 0.4; // Σ_{8 cells} d / 8 ≤ 0.1
    let value = |x: &[f64; 9]| -> f64 {
        let mirror = |v: &[f64]| -> Vec<Vec<f64>> { (0..8).map(|i| vec![v[i.min(7 - i)]]).collect() };
        let pt = DiagPoint { q: mirror(&x[..4]), d: mirror(&x[4..8]) };
        p.estimation_problem(&pt).and_then(|e| e.solve()).map(|s| s.mse).unwrap_or(f64::NEG_INFINITY)
    };
    fn compositions(parts: usize, k: usize) -> Vec<Vec<usize>> {
        if parts == 1 {
            return vec![vec![k]];
        }
        (0..=k).flat_map(|i| compositions(parts - 1, k - i).into_iter().map(move |mut v| { v.push(i); v })).collect()
    }
    let k = 5;
    let mut best = ([0.0; 9], f64::NEG_INFINITY);
    for qc in compositions(4, k) {
        for dc in compositions(5, k) {
            let mut x = [0.0; 9];
            for i in 0..4 {
                x[i] = Q_MASS * qc[i] as f64 / k as f64;
            }
            for i in 0..5 {
                x[4 + i] = D_MASS * dc[i] as f64 / k as f64;
            }
            let v = value(&x);
            if v > best.1 {
                best = (x, v);
            }
        }
    }
    // Slot 8 is the slack of the d-simplex and does not enter Δ.
    let blocks: [(std::ops::Range<usize>, f64); 2] = [(0..4, Q_MASS), (4..9, D_MASS)];
    let mut h = 1.0 / k as f64;
    while h > 1e-9 {
        let mut improved = false;
        for (range, mass) in blocks.iter() {
            for i in range.clone() {
                for j in range.clone() {
                    let t = (h * mass).min(best.0[i]);
                    if i == j || t <= 0.0 {
                        continue;
                    }
                    let mut y = best.0;
                    y[i] -= t;
                    y[j] += t;
                    let v = value(&y);
                    if v > best.1 {
                        best = (y, v);
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            h /= 2.0;
        }
    }
    Ok(best.1)
}

// 9. Toy minimax against brute force, saddle and Lagrange checks.
fn toy_optimality() -> Result<Outcome> {
    let p = toy_minimax(0.1, 8)?;
    let cand = least_favorable_search(&p, &p.default_init()?, &SearchOptions::default())?;
    let delta0 = cand.mse();
    let oracle = brute_force(&p)?;
    let diff = (delta0 - oracle).abs();
    let saddle = saddle_check(&cand, 100, 9)?;
    let perturbed = perturbed_point(&p, &cand.point, 0.01, 9)?;
    let frozen = SearchOptions { max_iter: 1, ..SearchOptions::default() };
    let at_perturbed = least_favorable_search(&p, &perturbed, &frozen)?.lagrange.residual;
    let at_optimum = cand.lagrange.residual;
    outcome(
        cand.converged && diff <= 1e-6 && saddle.worst() >= -1e-6 * delta0 && 10.0 * at_optimum <= at_perturbed,
        format!(
            "Δ⁰ = {delta0:.10}, brute force {oracle:.10}, |diff| {diff:.2e} (tol 1e-6); saddle margin {:.2e} ≥ {:.2e}; Lagrange residual {at_optimum:.2e} vs {at_perturbed:.2e} perturbed",
            saddle.worst(),
            -1e-6 * delta0
        ),
    )
}

const MATRIX: &str = r#"
spec = { n = 1, mu = 1, T = 2 }
a = [[1.0, 0.5], [-0.4, 0.8]]
seed = 11
f = { kind = "increment_compensated", n = 1, mu = 1, base = { kind = "moving_average", coeffs = [
    { re = [[1.0, 0.0], [0.3, 0.9]] },
    { re = [[0.4, 0.1], [-0.2, 0.3]] } ] } }
g = { kind = "constant", matrix = { re = [[0.04, 0.01], [0.01, 0.03]] } }

[simulate]
trials = 500
window = 32
"#;

const MINIMAX: &str = r#"
spec = { n = 1, mu = 1, T = 1 }
a = [[1.0]]
seed = 5

[minimax]
f_class = { kind = "f2", p = 1.0 }
g_class = { kind = "g1", delta = 0.1 }
g_reference = { kind = "constant", matrix = { re = [[0.3]] } }
"#;

fn run(cmd: &str, config: &Path, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_psinc"))
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

// 10. Every command twice with the same config and seed.
fn determinism() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let est = dir.path().join("p.toml");
    let mm = dir.path().join("m.toml");
    std::fs::write(&est, MATRIX)?;
    std::fs::write(&mm, MINIMAX)?;
    let runs: [(&str, &Path, &[&str]); 5] = [
        ("estimate", &est, &["solution.json", "filter.csv"]),
        ("mse", &est, &["mse.json"]),
        ("simulate", &est, &["montecarlo.json", "path.csv"]),
        ("verify", &est, &["verify.json"]),
        ("minimax", &mm, &["minimax.json", "q0.csv", "g0.csv"]),
    ];
    let mut differing = Vec::new();
    for (cmd, config, files) in runs {
        let (a, b) = (dir.path().join(format!("{cmd}-a")), dir.path().join(format!("{cmd}-b")));
        if !run(cmd, config, &a) || !run(cmd, config, &b) {
            differing.push(format!("{cmd} failed"));
            continue;
        }
        for f in files {
            if std::fs::read(a.join(f))? != std::fs::read(b.join(f))? {
                differing.push(format!("{cmd}/{f}"));
            }
        }
    }
    let pass = differing.is_empty();
    outcome(pass, if pass { "5 commands, 10 files byte-identical".into() } else { format!("differ: {}", differing.join(", ")) })
}

fn main() -> ExitCode {
    let family = fixtures::fixture_family();
    let criteria: Vec<(&str, Box<dyn Fn() -> Result<Outcome> + '_>)> = vec![
        ("pathwise decomposition", Box::new(pathwise)),
        ("d closed form", Box::new(d_closed_form)),
        ("error cross-form", Box::new(|| cross_form(&family))),
        ("projection conditions", Box::new(|| projection(&family))),
        ("oracle dominance and convergence", Box::new(oracle)),
        ("Monte Carlo consistency", Box::new(monte_carlo)),
        ("h = h1 - h2", Box::new(|| decomposition(&family))),
        ("minimax degenerate pinning", Box::new(pinning)),
        ("minimax toy optimality", Box::new(toy_optimality)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check().unwrap_or_else(|e| Outcome { pass: false, detail: format!("error: {e}") });
        failed += usize::from(!o.pass);
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
