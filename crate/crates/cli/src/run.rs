use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use ps_increments::estimator::chi;
use ps_increments::io::{write_filter_csv, write_grid_csv, write_json_file, write_path_csv, SolutionReport};
use ps_increments::minimax::{
    least_favorable_search, saddle_check, GClass, LagrangeReport, MinimaxProblem, SaddleReport, SearchOptions,
};
use ps_increments::simulate::{finite_window_oracle, monte_carlo_mse, synthesize_pair, Anchor, MonteCarloConfig, DEFAULT_GRID};
use ps_increments::spectra::{minimality_integral, MinimalityReport, Quadrature};
use ps_increments::{EstimateSolution, EstimationProblem, Error, Result};

use crate::config::{load_cell_grid, Config, Problem};

/// Command-line overrides of config values.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub trials: Option<usize>,
    pub window: Option<usize>,
    pub grid: Option<usize>,
}

pub struct Ctx {
    pub cfg: Config,
    pub base: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub quad: Quadrature,
    pub ov: Overrides,
}

impl Ctx {
    pub fn new(config: &Path, ov: Overrides) -> Result<Self> {
        let (cfg, base) = Config::load(config)?;
        let out = ov.out.clone().or_else(|| cfg.out.as_ref().map(|p| base.join(p))).unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out)?;
        let tol = ov.tol.or(cfg.tol);
        let quad = match tol {
            Some(t) if !(t > 0.0 && t < 1.0) => return Err(Error::InvalidParameter(format!("tolerance {t} outside (0, 1)"))),
            Some(t) => Quadrature::with_tol(t),
            None => Quadrature::default(),
        };
        let seed = ov.seed.or(cfg.seed).unwrap_or(0);
        Ok(Self { cfg, base, out, seed, quad, ov })
    }

    fn problem(&self) -> Result<Problem> {
        self.cfg.problem(&self.base)
    }

    fn estimation(&self) -> Result<EstimationProblem> {
        let p = self.problem()?;
        let pair = p.pair.ok_or_else(|| Error::InvalidParameter("this command needs densities `f` and `g`".into()))?;
        Ok(EstimationProblem::new(p.spec, p.a, pair)?.with_quadrature(self.quad))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn window(&self) -> usize {
        self.ov.window.or(self.cfg.simulate.window).unwrap_or(128)
    }
}

#[derive(Serialize)]
struct EstimateOut {
    solution: SolutionReport,
    minimality: MinimalityReport,
    filter_radius: usize,
    filter_tail: f64,
}

pub fn estimate(ctx: &Ctx) -> Result<()> {
    let prob = ctx.estimation()?;
    let minimality = minimality_integral(&prob.pair, &prob.quad)?;
    let sol = prob.solve()?;
    let filter = match ctx.cfg.filter_radius {
        Some(r) => sol.filter(r)?,
        None => sol.filter_auto(16, 1e-8, 1024)?,
    };
    let wide = sol.filter(2 * filter.radius())?;
    write_json_file(
        &ctx.path("solution.json"),
        &EstimateOut {
            solution: SolutionReport::new(&sol),
            minimality,
            filter_radius: filter.radius(),
            filter_tail: wide.tail_norm(filter.radius()),
        },
    )?;
    write_filter_csv(BufWriter::new(File::create(ctx.path("filter.csv"))?), &filter)
}

#[derive(Serialize)]
struct MseOut {
    bracket: f64,
    integral: f64,
    relative_difference: f64,
    system_term: f64,
    noise_term: f64,
}

pub fn mse(ctx: &Ctx) -> Result<()> {
    let sol = ctx.estimation()?.solve()?;
    let integral = sol.mse_integral()?;
    write_json_file(
        &ctx.path("mse.json"),
        &MseOut {
            bracket: sol.mse,
            integral,
            relative_difference: (sol.mse - integral).abs() / sol.mse.abs().max(f64::MIN_POSITIVE),
            system_term: sol.system_term,
            noise_term: sol.noise_term,
        },
    )
}

#[derive(Serialize)]
struct MinimaxOut {
    mse: f64,
    converged: bool,
    iterations: usize,
    history: Vec<f64>,
    gaps: Vec<f64>,
    lagrange: LagrangeReport,
    saddle: SaddleReport,
}

pub fn minimax(ctx: &Ctx) -> Result<()> {
    let mc = ctx.cfg.minimax.as_ref().ok_or_else(|| Error::InvalidParameter("config has no [minimax] section".into()))?;
    let p = ctx.problem()?;
    let reference = load_cell_grid(&mc.g_reference, &ctx.base, mc.g_cells)?;
    let g_class = GClass::new(mc.g_class.clone(), reference)?;
    let mut problem = MinimaxProblem::new(p.spec, p.a, mc.f_class.clone(), g_class, mc.f_cells)?;
    problem.quad = ctx.quad;
    let init = match (&mc.init_q, &mc.init_g) {
        (None, None) => problem.default_init()?,
        (q, g) => {
            let q = match q {
                Some(q) => load_cell_grid(q, &ctx.base, mc.f_cells)?,
                None => problem.q_grid(&problem.default_init()?),
            };
            let g = match g {
                Some(g) => load_cell_grid(g, &ctx.base, mc.g_cells)?,
                None => problem.g_class.reference.clone(),
            };
            problem.point_from_grids(&q, &g)?
        }
    };
    let defaults = SearchOptions::default();
    let opts = SearchOptions {
        tol: mc.tol.unwrap_or(defaults.tol),
        max_iter: mc.max_iter.unwrap_or(defaults.max_iter),
        ..defaults
    };
    let cand = least_favorable_search(&problem, &init, &opts)?;
    let saddle = saddle_check(&cand, mc.saddle_samples, ctx.seed)?;
    write_grid_csv(BufWriter::new(File::create(ctx.path("q0.csv"))?), &cand.q0)?;
    write_grid_csv(BufWriter::new(File::create(ctx.path("g0.csv"))?), &cand.g0)?;
    write_json_file(
        &ctx.path("minimax.json"),
        &MinimaxOut {
            mse: cand.mse(),
            converged: cand.converged,
            iterations: cand.iterations,
            history: cand.history.clone(),
            gaps: cand.gaps.clone(),
            lagrange: cand.lagrange.clone(),
            saddle,
        },
    )
}

pub fn simulate(ctx: &Ctx) -> Result<()> {
    let sol = ctx.estimation()?.solve()?;
    let sc = &ctx.cfg.simulate;
    let cfg = MonteCarloConfig {
        trials: ctx.ov.trials.or(sc.trials).unwrap_or(10_000),
        window: ctx.window(),
        seed: ctx.seed,
        grid: ctx.ov.grid.or(sc.grid).unwrap_or(DEFAULT_GRID),
        anchor: if sc.random_anchor { Anchor::Random } else { Anchor::Zero },
    };
    let report = monte_carlo_mse(&sol, &cfg)?;
    let paths = synthesize_pair(sol.pair(), sol.spec().horizon, cfg.window, ctx.seed)?;
    write_path_csv(BufWriter::new(File::create(ctx.path("path.csv"))?), paths.zeta.start, &paths.zeta.values)?;
    write_json_file(&ctx.path("montecarlo.json"), &report)
}

#[derive(Serialize)]
struct VerifyOut {
    mse: f64,
    mse_integral: f64,
    cross_form: f64,
    membership: f64,
    orthogonality: f64,
    /// Largest `|h - (h₁ - h₂)|` at 50 frequencies, relative to `max |h|`.
    decomposition: f64,
    oracle_window: Option<usize>,
    oracle_mse: Option<f64>,
}

fn decomposition_residual(sol: &EstimateSolution) -> Result<f64> {
    let s = *sol.spec();
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for i in 0..50 {
        let l = -PI + (i as f64 + 0.5) * 2.0 * PI / 50.0;
        let Ok(ch) = sol.characteristic(l) else { continue };
        let h = sol.h_over_chi(l)? * chi(l, s.n, s.mu);
        worst = worst.max((&h - (&ch.h1 - &ch.h2)).norm());
        scale = scale.max(h.norm());
    }
    Ok(worst / scale.max(1e-300))
}

pub fn verify(ctx: &Ctx) -> Result<()> {
    let prob = ctx.estimation()?;
    let sol = prob.solve()?;
    let integral = sol.mse_integral()?;
    let oracle_window = ctx.ov.window.or(ctx.cfg.simulate.window);
    let oracle_mse = match oracle_window {
        Some(l) => Some(finite_window_oracle(&prob, l)?.mse),
        None => None,
    };
    write_json_file(
        &ctx.path("verify.json"),
        &VerifyOut {
            mse: sol.mse,
            mse_integral: integral,
            cross_form: (sol.mse - integral).abs() / sol.mse.abs().max(f64::MIN_POSITIVE),
            membership: sol.membership_residual()?,
            orthogonality: sol.orthogonality_residual(20)?,
            decomposition: decomposition_residual(&sol)?,
            oracle_window,
            oracle_mse,
        },
    )
}
