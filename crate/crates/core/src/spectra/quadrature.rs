//! Adaptive Gauss–Kronrod quadrature for vector-valued complex integrands on
//! `[-π, π)`, plus a fixed composite Gauss–Legendre rule for tabulating an
//! integrand once and reusing it against many exponentials.
//!
//! Hinted points become panel boundaries, so the rule never samples them. A
//! hint marked singular gets a quadratic change of variables on the panels
//! that touch it, which turns `|λ - λ₀|^{-1/2}`-type endpoint behaviour into a
//! smooth integrand.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::Complex64;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// A point inside the integration range that must be a panel boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hint {
    pub at: f64,
    /// Integrable endpoint singularity: use the quadratic substitution.
    pub singular: bool,
}

impl Hint {
    pub fn regular(at: f64) -> Self {
        Self { at, singular: false }
    }
    pub fn singular(at: f64) -> Self {
        Self { at, singular: true }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Panels per hint-delimited segment before refinement.
    pub initial_panels: usize,
    pub max_panels: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { abs_tol: 1e-12, rel_tol: 1e-11, initial_panels: 8, max_panels: 200_000 }
    }
}

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: Vec<Complex64>,
    pub error: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    sing_a: bool,
    sing_b: bool,
}

struct PanelEstimate {
    kronrod: Vec<Complex64>,
    error: f64,
}

fn max_abs(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl Panel {
    /// Map `t ∈ [-1, 1]` to `(λ, dλ/dt)`.
    fn map(&self, t: f64) -> (f64, f64) {
        let half = 0.5 * (self.b - self.a);
        match (self.sing_a, self.sing_b) {
            (true, false) => {
                let u = 0.5 * (t + 1.0);
                (self.a + (self.b - self.a) * u * u, (self.b - self.a) * u)
            }
            (false, true) => {
                let u = 0.5 * (1.0 - t);
                (self.b - (self.b - self.a) * u * u, (self.b - self.a) * u)
            }
            _ => (self.a + half * (t + 1.0), half),
        }
    }

    fn estimate<F>(&self, f: &F) -> PanelEstimate
    where
        F: Fn(f64) -> Vec<Complex64> + ?Sized,
    {
        let mut kronrod: Vec<Complex64> = Vec::new();
        let mut gauss: Vec<Complex64> = Vec::new();
        let mut add = |t: f64, wk: f64, wg: f64| {
            let (x, jac) = self.map(t);
            let fx = f(x);
            if kronrod.is_empty() {
                kronrod = vec![Complex64::default(); fx.len()];
                gauss = vec![Complex64::default(); fx.len()];
            }
            for ((k, g), v) in kronrod.iter_mut().zip(gauss.iter_mut()).zip(fx) {
                *k += v * (wk * jac);
                if wg != 0.0 {
                    *g += v * (wg * jac);
                }
            }
        };
        add(0.0, WGK[7], WG[3]);
        for j in 0..7 {
            let wg = if j % 2 == 1 { WG[j / 2] } else { 0.0 };
            add(XGK[j], WGK[j], wg);
            add(-XGK[j], WGK[j], wg);
        }
        let diff: Vec<Complex64> = kronrod.iter().zip(&gauss).map(|(k, g)| k - g).collect();
        let raw = max_abs(&diff);
        // QUADPACK-style sharpening of the Gauss/Kronrod difference.
        let error = if raw > 0.0 { raw * (200.0 * raw / max_abs(&kronrod).max(1e-300)).powf(1.5).min(1.0) } else { 0.0 };
        let error = error.max(raw * 1e-3).max(50.0 * f64::EPSILON * max_abs(&kronrod) * 1e-2);
        PanelEstimate { kronrod, error }
    }

    fn split(&self) -> (Panel, Panel) {
        let mid = 0.5 * (self.a + self.b);
        (
            Panel { a: self.a, b: mid, sing_a: self.sing_a, sing_b: false },
            Panel { a: mid, b: self.b, sing_a: false, sing_b: self.sing_b },
        )
    }
}

impl Quadrature {
    pub fn with_tol(tol: f64) -> Self {
        Self { abs_tol: tol * 0.1, rel_tol: tol, ..Self::default() }
    }

    /// Segments of `[lo, hi]` cut at the hints inside it.
    fn segments(lo: f64, hi: f64, hints: &[Hint]) -> Vec<Panel> {
        let mut cuts: Vec<Hint> = hints.iter().copied().filter(|h| h.at > lo && h.at < hi).collect();
        cuts.sort_by(|x, y| x.at.total_cmp(&y.at));
        cuts.dedup_by(|x, y| {
            if (x.at - y.at).abs() < 1e-14 {
                y.singular |= x.singular;
                true
            } else {
                false
            }
        });
        let mut out = Vec::new();
        let mut prev = Hint { at: lo, singular: hints.iter().any(|h| h.singular && (h.at - lo).abs() < 1e-14) };
        for h in cuts.into_iter().chain(std::iter::once(Hint {
            at: hi,
            singular: hints.iter().any(|h| h.singular && (h.at - hi).abs() < 1e-14),
        })) {
            out.push(Panel { a: prev.at, b: h.at, sing_a: prev.singular, sing_b: h.singular });
            prev = h;
        }
        out
    }

    /// `∫_{lo}^{hi} f(λ) dλ` for a vector-valued integrand of fixed length.
    pub fn integrate<F>(&self, f: &F, lo: f64, hi: f64, hints: &[Hint]) -> Result<QuadResult>
    where
        F: Fn(f64) -> Vec<Complex64> + Sync + ?Sized,
    {
        let mut panels: Vec<Panel> = Vec::new();
        for seg in Self::segments(lo, hi, hints) {
            let mut parts = vec![seg];
            while parts.len() < self.initial_panels {
                parts = parts.iter().flat_map(|p| {
                    let (l, r) = p.split();
                    [l, r]
                }).collect();
            }
            panels.extend(parts);
        }
        let total_len = hi - lo;
        let mut done: Vec<Complex64> = Vec::new();
        let mut done_err = 0.0;
        let mut previous_total: Option<Vec<Complex64>> = None;
        let mut used = panels.len();

        loop {
            let estimates: Vec<PanelEstimate> = panels.par_iter().map(|p| p.estimate(f)).collect();
            let mut total = done.clone();
            let mut total_err = done_err;
            for e in &estimates {
                if total.is_empty() {
                    total = vec![Complex64::default(); e.kronrod.len()];
                }
                for (t, k) in total.iter_mut().zip(&e.kronrod) {
                    *t += k;
                }
                total_err += e.error;
            }
            let target = self.abs_tol.max(self.rel_tol * max_abs(&total));
            if total_err <= target {
                return Ok(QuadResult { value: total, error: total_err, panels: used });
            }
            if panels.is_empty() {
                // Every remaining panel hit the width floor without meeting
                // its share of the tolerance.
                let prev = previous_total.unwrap_or_else(|| total.clone());
                return Err(Error::Convergence { diff: total_err, tol: target, last: max_abs(&total), previous: max_abs(&prev) });
            }

            let mut next = Vec::new();
            for (p, e) in panels.iter().zip(estimates) {
                let local = target * (p.b - p.a) / total_len;
                if e.error <= local || (p.b - p.a) < 1e-13 * total_len {
                    if done.is_empty() {
                        done = vec![Complex64::default(); e.kronrod.len()];
                    }
                    for (t, k) in done.iter_mut().zip(&e.kronrod) {
                        *t += k;
                    }
                    done_err += e.error;
                } else {
                    let (l, r) = p.split();
                    next.push(l);
                    next.push(r);
                }
            }
            used += next.len() / 2;
            if used > self.max_panels {
                let prev = previous_total.unwrap_or_else(|| total.clone());
                let diff: Vec<Complex64> = total.iter().zip(&prev).map(|(a, b)| a - b).collect();
                return Err(Error::Convergence {
                    diff: total_err.max(max_abs(&diff)),
                    tol: target,
                    last: max_abs(&total),
                    previous: max_abs(&prev),
                });
            }
            previous_total = Some(total);
            panels = next;
        }
    }

    pub fn integrate_scalar<F>(&self, f: &F, lo: f64, hi: f64, hints: &[Hint]) -> Result<Complex64>
    where
        F: Fn(f64) -> Complex64 + Sync,
    {
        let g = |x: f64| vec![f(x)];
        Ok(self.integrate(&g, lo, hi, hints)?.value[0])
    }

    /// `∫_{-π}^{π}` shorthand.
    pub fn integrate_circle<F>(&self, f: &F, hints: &[Hint]) -> Result<QuadResult>
    where
        F: Fn(f64) -> Vec<Complex64> + Sync + ?Sized,
    {
        self.integrate(f, -PI, PI, hints)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 0 { 1.0 } else { p1 };
            dp = n * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        nodes[order - 1 - i] = -x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule on `[-π, π)` whose panel boundaries include
/// the hinted points. Nodes never coincide with a boundary.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(panels: usize, order: usize, hints: &[f64]) -> Self {
        let (gx, gw) = gauss_legendre(order);
        let mut cuts: Vec<f64> = (0..=panels).map(|i| -PI + 2.0 * PI * i as f64 / panels as f64).collect();
        cuts.extend(hints.iter().copied().filter(|h| *h > -PI && *h < PI));
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut nodes = Vec::with_capacity(cuts.len() * order);
        let mut weights = Vec::with_capacity(cuts.len() * order);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            for (x, wt) in gx.iter().zip(&gw) {
                nodes.push(a + half * (x + 1.0));
                weights.push(wt * half);
            }
        }
        Self { nodes, weights }
    }
}
