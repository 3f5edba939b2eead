//! Problem configuration (TOML, or JSON by extension).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use ps_increments::increments::block_coefficients;
use ps_increments::minimax::{FClass, GRadius};
use ps_increments::spectra::{GridDensity, GridInterp};
use ps_increments::{fixtures, CVec, Complex64, DensityPair, Error, IncrementSpec, Result, SpectralDensity};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Named reference problem; replaces `spec`, weights and densities.
    pub fixture: Option<String>,
    pub spec: Option<SpecConfig>,
    /// Vector weights `a(k)` per time index (real parts).
    pub a: Option<Vec<Vec<f64>>>,
    pub a_im: Option<Vec<Vec<f64>>>,
    /// Scalar weights `a_θ(m)`, blocked with period `T`.
    pub a_theta: Option<Vec<f64>>,
    pub a_theta_im: Option<Vec<f64>>,
    pub f: Option<DensityConfig>,
    pub g: Option<DensityConfig>,
    /// Relative quadrature tolerance.
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub filter_radius: Option<usize>,
    #[serde(default)]
    pub simulate: SimulateConfig,
    pub minimax: Option<MinimaxConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub n: usize,
    pub mu: usize,
    #[serde(alias = "T")]
    pub period: usize,
    /// Derived from the weights when absent.
    #[serde(alias = "N")]
    pub horizon: Option<usize>,
}

/// A density model, or a grid CSV (optionally increment-compensated).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DensityConfig {
    Csv {
        csv: PathBuf,
        #[serde(default)]
        compensated: bool,
    },
    Model(SpectralDensity),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub trials: Option<usize>,
    pub window: Option<usize>,
    pub grid: Option<usize>,
    #[serde(default)]
    pub random_anchor: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimaxConfig {
    pub f_class: FClass,
    pub g_class: GRadius,
    pub g_reference: DensityConfig,
    #[serde(default = "default_cells")]
    pub f_cells: usize,
    #[serde(default = "default_cells")]
    pub g_cells: usize,
    /// Initial increment density `q = gain·f` on the f-grid.
    pub init_q: Option<DensityConfig>,
    pub init_g: Option<DensityConfig>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    #[serde(default = "default_samples")]
    pub saddle_samples: usize,
}

fn default_cells() -> usize {
    8
}

fn default_samples() -> usize {
    100
}

impl Config {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }
}

/// Config with relative paths resolved and the problem materialized.
pub struct Problem {
    pub spec: IncrementSpec,
    pub a: Vec<CVec>,
    pub pair: Option<DensityPair>,
}

fn complex_rows(re: &[Vec<f64>], im: Option<&Vec<Vec<f64>>>) -> Result<Vec<CVec>> {
    re.iter()
        .enumerate()
        .map(|(k, row)| {
            let imr = im.map(|m| m.get(k).cloned().unwrap_or_default());
            if let Some(imr) = &imr {
                if imr.len() != row.len() {
                    return Err(Error::Shape(format!("a_im[{k}] has {} entries, a[{k}] has {}", imr.len(), row.len())));
                }
            }
            Ok(CVec::from_iterator(
                row.len(),
                row.iter().enumerate().map(|(p, &x)| Complex64::new(x, imr.as_ref().map_or(0.0, |v| v[p]))),
            ))
        })
        .collect()
}

pub fn load_density(d: &DensityConfig, base: &Path, n: usize, mu: usize) -> Result<SpectralDensity> {
    match d {
        DensityConfig::Model(m) => Ok(m.clone()),
        DensityConfig::Csv { csv, compensated } => {
            let grid = ps_increments::io::read_grid_file(&base.join(csv))?;
            let g = SpectralDensity::from_grid(grid);
            Ok(if *compensated { SpectralDensity::compensated(n, mu, g) } else { g })
        }
    }
}

/// Cell-constant grid with `cells` cells: a matching grid CSV is used as is,
/// anything else is sampled at the cell midpoints.
pub fn load_cell_grid(d: &DensityConfig, base: &Path, cells: usize) -> Result<GridDensity> {
    let dens = load_density(d, base, 1, 1)?;
    if let Some(g) = dens.grid() {
        if g.interp == GridInterp::Cell && g.cells() == cells {
            return Ok(g);
        }
    }
    GridDensity::sample(&dens, cells, GridInterp::Cell)
}

impl Config {
    pub fn problem(&self, base: &Path) -> Result<Problem> {
        if let Some(name) = &self.fixture {
            let fx = fixtures::fixture_family()
                .into_iter()
                .find(|f| &f.name == name)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown fixture {name:?}")))?;
            return Ok(Problem { spec: fx.spec, a: fx.a, pair: Some(fx.pair) });
        }
        let sc = self.spec.as_ref().ok_or_else(|| Error::InvalidParameter("config needs `spec` or `fixture`".into()))?;
        let a = match (&self.a, &self.a_theta) {
            (Some(re), None) => complex_rows(re, self.a_im.as_ref())?,
            (None, Some(th)) => {
                let im = self.a_theta_im.clone().unwrap_or_else(|| vec![0.0; th.len()]);
                if im.len() != th.len() {
                    return Err(Error::Shape("a_theta_im length differs from a_theta".into()));
                }
                let z: Vec<Complex64> = th.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect();
                block_coefficients(&z, sc.period)?
            }
            _ => return Err(Error::InvalidParameter("give exactly one of `a` and `a_theta`".into())),
        };
        let horizon = a.len().checked_sub(1).ok_or_else(|| Error::Shape("weights are empty".into()))?;
        if let Some(h) = sc.horizon {
            if h != horizon {
                return Err(Error::Shape(format!("N = {h} but the weights cover N = {horizon}")));
            }
        }
        let spec = IncrementSpec::new(sc.n, sc.mu, sc.period, horizon)?;
        let pair = match (&self.f, &self.g) {
            (Some(f), Some(g)) => Some(DensityPair::new(
                load_density(f, base, spec.n, spec.mu)?,
                load_density(g, base, spec.n, spec.mu)?,
                spec.n,
                spec.mu,
            )?),
            (None, None) => None,
            _ => return Err(Error::InvalidParameter("give both `f` and `g`".into())),
        };
        Ok(Problem { spec, a, pair })
    }
}
