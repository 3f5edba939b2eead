//! Artifact formats: grid densities and filters as CSV, solutions and reports
//! as JSON. Numbers are written with the shortest round-trip representation,
//! so equal values always produce equal bytes.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimateSolution, FilterWeights};
use crate::increments::IncrementSpec;
use crate::spectra::{GridDensity, GridInterp};
use crate::{CMat, CVec, Complex64};

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Write a grid density: one row per node, columns `lambda` then
/// `re_i_j, im_i_j` in row-major order.
pub fn write_grid_csv<W: Write>(w: W, grid: &GridDensity) -> Result<()> {
    let dim = grid.values[0].nrows();
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["lambda".to_string()];
    for i in 0..dim {
        for j in 0..dim {
            header.push(format!("re_{i}_{j}"));
            header.push(format!("im_{i}_{j}"));
        }
    }
    out.write_record(&header).map_err(csv_err)?;
    for (idx, m) in grid.values.iter().enumerate() {
        let mut row = vec![grid.node(idx).to_string()];
        for i in 0..dim {
            for j in 0..dim {
                row.push(m[(i, j)].re.to_string());
                row.push(m[(i, j)].im.to_string());
            }
        }
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Read a grid written by [`write_grid_csv`]. Cell-constant versus linear
/// interpolation is recognized from the first node (`-π` for linear grids).
pub fn read_grid_csv<R: Read>(r: R) -> Result<GridDensity> {
    let mut rdr = csv::Reader::from_reader(r);
    let cols = rdr.headers().map_err(csv_err)?.len();
    let entries = (cols.saturating_sub(1)) / 2;
    let dim = (entries as f64).sqrt().round() as usize;
    if cols < 3 || dim * dim * 2 + 1 != cols {
        return Err(Error::Parse(format!("grid CSV needs 1 + 2·T² columns, found {cols}")));
    }
    let mut lambdas = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
            .collect::<Result<_>>()?;
        lambdas.push(nums[0]);
        values.push(CMat::from_fn(dim, dim, |i, j| {
            let at = 1 + 2 * (i * dim + j);
            Complex64::new(nums[at], nums[at + 1])
        }));
    }
    let first = *lambdas.first().ok_or_else(|| Error::Parse("grid CSV has no rows".into()))?;
    let interp = if (first + PI).abs() < 1e-9 { GridInterp::Linear } else { GridInterp::Cell };
    let grid = GridDensity::new(interp, values)?;
    for (i, l) in lambdas.iter().enumerate() {
        if (grid.node(i) - l).abs() > 1e-9 {
            return Err(Error::Parse(format!("row {i}: lambda {l} is not on a uniform grid of {} nodes", grid.cells())));
        }
    }
    Ok(grid)
}

pub fn read_grid_file(path: &Path) -> Result<GridDensity> {
    read_grid_csv(std::fs::File::open(path)?)
}

/// Filter weights as rows `k, coordinate, re, im`; the fixed weights on the
/// unincremented observations are written with `kind = raw`.
pub fn write_filter_csv<W: Write>(w: W, filter: &FilterWeights) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["kind", "k", "coordinate", "re", "im"]).map_err(csv_err)?;
    let mut row = |kind: &str, k: i64, v: &CVec| -> Result<()> {
        for (p, z) in v.iter().enumerate() {
            out.write_record([kind.to_string(), k.to_string(), p.to_string(), z.re.to_string(), z.im.to_string()])
                .map_err(csv_err)?;
        }
        Ok(())
    };
    for (k, v) in filter.weights() {
        row("increment", k, v)?;
    }
    for (i, v) in filter.v.iter().enumerate().rev() {
        row("raw", -(i as i64) - 1, v)?;
    }
    out.flush()?;
    Ok(())
}

/// Vector path as rows `index, coordinate, re, im`.
pub fn write_path_csv<W: Write>(w: W, start: i64, path: &[CVec]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "coordinate", "re", "im"]).map_err(csv_err)?;
    for (t, v) in path.iter().enumerate() {
        for (p, z) in v.iter().enumerate() {
            out.write_record([(start + t as i64).to_string(), p.to_string(), z.re.to_string(), z.im.to_string()])
                .map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize, W: Write>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_json(f, value)
}

/// `[re, im]` pairs per coordinate, per time index.
pub fn cvecs_to_pairs(v: &[CVec]) -> Vec<Vec<[f64; 2]>> {
    v.iter().map(|x| x.iter().map(|z| [z.re, z.im]).collect()).collect()
}

pub fn pairs_to_cvecs(v: &[Vec<[f64; 2]>]) -> Vec<CVec> {
    v.iter().map(|x| CVec::from_iterator(x.len(), x.iter().map(|p| Complex64::new(p[0], p[1])))).collect()
}

/// JSON view of an [`EstimateSolution`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionReport {
    pub spec: IncrementSpec,
    pub mse: f64,
    pub system_term: f64,
    pub noise_term: f64,
    pub solve_residual: f64,
    pub condition: f64,
    pub a: Vec<Vec<[f64; 2]>>,
    pub b: Vec<Vec<[f64; 2]>>,
    pub v: Vec<Vec<[f64; 2]>>,
    pub c: Vec<Vec<[f64; 2]>>,
    pub c_b: Vec<Vec<[f64; 2]>>,
    pub c_t: Vec<Vec<[f64; 2]>>,
}

impl SolutionReport {
    pub fn new(sol: &EstimateSolution) -> Self {
        Self {
            spec: *sol.spec(),
            mse: sol.mse,
            system_term: sol.system_term,
            noise_term: sol.noise_term,
            solve_residual: sol.residual,
            condition: sol.condition,
            a: cvecs_to_pairs(&sol.coeffs.a),
            b: cvecs_to_pairs(&sol.coeffs.b),
            v: cvecs_to_pairs(&sol.coeffs.v),
            c: cvecs_to_pairs(sol.c()),
            c_b: cvecs_to_pairs(&sol.c_b),
            c_t: cvecs_to_pairs(&sol.c_t),
        }
    }
}
