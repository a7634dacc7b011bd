//! Separable exponential random fields on a regular 2D grid.
//!
//! Orientation: `values[(j, i)]` is the observation at `(x_i, y_j)`, so a
//! matrix row is a line along `x` and a matrix column a line along `y`.
//! `theta1` and `C1` refer to `x`, `theta2` and `C2` to `y`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{DenominatorMode, PathSample, ScaleEstimator};
use crate::io::fmt_f64;
use crate::seqalg::VariationSequence;
use crate::simulate::{factorize, standard_normals, DEFAULT_JITTER};

/// `theta * step` at or above this marks a near-independence fit: for white
/// noise the line estimator returns `theta_hat * step ~ 1`.
pub const NEAR_INDEPENDENCE: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub step_x: f64,
    pub step_y: f64,
    /// `ny x nx`.
    pub values: DMatrix<f64>,
}

impl Grid2D {
    pub fn new(values: DMatrix<f64>, step_x: f64, step_y: f64) -> Result<Self> {
        let (ny, nx) = values.shape();
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid is {ny} x {nx}; need at least 2 x 2"
            )));
        }
        if !(step_x > 0.0 && step_y > 0.0) || !step_x.is_finite() || !step_y.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid steps ({step_x}, {step_y}) must be positive"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("grid contains non-finite values".into()));
        }
        Ok(Self {
            nx,
            ny,
            step_x,
            step_y,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], step_x: f64, step_y: f64) -> Result<Self> {
        let ny = rows.len();
        let nx = rows.first().map_or(0, Vec::len);
        if let Some(j) = rows.iter().position(|r| r.len() != nx) {
            return Err(Error::Parse(format!(
                "row {}: ragged row with {} cells, expected {nx}",
                j + 1,
                rows[j].len()
            )));
        }
        Self::new(DMatrix::from_fn(ny, nx, |j, i| rows[j][i]), step_x, step_y)
    }

    /// Swaps the axes (and the steps).
    pub fn transpose(&self) -> Self {
        Self {
            nx: self.ny,
            ny: self.nx,
            step_x: self.step_y,
            step_y: self.step_x,
            values: self.values.transpose(),
        }
    }

    pub fn map_values<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            values: self.values.map(f),
            ..self.clone()
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    /// Headerless CSV, one grid row per line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.values.row_iter() {
            w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `sigma^2 exp(-theta1 |dx|) exp(-theta2 |dy|) + mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableExpModel {
    pub sigma2: f64,
    pub theta1: f64,
    pub theta2: f64,
    #[serde(default)]
    pub mu: f64,
}

impl SeparableExpModel {
    pub fn validate(&self) -> Result<()> {
        // sigma2 = 0 is allowed and yields a constant field
        if !(self.sigma2 >= 0.0) || !(self.theta1 > 0.0) || !(self.theta2 > 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "separable model needs sigma2 >= 0 and theta1, theta2 > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

fn exp_factor(theta: f64, step: f64, n: usize) -> Result<DMatrix<f64>> {
    let cov = DMatrix::from_fn(n, n, |i, j| (-theta * step * i.abs_diff(j) as f64).exp());
    let (chol, _) = factorize(&cov, DEFAULT_JITTER)?;
    Ok(chol.l())
}

/// Exact draw `mu + sigma L_y Z L_x^T`, `Z` an `ny x nx` standard normal
/// matrix from stream `replicate` of `seed`.
pub fn simulate_separable(
    model: &SeparableExpModel,
    nx: usize,
    ny: usize,
    step_x: f64,
    step_y: f64,
    seed: u64,
    replicate: u64,
) -> Result<Grid2D> {
    model.validate()?;
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid is {ny} x {nx}; need at least 2 x 2"
        )));
    }
    if model.sigma2 == 0.0 {
        return Grid2D::new(DMatrix::from_element(ny, nx, model.mu), step_x, step_y);
    }
    let lx = exp_factor(model.theta1, step_x, nx)?;
    let ly = exp_factor(model.theta2, step_y, ny)?;
    let z = DMatrix::from_row_slice(ny, nx, &standard_normals(seed, replicate, nx * ny));
    let sigma = model.sigma2.sqrt();
    let values = (ly * z * lx.transpose()).map(|v| model.mu + sigma * v);
    Grid2D::new(values, step_x, step_y)
}

/// Headerless numeric CSV, one grid row per record.
pub fn read_grid_csv<R: Read>(input: R, step_x: f64, step_y: f64) -> Result<Grid2D> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (j, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: non-numeric cell '{c}'", j + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("grid CSV has no rows".into()));
    }
    Grid2D::from_rows(&rows, step_x, step_y)
}

pub fn ingest_grid(path: &Path, step_x: f64, step_y: f64) -> Result<Grid2D> {
    read_grid_csv(std::fs::File::open(path)?, step_x, step_y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparableEstimate {
    pub sigma2_hat: f64,
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub theta1_hat: f64,
    pub theta2_hat: f64,
    pub mean: f64,
    pub nx: usize,
    pub ny: usize,
    pub step_x: f64,
    pub step_y: f64,
    pub near_independence: bool,
    pub diagnostics: Vec<String>,
}

/// Sum of the sorted values, so the result does not depend on grid orientation.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Mean over lines of the single-line estimate of `C` (elem1, `D = 0`, `s = 1`).
fn mean_line_c(lines: Vec<Vec<f64>>, step: f64) -> Result<f64> {
    let a = VariationSequence::elementary(1)?;
    let est = ScaleEstimator::new(&a, 0, 1.0, DenominatorMode::UnbiasedNPrime)?;
    let count = lines.len() as f64;
    let per_line = lines
        .into_par_iter()
        .map(|line| est.estimate(&PathSample::new(step, line)?).map(|(c, _)| c))
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_line.iter().sum::<f64>() / count)
}

/// Four-step moment estimator: `sigma2_hat` from the centered sum of
/// squares, `C1_hat`/`C2_hat` as averages of line estimates along `x`/`y`
/// (each line is exponential with local scale `sigma^2 theta`), then
/// `theta_k_hat = C_k_hat / sigma2_hat`.
pub fn estimate_separable(grid: &Grid2D) -> Result<SeparableEstimate> {
    let count = (grid.nx * grid.ny) as f64;
    let mean = sorted_sum(grid.values.iter().copied().collect()) / count;
    let sigma2_hat = sorted_sum(grid.values.iter().map(|v| (v - mean) * (v - mean)).collect()) / count;

    let c1_hat = mean_line_c(grid.rows(), grid.step_x)?;
    let cols = grid
        .values
        .column_iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    let c2_hat = mean_line_c(cols, grid.step_y)?;

    if !(sigma2_hat > 0.0) {
        return Err(Error::Degenerate(
            "step 4: sigma2_hat = 0 (constant grid), theta estimates are undefined".into(),
        ));
    }
    let theta1_hat = c1_hat / sigma2_hat;
    let theta2_hat = c2_hat / sigma2_hat;
    let mut diagnostics = Vec::new();
    for (name, theta, step) in [
        ("theta1", theta1_hat, grid.step_x),
        ("theta2", theta2_hat, grid.step_y),
    ] {
        if theta * step >= NEAR_INDEPENDENCE {
            diagnostics.push(format!(
                "near-independence: {name}_hat * step = {:.3} >= {NEAR_INDEPENDENCE}; \
                 neighbouring observations are almost uncorrelated",
                theta * step
            ));
        }
    }
    Ok(SeparableEstimate {
        sigma2_hat,
        c1_hat,
        c2_hat,
        theta1_hat,
        theta2_hat,
        mean,
        nx: grid.nx,
        ny: grid.ny,
        step_x: grid.step_x,
        step_y: grid.step_y,
        near_independence: !diagnostics.is_empty(),
        diagnostics,
    })
}
