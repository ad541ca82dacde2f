use nalgebra::DMatrix;

use super::admm::{self, Penalty, Quadratic};
use super::SpectralLibrary;
use crate::error::{Result, UnmixError};
use crate::types::{Diagnostics, HsiCube, SolverOptions};

/// Library coefficients `X` (m x n) for an image of known shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    coeffs: DMatrix<f64>,
    height: usize,
    width: usize,
}

impl SparseCode {
    pub fn new(coeffs: DMatrix<f64>, height: usize, width: usize) -> Result<Self> {
        if coeffs.ncols() != height * width {
            return Err(UnmixError::ShapeMismatch(format!(
                "{} columns for a {height}x{width} image",
                coeffs.ncols()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(UnmixError::InvalidInput("sparse code has non-finite entries".into()));
        }
        Ok(Self {
            coeffs,
            height,
            width,
        })
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> DMatrix<f64> {
        self.coeffs
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Indices of the `k` atoms with the largest total abundance
    /// (row l1 mass), in decreasing order of mass; ties by lower index.
    pub fn top_atoms(&self, k: usize) -> Vec<usize> {
        let mass: Vec<f64> = self
            .coeffs
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum())
            .collect();
        let mut idx: Vec<usize> = (0..mass.len()).collect();
        idx.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }
}

/// Gram-form data of `1/2 ||Y - D X||^2`.
pub(crate) struct LsData {
    pub gram: DMatrix<f64>,
    pub lin: DMatrix<f64>,
    pub constant: f64,
}

impl LsData {
    pub(crate) fn new(y: &DMatrix<f64>, d: &DMatrix<f64>) -> Self {
        Self {
            gram: d.transpose() * d,
            lin: d.transpose() * y,
            constant: 0.5 * y.norm_squared(),
        }
    }

    pub(crate) fn quadratic(&self) -> Quadratic<'_> {
        Quadratic {
            gram: &self.gram,
            lin: &self.lin,
            constant: self.constant,
        }
    }
}

pub(crate) fn check_weight(name: &str, w: f64) -> Result<()> {
    if !(w >= 0.0) || !w.is_finite() {
        return Err(UnmixError::InvalidInput(format!("{name} must be finite and >= 0")));
    }
    Ok(())
}

fn wrap(y: &HsiCube, x: DMatrix<f64>, diag: Diagnostics) -> Result<(SparseCode, Diagnostics)> {
    Ok((SparseCode::new(x, y.height(), y.width())?, diag))
}

/// Sparse unmixing by variable splitting and augmented Lagrangian:
/// `min 1/2 ||Y - D X||_F^2 + lambda ||X||_1` subject to `X >= 0` and, when
/// `asc` is set, unit column sums. With sum-to-one the l1 term is constant
/// on the feasible set, which is why `asc` is off by default elsewhere.
pub fn sunsal(
    y: &HsiCube,
    d: &SpectralLibrary,
    lambda: f64,
    asc: bool,
    opts: &SolverOptions,
) -> Result<(SparseCode, Diagnostics)> {
    d.check_bands(y)?;
    opts.validate()?;
    check_weight("lambda", lambda)?;
    let ls = LsData::new(y.values(), d.atoms());
    let (x, diag) = admm::solve(&ls.quadratic(), Penalty::L1(lambda), asc, opts, None);
    wrap(y, x, diag)
}

/// Collaborative SUnSAL: `lambda * sum_i ||x_(i)||_2` over library rows,
/// which switches whole atoms on or off across the image.
pub fn clsunsal(
    y: &HsiCube,
    d: &SpectralLibrary,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<(SparseCode, Diagnostics)> {
    d.check_bands(y)?;
    opts.validate()?;
    check_weight("lambda", lambda)?;
    let ls = LsData::new(y.values(), d.atoms());
    let (x, diag) = admm::solve(&ls.quadratic(), Penalty::RowL2(lambda), false, opts, None);
    wrap(y, x, diag)
}

/// Reweighting floor shared by the weighted solvers.
pub const REWEIGHT_EPS: f64 = 1e-6;
/// Outer reweighting loops of [`s2wsu`].
pub const S2WSU_OUTER: usize = 5;

/// 3x3 box mean (edge-replicated) of every row, viewed as an image.
pub(crate) fn box_mean_3x3(x: &DMatrix<f64>, height: usize, width: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..height {
        for j in 0..width {
            let mut acc = vec![0.0; x.nrows()];
            for di in [-1i64, 0, 1] {
                for dj in [-1i64, 0, 1] {
                    let ii = (i as i64 + di).clamp(0, height as i64 - 1) as usize;
                    let jj = (j as i64 + dj).clamp(0, width as i64 - 1) as usize;
                    let col = x.column(ii * width + jj);
                    for (a, v) in acc.iter_mut().zip(col.iter()) {
                        *a += v;
                    }
                }
            }
            for (k, a) in acc.into_iter().enumerate() {
                out[(k, i * width + j)] = a / 9.0;
            }
        }
    }
    out
}

/// Spectral-spatial weighted sparse unmixing. Solves a sequence of
/// weighted-l1 problems `1/2 ||Y - D X||^2 + lambda sum W_ij |X_ij|`,
/// `X >= 0`. The first pass uses unit weights; afterwards
/// `W_ij = s_i * w_ij` with the spectral weight
/// `s_i = 1 / (||x_(i)||_1 + eps)` and the spatial weight
/// `w_ij = 1 / (mean of X_prev over the 3x3 window of pixel j, row i + eps)`.
/// The diagnostics carry the objective of the final weighted problem.
pub fn s2wsu(
    y: &HsiCube,
    d: &SpectralLibrary,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<(SparseCode, Diagnostics)> {
    s2wsu_with_loops(y, d, lambda, S2WSU_OUTER, opts)
}

pub fn s2wsu_with_loops(
    y: &HsiCube,
    d: &SpectralLibrary,
    lambda: f64,
    loops: usize,
    opts: &SolverOptions,
) -> Result<(SparseCode, Diagnostics)> {
    d.check_bands(y)?;
    opts.validate()?;
    check_weight("lambda", lambda)?;
    if loops == 0 {
        return Err(UnmixError::InvalidInput("s2wsu needs at least one loop".into()));
    }
    let ls = LsData::new(y.values(), d.atoms());
    let (m, n) = ls.lin.shape();
    let mut weights = DMatrix::from_element(m, n, lambda);
    let mut x: Option<DMatrix<f64>> = None;
    let mut diag = Diagnostics::default();
    let mut iterations = 0;
    for _ in 0..loops {
        let (next, dg) = admm::solve(
            &ls.quadratic(),
            Penalty::WeightedL1(&weights),
            false,
            opts,
            x.as_ref(),
        );
        iterations += dg.iterations;
        diag = dg;
        let spatial = box_mean_3x3(&next, y.height(), y.width());
        for i in 0..m {
            let s = 1.0 / (next.row(i).iter().map(|v| v.abs()).sum::<f64>() + REWEIGHT_EPS);
            for j in 0..n {
                weights[(i, j)] = lambda * s / (spatial[(i, j)].abs() + REWEIGHT_EPS);
            }
        }
        x = Some(next);
    }
    diag.iterations = iterations;
    wrap(y, x.expect("at least one loop"), diag)
}
