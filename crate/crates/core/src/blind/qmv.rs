use nalgebra::DMatrix;

use crate::error::{Result, UnmixError};
use crate::extract::vca;
use crate::subspace::{fit_subspace_matrix, SubspaceModel};
use crate::lsq::simplex_ls_batch;
use crate::types::{AbundanceMap, Diagnostics, EndmemberMatrix, HsiCube, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QmvKind {
    /// Spread of the endmembers around their centroid.
    Tv,
    /// Distance of the endmembers to the data mean.
    Center,
    /// Distance of the endmembers to extracted extreme pixels.
    Boundary,
}

/// Quadratic volume surrogate `||E G - O||_F^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QmvRegularizer {
    pub kind: QmvKind,
    pub g: DMatrix<f64>,
    pub o: DMatrix<f64>,
}

impl QmvRegularizer {
    /// `G = I - 11^T / r`, `O = 0`.
    pub fn tv(p: usize, r: usize) -> Self {
        let g = DMatrix::identity(r, r) - DMatrix::from_element(r, r, 1.0 / r as f64);
        Self {
            kind: QmvKind::Tv,
            g,
            o: DMatrix::zeros(p, r),
        }
    }

    /// `G = I`, `O = m 1^T` with `m` the mean pixel.
    pub fn center(y: &HsiCube, r: usize) -> Self {
        let m = y.values().column_mean();
        Self {
            kind: QmvKind::Center,
            g: DMatrix::identity(r, r),
            o: DMatrix::from_fn(y.bands(), r, |i, _| m[i]),
        }
    }

    /// `G = I`, `O` = VCA endmembers.
    pub fn boundary(y: &HsiCube, r: usize, seed: u64) -> Result<Self> {
        let e = vca(y, r, seed)?;
        Ok(Self {
            kind: QmvKind::Boundary,
            g: DMatrix::identity(r, r),
            o: e.endmembers.into_spectra(),
        })
    }

    pub fn build(kind: QmvKind, y: &HsiCube, r: usize, seed: u64) -> Result<Self> {
        match kind {
            QmvKind::Tv => Ok(Self::tv(y.bands(), r)),
            QmvKind::Center => Ok(Self::center(y, r)),
            QmvKind::Boundary => Self::boundary(y, r, seed),
        }
    }

    pub fn penalty(&self, e: &DMatrix<f64>) -> f64 {
        (e * &self.g - &self.o).norm_squared()
    }

    fn check(&self, p: usize, r: usize) -> Result<()> {
        if self.g.shape() != (r, r) || self.o.shape() != (p, r) {
            return Err(UnmixError::ShapeMismatch(format!(
                "regularizer has G {:?} and O {:?}, expected ({r}, {r}) and ({p}, {r})",
                self.g.shape(),
                self.o.shape()
            )));
        }
        Ok(())
    }
}

/// Ten log-spaced weights from 1e-4 to 1e2.
pub fn default_beta_grid() -> Vec<f64> {
    (0..10).map(|k| 10f64.powf(-4.0 + 6.0 * k as f64 / 9.0)).collect()
}

/// Upper bound on alternations per weight.
pub const QMV_MAX_OUTER: usize = 300;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct QmvRun {
    pub beta: f64,
    /// Selection score; lower is better.
    pub score: f64,
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceMap,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct QmvResult {
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceMap,
    pub beta: f64,
    /// Index into `runs` of the selected weight.
    pub chosen: usize,
    /// One entry per weight, in grid order.
    pub runs: Vec<QmvRun>,
}

/// Closed-form `E`-step in subspace coordinates:
/// `E (A A^T + 2 beta G G^T) = Y A^T + 2 beta T G^T`.
pub(crate) fn e_step(
    y: &DMatrix<f64>,
    a: &DMatrix<f64>,
    g: &DMatrix<f64>,
    t: &DMatrix<f64>,
    beta: f64,
) -> Result<DMatrix<f64>> {
    let lhs = a * a.transpose() + g * g.transpose() * (2.0 * beta);
    let rhs = y * a.transpose() + t * g.transpose() * (2.0 * beta);
    let eig = lhs.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || max / min > MAX_CONDITION {
        return Err(UnmixError::SingularNormalEq(if min > 0.0 { max / min } else { f64::INFINITY }));
    }
    let inv = lhs.try_inverse().ok_or(UnmixError::SingularNormalEq(f64::INFINITY))?;
    Ok(rhs * inv)
}

/// Minimum-volume NMF with a quadratic volume regularizer:
/// `min 1/2 ||Y - E A||_F^2 + beta ||E G - O||_F^2` with `A` column
/// stochastic. Runs in the `(r-1)`-dimensional affine signal subspace: the
/// `A`-step is FCLSU, the `E`-step the normal-equation solve above, both
/// exact, so the objective never increases. Starts from VCA.
///
/// Every weight of `beta_grid` is solved; the one kept minimizes
/// `d_vertex + d_fit`, where `d_vertex` is the RMS distance from each
/// estimated vertex to its nearest pixel and `d_fit` the RMS
/// reconstruction error, both divided by the RMS pixel norm. Ties go to
/// the smaller weight.
pub fn nmf_qmv(
    y: &HsiCube,
    r: usize,
    reg: &QmvRegularizer,
    beta_grid: &[f64],
    opts: &SolverOptions,
) -> Result<QmvResult> {
    opts.validate()?;
    if r < 2 {
        return Err(UnmixError::InvalidInput("NMF-QMV needs r >= 2".into()));
    }
    if beta_grid.is_empty() || beta_grid.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
        return Err(UnmixError::InvalidInput(
            "beta grid must be nonempty with finite nonnegative weights".into(),
        ));
    }
    reg.check(y.bands(), r)?;
    let model = fit_subspace_matrix(y.values(), r - 1, true)?;
    let e0 = vca(y, r, opts.seed)?.endmembers.into_spectra();
    let mut runs = Vec::with_capacity(beta_grid.len());
    for &beta in beta_grid {
        runs.push(run_one(y, &model, reg, &e0, beta, opts)?);
    }
    let mut chosen = 0;
    for (k, run) in runs.iter().enumerate() {
        let best = &runs[chosen];
        if run.score < best.score || (run.score == best.score && run.beta < best.beta) {
            chosen = k;
        }
    }
    let pick = &runs[chosen];
    Ok(QmvResult {
        endmembers: pick.endmembers.clone(),
        abundances: pick.abundances.clone(),
        beta: pick.beta,
        chosen,
        runs,
    })
}

fn run_one(
    y: &HsiCube,
    model: &SubspaceModel,
    reg: &QmvRegularizer,
    e0: &DMatrix<f64>,
    beta: f64,
    opts: &SolverOptions,
) -> Result<QmvRun> {
    let yv = y.values();
    let r = e0.ncols();
    let yr = model.project(yv)?;
    // O - c 1^T G carried into subspace coordinates
    let mut shifted = reg.o.clone();
    let c1g = DMatrix::from_fn(1, r, |_, j| reg.g.column(j).sum());
    shifted -= model.center() * c1g;
    let t = model.basis().transpose() * shifted;

    // E = c 1^T + V E_r, so for column-stochastic A the data term splits into
    // ||Y_r - E_r A||^2 plus the constant energy outside the subspace
    let centered = yv - model.center() * DMatrix::from_element(1, yv.ncols(), 1.0);
    let outside = 0.5 * (centered.norm_squared() - yr.norm_squared()).max(0.0);
    let yy: Vec<f64> = yr.column_iter().map(|c| c.norm_squared()).collect();
    let a_step = |er: &DMatrix<f64>, warm: Option<&DMatrix<f64>>| {
        let gram = er.transpose() * er;
        let lin = er.transpose() * &yr;
        simplex_ls_batch(&gram, &lin, &yy, opts.max_iter, opts.rho, warm).0
    };
    let objective = |er: &DMatrix<f64>, e: &DMatrix<f64>, a: &DMatrix<f64>| {
        0.5 * (&yr - er * a).norm_squared() + outside + beta * reg.penalty(e)
    };
    let er = model.project(e0)?;
    let mut e = model.backproject(&er)?;
    let mut a = a_step(&er, None);
    let mut f = objective(&er, &e, &a);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let max_outer = opts.max_iter.min(QMV_MAX_OUTER);
    while iterations < max_outer {
        iterations += 1;
        let er_new = e_step(&yr, &a, &reg.g, &t, beta)?;
        let e_new = model.backproject(&er_new)?;
        let a_new = a_step(&er_new, Some(&a));
        let f_new = objective(&er_new, &e_new, &a_new);
        if f_new > f {
            // roundoff only; keep the previous iterate
            converged = true;
            break;
        }
        let drop = f - f_new;
        e = e_new;
        a = a_new;
        f = f_new;
        trace.push(f);
        if drop <= opts.tol * f.max(1e-12) {
            converged = true;
            break;
        }
    }
    let score = selection_score(yv, &e, &a);
    Ok(QmvRun {
        beta,
        score,
        endmembers: EndmemberMatrix::new(e)?,
        abundances: AbundanceMap::new(a, y.height(), y.width(), true, true)?,
        diagnostics: Diagnostics {
            converged,
            iterations,
            objective: trace,
        },
    })
}

fn selection_score(y: &DMatrix<f64>, e: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let n = y.ncols() as f64;
    let r = e.ncols() as f64;
    let scale = (y.norm_squared() / n).sqrt().max(1e-300);
    let mut vert = 0.0;
    for v in e.column_iter() {
        let nearest = y
            .column_iter()
            .map(|c| (c - v).norm_squared())
            .fold(f64::INFINITY, f64::min);
        vert += nearest;
    }
    let d_vertex = (vert / r).sqrt() / scale;
    let d_fit = ((y - e * a).norm_squared() / n).sqrt() / scale;
    d_vertex + d_fit
}
