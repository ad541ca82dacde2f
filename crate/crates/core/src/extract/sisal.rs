use nalgebra::DMatrix;

use super::{vca, ExtractionResult};
use crate::error::{Result, UnmixError};
use crate::subspace::fit_subspace_matrix;
use crate::types::{Diagnostics, EndmemberMatrix, HsiCube, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct SisalParams {
    /// Hinge weight; `None` means `1e-6 * n`.
    pub tau: Option<f64>,
    /// Convexification rounds.
    pub outer: usize,
    /// Splitting iterations per round.
    pub inner: usize,
    /// Clamp the returned spectra to `[0, 1]`.
    pub clamp: bool,
}

impl Default for SisalParams {
    fn default() -> Self {
        Self {
            tau: None,
            outer: 10,
            inner: 40,
            clamp: false,
        }
    }
}

const MIN_DET: f64 = 1e-30;

/// `-log|det Q| + tau * sum(max(-QZ, 0))`, or `None` when `Q` is singular.
fn objective(q: &DMatrix<f64>, z: &DMatrix<f64>, tau: f64) -> Option<f64> {
    let det = q.determinant().abs();
    if !(det >= MIN_DET) {
        return None;
    }
    let hinge: f64 = (q * z).iter().map(|&v| (-v).max(0.0)).sum();
    Some(-det.ln() + tau * hinge)
}

/// Simplex identification by split augmented Lagrangian.
///
/// Pixels are reduced to the `(r-1)`-dimensional affine subspace and
/// written in homogeneous coordinates `z = [V^T (y - c); 1]`. With `M` the
/// vertex matrix in the same coordinates, abundances are `Q z` where
/// `Q = M^-1`, and sum-to-one becomes the linear constraint `1^T Q = e_r^T`.
/// The solver minimizes `-log|det Q| + tau * sum(hinge(-Q Z))`: each round
/// linearizes the log-determinant around `Q_k`, adds a proximal term and
/// solves the convex subproblem by ADMM on the split `V = Q Z`; a
/// backtracking step on the segment from `Q_k` keeps the objective
/// nonincreasing. Initialization is VCA, enlarged about its centroid until
/// it contains every pixel.
pub fn sisal(
    y: &HsiCube,
    r: usize,
    params: &SisalParams,
    opts: &SolverOptions,
) -> Result<ExtractionResult> {
    opts.validate()?;
    if r < 2 {
        return Err(UnmixError::InvalidInput("SISAL needs r >= 2".into()));
    }
    let n = y.pixels();
    let tau = params.tau.unwrap_or(1e-6 * n as f64);
    if !(tau >= 0.0) {
        return Err(UnmixError::InvalidInput("tau must be >= 0".into()));
    }
    let model = fit_subspace_matrix(y.values(), r - 1, true)?;
    let yr = model.project(y.values())?;
    let z = DMatrix::from_fn(r, n, |i, j| if i + 1 < r { yr[(i, j)] } else { 1.0 });

    let init = vca(y, r, opts.seed)?;
    let e0 = model.project(init.endmembers.spectra())?;
    let mut m0 = DMatrix::from_fn(r, r, |i, j| if i + 1 < r { e0[(i, j)] } else { 1.0 });
    let mut q = m0
        .clone()
        .try_inverse()
        .ok_or(UnmixError::SingularQ(0.0))?;
    // Enlarge the start until it encloses the data: abundances in the scaled
    // simplex are (a - 1/r) / s + 1/r.
    let amin = (&q * &z).min();
    let s = (1.0 - r as f64 * amin).max(1.0) * 1.01;
    let centroid = m0.column_mean();
    for mut c in m0.column_iter_mut() {
        let moved = &centroid + (&c - &centroid) * s;
        c.copy_from(&moved);
    }
    q = m0.try_inverse().ok_or(UnmixError::SingularQ(0.0))?;

    let mut f = objective(&q, &z, tau).ok_or_else(|| UnmixError::SingularQ(q.determinant().abs()))?;
    let mut trace = vec![f];
    let zzt = &z * z.transpose();
    let zscale = zzt.trace() / r as f64;
    let ones = DMatrix::from_element(r, 1, 1.0);
    let mut er = DMatrix::zeros(1, r);
    er[(0, r - 1)] = 1.0;
    let mut mu_scale = 1.0;
    let mut converged = false;
    let mut rounds = 0;

    let mut inner = params.inner.max(1);
    let mut retries = 0;
    while rounds < params.outer {
        rounds += 1;
        let qinv = q.clone().try_inverse().ok_or_else(|| UnmixError::SingularQ(q.determinant().abs()))?;
        let smax = qinv.clone().svd(false, false).singular_values.max();
        let mu = mu_scale * smax * smax;
        let rho = opts.rho * mu / zscale;
        let g = -qinv.transpose();
        let h = DMatrix::<f64>::identity(r, r) * mu + &zzt * rho;
        let hinv = h.clone().try_inverse().ok_or(UnmixError::SingularQ(0.0))?;
        let base = &q * mu - &g;

        let mut qt = q.clone();
        let mut v = &qt * &z;
        let mut u = DMatrix::zeros(r, n);
        let thr = tau / rho;
        for _ in 0..inner {
            let rr = &base + (&v - &u) * z.transpose() * rho;
            let lambda = (ones.transpose() * &rr - &er * &h) / r as f64;
            qt = (rr - &ones * lambda) * &hinv;
            let qz = &qt * &z;
            v = &qz + &u;
            v.apply(|w| {
                if *w < -thr {
                    *w += thr;
                } else if *w < 0.0 {
                    *w = 0.0;
                }
            });
            u += qz - &v;
        }

        // Backtracking along Q_k -> Q~ (the constraint is affine, so every
        // point of the segment is feasible).
        let dir = &qt - &q;
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-6 {
            let cand = &q + &dir * t;
            if let Some(fc) = objective(&cand, &z, tau) {
                if fc <= f {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                let drop = f - fc;
                q = cand;
                f = fc;
                trace.push(f);
                retries = 0;
                inner = params.inner.max(1);
                mu_scale = if t == 1.0 { (mu_scale * 0.5).max(1e-3) } else { mu_scale * 2.0 };
                if drop <= opts.tol * f.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            // The inexact subproblem gave no descent: stiffen the proximal
            // term and solve more accurately before giving up.
            None if retries < 3 => {
                retries += 1;
                mu_scale *= 4.0;
                inner *= 2;
            }
            None => {
                converged = true;
                break;
            }
        }
    }

    let det = q.determinant().abs();
    if det < MIN_DET {
        return Err(UnmixError::SingularQ(det));
    }
    let m = q.try_inverse().ok_or(UnmixError::SingularQ(det))?;
    let coords = m.rows(0, r - 1).into_owned();
    let spectra = model.backproject(&coords)?;
    let mut endmembers = EndmemberMatrix::new(spectra)?;
    if params.clamp {
        endmembers = endmembers.clamped_to_reflectance();
    }
    Ok(ExtractionResult {
        endmembers,
        indices: None,
        diagnostics: Diagnostics {
            converged,
            iterations: rounds,
            objective: trace,
        },
    })
}
