//! ADMM engine shared by the SUnSAL family.
//!
//! Solves `min 1/2 tr(X^T G X) - tr(C^T X) + k + P(X)` subject to `X >= 0`
//! and, optionally, `1^T X = 1^T`. `G = D^T D` (possibly with extra
//! diagonal mass) and `C = D^T Y` (possibly shifted), so that for the plain
//! problem the smooth part equals `1/2 ||Y - D X||^2` when `k = 1/2 ||Y||^2`.

use nalgebra::DMatrix;

use crate::types::{Diagnostics, SolverOptions};

#[derive(Debug, Clone, Copy)]
pub(crate) enum Penalty<'a> {
    L1(f64),
    /// Entrywise weights, same shape as `X`.
    WeightedL1(&'a DMatrix<f64>),
    /// `lambda * sum_i ||row_i||_2`.
    RowL2(f64),
}

impl Penalty<'_> {
    pub(crate) fn value(&self, x: &DMatrix<f64>) -> f64 {
        match *self {
            Penalty::L1(l) => l * x.iter().map(|v| v.abs()).sum::<f64>(),
            Penalty::WeightedL1(w) => w.iter().zip(x.iter()).map(|(w, v)| w * v.abs()).sum(),
            Penalty::RowL2(l) => l * x.row_iter().map(|r| r.norm()).sum::<f64>(),
        }
    }

    /// Proximal map of `P / mu` plus the nonnegativity indicator, in place.
    fn prox(&self, v: &mut DMatrix<f64>, mu: f64) {
        match *self {
            Penalty::L1(l) => {
                let t = l / mu;
                v.apply(|x| *x = (*x - t).max(0.0));
            }
            Penalty::WeightedL1(w) => {
                v.zip_apply(w, |x, wi| *x = (*x - wi / mu).max(0.0));
            }
            Penalty::RowL2(l) => {
                let t = l / mu;
                v.apply(|x| *x = x.max(0.0));
                for mut row in v.row_iter_mut() {
                    let nrm = row.norm();
                    let scale = if nrm > t { 1.0 - t / nrm } else { 0.0 };
                    row *= scale;
                }
            }
        }
    }
}

pub(crate) struct Quadratic<'a> {
    pub gram: &'a DMatrix<f64>,
    pub lin: &'a DMatrix<f64>,
    pub constant: f64,
}

impl Quadratic<'_> {
    pub(crate) fn value(&self, x: &DMatrix<f64>) -> f64 {
        let gx = self.gram * x;
        0.5 * gx.dot(x) - self.lin.dot(x) + self.constant
    }
}

/// Initial penalty relative to the mean Gram diagonal.
const MU_SCALE: f64 = 0.01;
/// Over-relaxation factor.
const RELAX: f64 = 1.6;

struct Factor {
    inv: DMatrix<f64>,
    /// `F 1 (1^T F 1)^-1`, used by the sum-to-one correction.
    asc_dir: Option<DMatrix<f64>>,
}

fn factor(gram: &DMatrix<f64>, mu: f64, asc: bool) -> Factor {
    let m = gram.nrows();
    let mut shifted = gram.clone();
    for i in 0..m {
        shifted[(i, i)] += mu;
    }
    let inv = shifted
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| shifted.try_inverse())
        .expect("G + mu I is positive definite");
    let asc_dir = asc.then(|| {
        let f1 = inv.column_sum();
        let s = f1.sum();
        DMatrix::from_column_slice(m, 1, (f1 / s).as_slice())
    });
    Factor { inv, asc_dir }
}

/// Runs ADMM from `warm` (or zero). Returns the nonnegative split variable
/// and diagnostics whose single objective entry is the final objective.
pub(crate) fn solve(
    quad: &Quadratic<'_>,
    penalty: Penalty<'_>,
    asc: bool,
    opts: &SolverOptions,
    warm: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, Diagnostics) {
    let (m, n) = quad.lin.shape();
    let mut mu = opts.rho * MU_SCALE * (quad.gram.trace() / m as f64).max(1e-12);
    let mut fac = factor(quad.gram, mu, asc);
    let mut z = match warm {
        Some(w) => w.clone(),
        None => DMatrix::zeros(m, n),
    };
    // a warm start also fixes the scaled dual: at a fixed point u = (C - G z) / mu
    let mut u = match (warm, asc) {
        (Some(_), false) => (quad.lin - quad.gram * &z) / mu,
        _ => DMatrix::zeros(m, n),
    };
    let mut rhs = DMatrix::zeros(m, n);
    let mut x = DMatrix::zeros(m, n);
    let mut z_prev = DMatrix::zeros(m, n);
    // residuals are compared per entry
    let eps = opts.tol * ((m * n) as f64).sqrt();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        rhs.copy_from(&z);
        rhs -= &u;
        rhs *= mu;
        rhs += quad.lin;
        x.gemm(1.0, &fac.inv, &rhs, 0.0);
        if let Some(dir) = &fac.asc_dir {
            // shift every column back onto the hyperplane 1^T x = 1
            let excess = x.row_sum().add_scalar(-1.0);
            x -= dir * excess;
        }
        let r = x.zip_fold(&z, 0.0, |acc, a, b| acc + (a - b) * (a - b)).sqrt();
        // over-relaxed point, stored in rhs
        rhs.copy_from(&x);
        rhs *= RELAX;
        rhs.zip_apply(&z, |h, zi| *h += (1.0 - RELAX) * zi);
        std::mem::swap(&mut z_prev, &mut z);
        z.copy_from(&rhs);
        z += &u;
        penalty.prox(&mut z, mu);
        u += &rhs;
        u -= &z;
        let s = mu * z.zip_fold(&z_prev, 0.0, |acc, a, b| acc + (a - b) * (a - b)).sqrt();
        if r <= eps && s <= eps {
            converged = true;
            break;
        }
        // residual balancing
        if it % 10 == 9 {
            let rescale = if r > 10.0 * s {
                2.0
            } else if s > 10.0 * r {
                0.5
            } else {
                1.0
            };
            if rescale != 1.0 {
                mu *= rescale;
                u /= rescale;
                fac = factor(quad.gram, mu, asc);
            }
        }
    }
    let objective = quad.value(&z) + penalty.value(&z);
    (
        z,
        Diagnostics {
            converged,
            iterations,
            objective: vec![objective],
        },
    )
}
