use nalgebra::DMatrix;

use super::SpectralLibrary;
use crate::error::{Result, UnmixError};
use crate::extract::vca;
use crate::lsq::{simplex_ls_active_set, simplex_ls_batch};
use crate::types::{AbundanceMap, Diagnostics, EndmemberMatrix, HsiCube, SolverOptions};

#[derive(Debug, Clone)]
pub struct SunaaResult {
    /// `m x r`, every column on the probability simplex.
    pub b: DMatrix<f64>,
    pub abundances: AbundanceMap,
    pub diagnostics: Diagnostics,
}

impl SunaaResult {
    /// Endmembers `D B`.
    pub fn endmembers(&self, d: &SpectralLibrary) -> Result<EndmemberMatrix> {
        EndmemberMatrix::new(d.atoms() * &self.b)
    }
}

fn residual(y: &DMatrix<f64>, d: &DMatrix<f64>, b: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    0.5 * (y - d * (b * a)).norm_squared()
}

/// Sparse unmixing by archetypal analysis:
/// `min 1/2 ||Y - D B A||_F^2` with the columns of `B` (m x r) and `A`
/// (r x n) on their probability simplices, so every endmember is a convex
/// combination of library atoms.
///
/// Cyclic descent from a VCA start projected onto the library: an exact
/// FCLSU step for `A`, then one exact simplex least-squares solve per
/// column of `B` with the others fixed. The objective trace has one entry
/// per outer round and never increases.
pub fn sunaa(
    y: &HsiCube,
    d: &SpectralLibrary,
    r: usize,
    opts: &SolverOptions,
) -> Result<SunaaResult> {
    d.check_bands(y)?;
    opts.validate()?;
    let m = d.len();
    if r == 0 || r > m {
        return Err(UnmixError::InvalidInput(format!("need 1 <= r <= m = {m}, got {r}")));
    }
    let yv = y.values();
    let dm = d.atoms();
    let gram = dm.transpose() * dm;
    let dty = dm.transpose() * yv;
    let yy: Vec<f64> = yv.column_iter().map(|c| c.norm_squared()).collect();

    let mut b = DMatrix::zeros(m, r);
    if r == 1 {
        // best single archetype for the mean pixel
        let mean = dty.column_mean();
        let col = simplex_ls_active_set(&gram, mean.as_slice(), None);
        b.column_mut(0).copy_from_slice(&col);
    } else {
        let e0 = vca(y, r, opts.seed)?;
        let lin0 = dm.transpose() * e0.endmembers.spectra();
        for k in 0..r {
            let col = simplex_ls_active_set(&gram, lin0.column(k).as_slice(), None);
            b.column_mut(k).copy_from_slice(&col);
        }
    }

    let a_step = |b: &DMatrix<f64>, warm: Option<&DMatrix<f64>>| {
        let gb = &gram * b;
        let g_small = b.transpose() * &gb;
        let lin = b.transpose() * &dty;
        simplex_ls_batch(&g_small, &lin, &yy, opts.max_iter, opts.rho, warm).0
    };
    let mut a = a_step(&b, None);
    let mut f = residual(yv, dm, &b, &a);
    let mut trace = vec![f];
    let mut converged = false;
    let mut rounds = 0;
    while rounds < opts.max_iter {
        rounds += 1;
        // B-step, one archetype at a time.
        let aat = &a * a.transpose();
        let dtya = &dty * a.transpose();
        let mut gb = &gram * &b;
        let b_prev = b.clone();
        for j in 0..r {
            let w = aat[(j, j)];
            if w <= 0.0 {
                continue;
            }
            let mut lin = dtya.column(j).into_owned();
            for k in 0..r {
                if k != j {
                    lin -= gb.column(k) * aat[(k, j)];
                }
            }
            lin /= w;
            let start: Vec<f64> = b.column(j).iter().copied().collect();
            let col = simplex_ls_active_set(&gram, lin.as_slice(), Some(&start));
            b.column_mut(j).copy_from_slice(&col);
            let new_g = &gram * b.column(j);
            gb.set_column(j, &new_g);
        }
        let mut f_b = residual(yv, dm, &b, &a);
        if f_b > f {
            // roundoff in a near-singular active set; keep the old archetypes
            b = b_prev;
            f_b = f;
        }
        let a_new = a_step(&b, Some(&a));
        let f_new = residual(yv, dm, &b, &a_new);
        let f_next = if f_new <= f_b {
            a = a_new;
            f_new
        } else {
            f_b
        };
        let drop = f - f_next;
        f = f_next;
        trace.push(f);
        if drop <= opts.tol * f.max(1e-12) {
            converged = true;
            break;
        }
    }
    Ok(SunaaResult {
        b,
        abundances: AbundanceMap::new(a, y.height(), y.width(), true, true)?,
        diagnostics: Diagnostics {
            converged,
            iterations: rounds,
            objective: trace,
        },
    })
}
