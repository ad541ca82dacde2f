use nalgebra::{DMatrix, DVector};

use super::sunsal::{check_weight, LsData, SparseCode};
use super::SpectralLibrary;
use crate::error::{Result, UnmixError};
use crate::types::{Diagnostics, HsiCube, SolverOptions};

/// First-order horizontal and vertical differences over a `height x width`
/// pixel grid (row-major pixel order). Boundary rule: replicate (Neumann),
/// so the difference leaving the last row/column is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffOps {
    height: usize,
    width: usize,
}

impl DiffOps {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(UnmixError::InvalidInput("empty pixel grid".into()));
        }
        Ok(Self { height, width })
    }

    pub fn for_cube(cube: &HsiCube) -> Self {
        Self {
            height: cube.height(),
            width: cube.width(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn check(&self, x: &DMatrix<f64>) {
        assert_eq!(x.ncols(), self.height * self.width, "grid/pixel count mismatch");
    }

    /// `X H_h^T`: `x[i, j+1] - x[i, j]` per row of `X`.
    pub fn horizontal(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.check(x);
        let w = self.width;
        DMatrix::from_fn(x.nrows(), x.ncols(), |k, j| {
            if j % w + 1 < w {
                x[(k, j + 1)] - x[(k, j)]
            } else {
                0.0
            }
        })
    }

    /// `X H_v^T`: `x[i+1, j] - x[i, j]` per row of `X`.
    pub fn vertical(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.check(x);
        let w = self.width;
        DMatrix::from_fn(x.nrows(), x.ncols(), |k, j| {
            if j / w + 1 < self.height {
                x[(k, j + w)] - x[(k, j)]
            } else {
                0.0
            }
        })
    }

    /// `D H_h`, the adjoint of [`DiffOps::horizontal`].
    pub fn horizontal_adjoint(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        self.check(d);
        let w = self.width;
        DMatrix::from_fn(d.nrows(), d.ncols(), |k, j| {
            let c = j % w;
            let mut v = 0.0;
            if c >= 1 {
                v += d[(k, j - 1)];
            }
            if c + 1 < w {
                v -= d[(k, j)];
            }
            v
        })
    }

    /// `D H_v`, the adjoint of [`DiffOps::vertical`].
    pub fn vertical_adjoint(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        self.check(d);
        let w = self.width;
        DMatrix::from_fn(d.nrows(), d.ncols(), |k, j| {
            let r = j / w;
            let mut v = 0.0;
            if r >= 1 {
                v += d[(k, j - w)];
            }
            if r + 1 < self.height {
                v -= d[(k, j)];
            }
            v
        })
    }

    /// Anisotropic total variation `||X H_h^T||_1 + ||X H_v^T||_1`.
    pub fn tv(&self, x: &DMatrix<f64>) -> f64 {
        let l1 = |m: DMatrix<f64>| m.iter().map(|v| v.abs()).sum::<f64>();
        l1(self.horizontal(x)) + l1(self.vertical(x))
    }

    /// Row vector `v (H_h^T H_h + H_v^T H_v)`: the Neumann graph Laplacian.
    fn laplacian_row(&self, v: &[f64], out: &mut [f64]) {
        let (h, w) = (self.height, self.width);
        for r in 0..h {
            for c in 0..w {
                let j = r * w + c;
                let mut acc = 0.0;
                if c + 1 < w {
                    acc += v[j] - v[j + 1];
                }
                if c >= 1 {
                    acc += v[j] - v[j - 1];
                }
                if r + 1 < h {
                    acc += v[j] - v[j + w];
                }
                if r >= 1 {
                    acc += v[j] - v[j - w];
                }
                out[j] = acc;
            }
        }
    }
}

const CG_TOL: f64 = 1e-10;

/// Solves `(a I + mu L) x = b` by conjugate gradients from `x`.
fn cg(ops: &DiffOps, a: f64, mu: f64, b: &[f64], x: &mut [f64]) {
    let n = b.len();
    let apply = |v: &[f64], out: &mut [f64]| {
        ops.laplacian_row(v, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o = a * vi + mu * *o;
        }
    };
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut ap = vec![0.0; n];
    for _ in 0..(4 * n).max(50) {
        if rr.sqrt() <= CG_TOL * bnorm {
            break;
        }
        apply(&p, &mut ap);
        let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
}

fn soft(v: &mut DMatrix<f64>, t: f64) {
    v.apply(|x| *x = x.signum() * (x.abs() - t).max(0.0));
}

/// Sparse unmixing with an anisotropic TV prior:
/// `min 1/2 ||Y - D X||_F^2 + lambda1 ||X||_1 + lambda2 (||X H_h^T||_1 +
/// ||X H_v^T||_1)` subject to `X >= 0`.
///
/// Splitting `V1 = X`, `V2 = X H_h^T`, `V3 = X H_v^T`. The `X`-step solves
/// `G X + mu X (I + L) = R` in the eigenbasis of `G = D^T D`, one
/// conjugate-gradient solve per library row.
pub fn sunsal_tv(
    y: &HsiCube,
    d: &SpectralLibrary,
    lambda1: f64,
    lambda2: f64,
    diff: &DiffOps,
    opts: &SolverOptions,
) -> Result<(SparseCode, Diagnostics)> {
    d.check_bands(y)?;
    opts.validate()?;
    check_weight("lambda1", lambda1)?;
    check_weight("lambda2", lambda2)?;
    if diff.height != y.height() || diff.width != y.width() {
        return Err(UnmixError::ShapeMismatch(format!(
            "difference operators on {}x{}, image is {}x{}",
            diff.height,
            diff.width,
            y.height(),
            y.width()
        )));
    }
    let ls = LsData::new(y.values(), d.atoms());
    let (m, n) = ls.lin.shape();
    let eig = ls.gram.clone().symmetric_eigen();
    let q = &eig.eigenvectors;
    let lam: DVector<f64> = eig.eigenvalues.map(|v| v.max(0.0));
    let qc = q.transpose() * &ls.lin;

    let mut mu = opts.rho * (ls.gram.trace() / m as f64).max(1e-12);
    let mut xt = DMatrix::<f64>::zeros(m, n); // X in the eigenbasis
    let mut v1 = DMatrix::<f64>::zeros(m, n);
    let mut v2 = DMatrix::<f64>::zeros(m, n);
    let mut v3 = DMatrix::<f64>::zeros(m, n);
    let mut u1 = v1.clone();
    let mut u2 = v1.clone();
    let mut u3 = v1.clone();
    let scale = ((3 * m * n) as f64).sqrt();
    let mut converged = false;
    let mut iterations = 0;
    let mut row = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let r = (&v1 - &u1) + diff.horizontal_adjoint(&(&v2 - &u2)) + diff.vertical_adjoint(&(&v3 - &u3));
        let rt = &qc + q.transpose() * r * mu;
        for i in 0..m {
            for j in 0..n {
                rhs[j] = rt[(i, j)];
                row[j] = xt[(i, j)];
            }
            cg(diff, lam[i] + mu, mu, &rhs, &mut row);
            for j in 0..n {
                xt[(i, j)] = row[j];
            }
        }
        let x = q * &xt;

        let hx = diff.horizontal(&x);
        let vx = diff.vertical(&x);
        let prev = (v1.clone(), v2.clone(), v3.clone());
        v1 = &x + &u1;
        v1.apply(|w| *w = (*w - lambda1 / mu).max(0.0));
        v2 = &hx + &u2;
        soft(&mut v2, lambda2 / mu);
        v3 = &vx + &u3;
        soft(&mut v3, lambda2 / mu);
        let p1 = &x - &v1;
        let p2 = &hx - &v2;
        let p3 = &vx - &v3;
        u1 += &p1;
        u2 += &p2;
        u3 += &p3;

        let res_p = (p1.norm_squared() + p2.norm_squared() + p3.norm_squared()).sqrt();
        let dv1 = &v1 - &prev.0;
        let dual = dv1
            + diff.horizontal_adjoint(&(&v2 - &prev.1))
            + diff.vertical_adjoint(&(&v3 - &prev.2));
        let res_d = mu * dual.norm();
        let xnorm = (x.norm_squared() + hx.norm_squared() + vx.norm_squared()).sqrt();
        let vnorm = (v1.norm_squared() + v2.norm_squared() + v3.norm_squared()).sqrt();
        let unorm = (u1.norm_squared() + u2.norm_squared() + u3.norm_squared()).sqrt();
        let eps_p = opts.tol * (1e-3 * scale + xnorm.max(vnorm));
        let eps_d = opts.tol * (1e-3 * scale + mu * unorm);
        if res_p <= eps_p && res_d <= eps_d {
            converged = true;
            break;
        }
        if it % 10 == 9 {
            let k = if res_p > 10.0 * res_d {
                2.0
            } else if res_d > 10.0 * res_p {
                0.5
            } else {
                1.0
            };
            if k != 1.0 {
                mu *= k;
                u1 /= k;
                u2 /= k;
                u3 /= k;
            }
        }
    }
    let quad = ls.quadratic();
    let objective = quad.value(&v1)
        + lambda1 * v1.iter().sum::<f64>()
        + lambda2 * diff.tv(&v1);
    Ok((
        SparseCode::new(v1, y.height(), y.width())?,
        Diagnostics {
            converged,
            iterations,
            objective: vec![objective],
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjoints_match_inner_products() {
        let ops = DiffOps::new(3, 4).unwrap();
        let x = DMatrix::from_fn(2, 12, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        let d = DMatrix::from_fn(2, 12, |i, j| ((i * 5 + j * 11) % 7) as f64 * 0.3);
        let lhs = ops.horizontal(&x).dot(&d);
        let rhs = x.dot(&ops.horizontal_adjoint(&d));
        assert!((lhs - rhs).abs() < 1e-12);
        let lhs = ops.vertical(&x).dot(&d);
        let rhs = x.dot(&ops.vertical_adjoint(&d));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn constant_image_has_zero_differences() {
        let ops = DiffOps::new(4, 5).unwrap();
        let x = DMatrix::from_element(3, 20, 0.7);
        assert_eq!(ops.horizontal(&x).amax(), 0.0);
        assert_eq!(ops.vertical(&x).amax(), 0.0);
        assert_eq!(ops.tv(&x), 0.0);
    }

    #[test]
    fn laplacian_matches_adjoint_composition() {
        let ops = DiffOps::new(3, 3).unwrap();
        let x = DMatrix::from_fn(1, 9, |_, j| (j * j) as f64 * 0.1);
        let want = ops.horizontal_adjoint(&ops.horizontal(&x)) + ops.vertical_adjoint(&ops.vertical(&x));
        let mut got = vec![0.0; 9];
        ops.laplacian_row(x.as_slice(), &mut got);
        for j in 0..9 {
            assert!((got[j] - want[(0, j)]).abs() < 1e-12);
        }
    }
}
