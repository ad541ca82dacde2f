//! Small constrained least-squares kernels in Gram form.
//!
//! Problems are written as `min 1/2 x^T G x - b^T x` with `G = E^T E` and
//! `b = E^T y`, which equals `1/2 ||y - E x||^2` up to the constant `1/2 y^T y`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::simplex::project_simplex_in_place;
use crate::types::Diagnostics;

/// Frank-Wolfe gap on the simplex: `x^T g - min_j g_j`, an upper bound on
/// `f(x) - f*` for any feasible `x`.
pub(crate) fn simplex_gap(gram: &DMatrix<f64>, b: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    let mut dot = 0.0;
    let mut min_g = f64::INFINITY;
    for i in 0..n {
        let mut g = -b[i];
        for j in 0..n {
            g += gram[(i, j)] * x[j];
        }
        dot += x[i] * g;
        min_g = min_g.min(g);
    }
    (dot - min_g).max(0.0)
}

fn solve_small(a: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    let lu = a.clone().lu();
    if let Some(x) = lu.solve(rhs) {
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    // Singular block (collinear columns): retry with a tiny ridge.
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridged = a;
    for i in 0..n {
        ridged[(i, i)] += 1e-12 * scale;
    }
    ridged.lu().solve(rhs).filter(|x| x.iter().all(|v| v.is_finite()))
}

/// Exact minimizer over the probability simplex by a primal active-set
/// method. `start` must be feasible; it is typically a splitting-method
/// iterate, so the loop usually terminates after one or two solves.
pub(crate) fn simplex_ls_active_set(
    gram: &DMatrix<f64>,
    b: &[f64],
    start: Option<&[f64]>,
) -> Vec<f64> {
    let n = b.len();
    let mut x: Vec<f64> = match start {
        Some(s) => s.to_vec(),
        None => vec![1.0 / n as f64; n],
    };
    let mut free: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
    if !free.iter().any(|&f| f) {
        x = vec![1.0 / n as f64; n];
        free = vec![true; n];
    }
    let gscale = (0..n).map(|i| gram[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let bscale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mult_tol = 1e-13 * (gscale + bscale);
    for _ in 0..(10 * n + 50) {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let k = idx.len();
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (a, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                kkt[(a, c)] = gram[(i, j)];
            }
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
            rhs[a] = b[i];
        }
        rhs[k] = 1.0;
        let Some(sol) = solve_small(kkt, &rhs) else {
            break;
        };
        if idx.iter().enumerate().all(|(a, _)| sol[a] > 0.0) {
            for (a, &i) in idx.iter().enumerate() {
                x[i] = sol[a];
            }
            for i in 0..n {
                if !free[i] {
                    x[i] = 0.0;
                }
            }
            // Multipliers of the bound constraints: g_j - g_free.
            let g: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| gram[(i, j)] * x[j]).sum::<f64>() - b[i])
                .collect();
            let g_free = idx.iter().map(|&i| g[i]).sum::<f64>() / k as f64;
            let entering = (0..n)
                .filter(|&j| !free[j])
                .map(|j| (j, g[j] - g_free))
                .filter(|&(_, m)| m < -mult_tol)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match entering {
                Some((j, _)) => free[j] = true,
                None => return x,
            }
        } else {
            // Step toward the equality-constrained optimum until a bound blocks.
            let mut alpha = 1.0;
            let mut block = None;
            for (a, &i) in idx.iter().enumerate() {
                if sol[a] <= 0.0 {
                    let t = x[i] / (x[i] - sol[a]);
                    if t < alpha {
                        alpha = t;
                        block = Some(i);
                    }
                }
            }
            for (a, &i) in idx.iter().enumerate() {
                x[i] += alpha * (sol[a] - x[i]);
            }
            if let Some(i) = block {
                x[i] = 0.0;
                free[i] = false;
            }
            for &i in &idx {
                if x[i] <= 0.0 {
                    x[i] = 0.0;
                    free[i] = false;
                }
            }
            if !free.iter().any(|&f| f) {
                // Cannot happen for exact arithmetic; keep the best vertex.
                let best = (0..n)
                    .min_by(|&a, &c| (0.5 * gram[(a, a)] - b[a]).total_cmp(&(0.5 * gram[(c, c)] - b[c])))
                    .unwrap_or(0);
                x.iter_mut().for_each(|v| *v = 0.0);
                x[best] = 1.0;
                free[best] = true;
            }
            let s: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= s);
        }
    }
    x
}

/// Lawson-Hanson nonnegative least squares in Gram form.
pub(crate) fn nnls(gram: &DMatrix<f64>, b: &[f64], tol: f64) -> (Vec<f64>, bool) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut passive = vec![false; n];
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let wtol = tol * scale;
    let grad_neg = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| b[i] - (0..n).map(|j| gram[(i, j)] * x[j]).sum::<f64>())
            .collect()
    };
    let max_outer = 3 * n + 30;
    for _ in 0..max_outer {
        let w = grad_neg(&x);
        let entering = (0..n)
            .filter(|&j| !passive[j])
            .map(|j| (j, w[j]))
            .filter(|&(_, v)| v > wtol)
            .max_by(|a, c| a.1.total_cmp(&c.1));
        let Some((j, _)) = entering else {
            return (x, true);
        };
        passive[j] = true;
        for _ in 0..(3 * n + 30) {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, c| gram[(idx[a], idx[c])]);
            let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| b[i]));
            let Some(s) = solve_small(sub, &rhs) else {
                passive[j] = false;
                return (x, false);
            };
            if s.iter().all(|&v| v > 0.0) {
                for (a, &i) in idx.iter().enumerate() {
                    x[i] = s[a];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (a, &i) in idx.iter().enumerate() {
                if s[a] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - s[a]));
                }
            }
            for (a, &i) in idx.iter().enumerate() {
                x[i] += alpha * (s[a] - x[i]);
                if x[i] <= 1e-15 * scale.max(1.0) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    (x, false)
}

/// ADMM penalty tuned to the Gram spectrum, `rho * sqrt(l_max * l_min)`.
pub(crate) fn spectral_rho(gram: &DMatrix<f64>, rho: f64) -> f64 {
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let max = eig.iter().copied().fold(0.0, f64::max).max(1e-300);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min).max(1e-8 * max);
    rho * (max * min).sqrt()
}

/// Batched simplex-constrained least squares: every column of `lin` is one
/// independent problem sharing `gram`. `yy[j]` is `||y_j||^2`, used to scale
/// the certification threshold.
///
/// Splitting iterations (least-squares step, simplex projection, dual update)
/// identify the support; each column is then finished by the exact
/// active-set solver and certified by its Frank-Wolfe gap. A warm start
/// must be column stochastic; it skips the splitting phase.
pub(crate) fn simplex_ls_batch(
    gram: &DMatrix<f64>,
    lin: &DMatrix<f64>,
    yy: &[f64],
    max_iter: usize,
    rho: f64,
    warm: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, Diagnostics) {
    let r = gram.nrows();
    let n = lin.ncols();
    let rho = spectral_rho(gram, rho);
    let mut shifted = gram.clone();
    for i in 0..r {
        shifted[(i, i)] += rho;
    }
    let inv = shifted
        .try_inverse()
        .unwrap_or_else(|| DMatrix::identity(r, r) / rho);
    let mut z = match warm {
        Some(w) => w.clone(),
        None => DMatrix::from_element(r, n, 1.0 / r as f64),
    };
    let mut u = DMatrix::zeros(r, n);
    let mut scratch = Vec::with_capacity(r);
    // a feasible warm start goes straight to the active-set finish
    let admm_iters = if warm.is_some() { 0 } else { max_iter.min(100) };
    let mut rhs = DMatrix::zeros(r, n);
    for _ in 0..admm_iters {
        rhs.copy_from(lin);
        rhs += (&z - &u) * rho;
        let x = &inv * &rhs;
        let mut v = &x + &u;
        for mut col in v.column_iter_mut() {
            project_simplex_in_place(col.as_mut_slice(), &mut scratch);
        }
        u += &x - &v;
        z = v;
    }
    let mut converged = true;
    let mut objective = 0.0;
    for j in 0..n {
        let b = lin.column(j);
        let start: Vec<f64> = z.column(j).iter().copied().collect();
        let x = simplex_ls_active_set(gram, b.as_slice(), Some(&start));
        let gap = simplex_gap(gram, b.as_slice(), &x);
        if gap > 1e-6 * yy[j] + 1e-14 {
            converged = false;
        }
        let quad: f64 = (0..r)
            .map(|a| x[a] * ((0..r).map(|c| gram[(a, c)] * x[c]).sum::<f64>() * 0.5 - b[a]))
            .sum();
        objective += (quad + 0.5 * yy[j]).max(0.0);
        z.column_mut(j).copy_from_slice(&x);
    }
    (
        z,
        Diagnostics {
            converged,
            iterations: admm_iters,
            objective: vec![objective],
        },
    )
}
