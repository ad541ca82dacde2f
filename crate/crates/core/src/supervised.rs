//! Abundance inversion with known endmembers.

use nalgebra::{DMatrix, SVD};

use crate::error::{Result, UnmixError};
use crate::lsq::{nnls, simplex_ls_batch};
use crate::sparse::SpectralLibrary;
use crate::types::{AbundanceMap, Diagnostics, EndmemberMatrix, HsiCube, SolverOptions};

/// Default cap on the number of endmember combinations MESMA will enumerate.
pub const DEFAULT_MESMA_CAP: usize = 10_000;

fn check_shapes(y: &HsiCube, e: &EndmemberMatrix) -> Result<()> {
    if y.bands() != e.bands() {
        return Err(UnmixError::ShapeMismatch(format!(
            "cube has {} bands, endmembers have {}",
            y.bands(),
            e.bands()
        )));
    }
    Ok(())
}

/// Unconstrained least squares `A = E^+ Y`.
pub fn uclsu(y: &HsiCube, e: &EndmemberMatrix) -> Result<AbundanceMap> {
    check_shapes(y, e)?;
    let svd = SVD::new(e.spectra().clone(), true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if e.count() > e.bands() || smin <= 1e-12 * smax {
        return Err(UnmixError::RankDeficient);
    }
    let pinv = svd
        .pseudo_inverse(0.0)
        .map_err(|_| UnmixError::RankDeficient)?;
    AbundanceMap::unconstrained(pinv * y.values(), y.height(), y.width())
}

/// Per-pixel nonnegative least squares (Lawson-Hanson active set).
pub fn nclsu(
    y: &HsiCube,
    e: &EndmemberMatrix,
    opts: &SolverOptions,
) -> Result<(AbundanceMap, Diagnostics)> {
    check_shapes(y, e)?;
    opts.validate()?;
    let ev = e.spectra();
    let gram = ev.transpose() * ev;
    let lin = ev.transpose() * y.values();
    let mut a = DMatrix::zeros(e.count(), y.pixels());
    let mut converged = true;
    for j in 0..y.pixels() {
        let (x, ok) = nnls(&gram, lin.column(j).as_slice(), opts.tol.min(1e-10));
        converged &= ok;
        a.column_mut(j).copy_from_slice(&x);
    }
    let objective = 0.5 * (y.values() - ev * &a).norm_squared();
    let map = AbundanceMap::new(a, y.height(), y.width(), false, true)?;
    Ok((
        map,
        Diagnostics {
            converged,
            iterations: 1,
            objective: vec![objective],
        },
    ))
}

/// Fully constrained least squares: each pixel is projected onto the
/// simplex spanned by the endmembers, `min 1/2 ||y - E a||^2` over the
/// probability simplex.
///
/// All pixels are iterated together by a splitting method (least-squares
/// step, simplex projection); each pixel is then finished by an exact active
/// set and certified by its Frank-Wolfe duality gap (`<= 1e-6 ||y||^2`).
/// `converged` is false when some pixel misses that certificate.
pub fn fclsu(
    y: &HsiCube,
    e: &EndmemberMatrix,
    opts: &SolverOptions,
) -> Result<(AbundanceMap, Diagnostics)> {
    check_shapes(y, e)?;
    opts.validate()?;
    let (a, diag) = fclsu_matrix(y.values(), e.spectra(), opts, None);
    let map = AbundanceMap::new(a, y.height(), y.width(), true, true)?;
    Ok((map, diag))
}

pub(crate) fn fclsu_matrix(
    y: &DMatrix<f64>,
    e: &DMatrix<f64>,
    opts: &SolverOptions,
    warm: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, Diagnostics) {
    let gram = e.transpose() * e;
    let lin = e.transpose() * y;
    let yy: Vec<f64> = y.column_iter().map(|c| c.norm_squared()).collect();
    simplex_ls_batch(&gram, &lin, &yy, opts.max_iter, opts.rho, warm)
}

#[derive(Debug, Clone)]
pub struct MesmaResult {
    /// One row per bundle.
    pub abundances: AbundanceMap,
    /// Per pixel, the library index chosen from each bundle.
    pub models: Vec<Vec<usize>>,
    /// Per pixel squared residual `||y - E a||^2` of the winning model.
    pub residuals: Vec<f64>,
}

/// Multiple-endmember SMA: for every pixel, try each combination taking one
/// atom per bundle, unmix with FCLSU and keep the model with the smallest
/// squared residual. Ties keep the first combination in enumeration order
/// (last bundle varies fastest).
pub fn mesma(
    y: &HsiCube,
    bundles: &SpectralLibrary,
    opts: &SolverOptions,
    cap: usize,
) -> Result<MesmaResult> {
    bundles.check_bands(y)?;
    opts.validate()?;
    let groups = bundles
        .groups()
        .ok_or_else(|| UnmixError::InvalidInput("MESMA needs a bundled library".into()))?;
    let mut combos = 1usize;
    for g in groups {
        combos = combos.checked_mul(g.len()).unwrap_or(usize::MAX);
    }
    if combos > cap {
        return Err(UnmixError::CombinatorialCap {
            combinations: combos,
            cap,
        });
    }
    let r = groups.len();
    let n = y.pixels();
    let mut best_res = vec![f64::INFINITY; n];
    let mut best_model = vec![vec![0usize; r]; n];
    let mut best_a = DMatrix::zeros(r, n);
    let mut digits = vec![0usize; r];
    for _ in 0..combos {
        let idx: Vec<usize> = digits.iter().zip(groups).map(|(&d, g)| g[d]).collect();
        let e = bundles.atoms().select_columns(idx.iter());
        let (a, _) = fclsu_matrix(y.values(), &e, opts, None);
        let resid = y.values() - &e * &a;
        for j in 0..n {
            let rj = resid.column(j).norm_squared();
            if rj < best_res[j] {
                best_res[j] = rj;
                best_model[j].clone_from(&idx);
                best_a.set_column(j, &a.column(j));
            }
        }
        for k in (0..r).rev() {
            digits[k] += 1;
            if digits[k] < groups[k].len() {
                break;
            }
            digits[k] = 0;
        }
    }
    Ok(MesmaResult {
        abundances: AbundanceMap::new(best_a, y.height(), y.width(), true, true)?,
        models: best_model,
        residuals: best_res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(y: DMatrix<f64>) -> HsiCube {
        let n = y.ncols();
        HsiCube::new(1, n, y).unwrap()
    }

    fn em(m: DMatrix<f64>) -> EndmemberMatrix {
        EndmemberMatrix::new(m).unwrap()
    }

    fn rand_simplex(rng: &mut ChaCha8Rng, r: usize, n: usize) -> DMatrix<f64> {
        let mut a = DMatrix::from_fn(r, n, |_, _| rng.random::<f64>());
        for mut c in a.column_iter_mut() {
            let s = c.sum();
            c /= s;
        }
        a
    }

    #[test]
    fn uclsu_recovers_exact_mixtures() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = DMatrix::from_fn(6, 3, |_, _| rng.random::<f64>());
        let a0 = DMatrix::from_fn(3, 10, |_, _| rng.random::<f64>() - 0.3);
        let a = uclsu(&cube(&e * &a0), &em(e.clone())).unwrap();
        assert!((a.coeffs() - &a0).norm() < 1e-10);
    }

    #[test]
    fn uclsu_orthonormal_and_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = DMatrix::from_fn(6, 3, |_, _| rng.random::<f64>()).qr().q();
        let y = DMatrix::from_fn(6, 5, |_, _| rng.random::<f64>());
        let a = uclsu(&cube(y.clone()), &em(q.clone())).unwrap();
        assert!((a.coeffs() - q.transpose() * &y).norm() < 1e-10);

        let e = DMatrix::from_fn(6, 3, |_, _| rng.random::<f64>());
        let a = uclsu(&cube(y.clone()), &em(e.clone())).unwrap();
        // Oracle: solve the normal equations directly.
        let ne = (e.transpose() * &e).lu().solve(&(e.transpose() * &y)).unwrap();
        assert!((a.coeffs() - ne).norm() < 1e-8);
        let resid = &y - &e * a.coeffs();
        assert!((e.transpose() * resid).norm() < 1e-8);
    }

    #[test]
    fn uclsu_rank_deficient() {
        let e = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let y = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(uclsu(&cube(y), &em(e)), Err(UnmixError::RankDeficient)));
    }

    #[test]
    fn nclsu_examples() {
        let opts = SolverOptions::default();
        // boundary optimum
        let e = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let y = DMatrix::from_row_slice(2, 1, &[-1.0, 0.0]);
        let (a, _) = nclsu(&cube(y), &em(e), &opts).unwrap();
        assert_eq!(a.coeffs()[(0, 0)], 0.0);
        // interior optimum equals uclsu
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = DMatrix::from_fn(6, 3, |_, _| rng.random::<f64>());
        let y = &e * DMatrix::from_fn(3, 4, |_, _| 0.2 + rng.random::<f64>());
        let (a, diag) = nclsu(&cube(y.clone()), &em(e.clone()), &opts).unwrap();
        assert!(diag.converged);
        let u = uclsu(&cube(y), &em(e)).unwrap();
        assert!((a.coeffs() - u.coeffs()).norm() < 1e-9);
    }

    #[test]
    fn fclsu_examples() {
        let opts = SolverOptions::default();
        let e = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.2, 0.3]);
        let y = &e * DMatrix::from_row_slice(2, 2, &[0.3, 1.0, 0.7, 0.0]);
        let (a, diag) = fclsu(&cube(y), &em(e), &opts).unwrap();
        assert!(diag.converged);
        assert!((a.coeffs()[(0, 0)] - 0.3).abs() < 1e-6);
        assert!((a.coeffs()[(1, 0)] - 0.7).abs() < 1e-6);
        assert!((a.coeffs()[(0, 1)] - 1.0).abs() < 1e-9);
        assert!(a.coeffs()[(1, 1)].abs() < 1e-9);
    }

    #[test]
    fn fclsu_noiseless_sre_at_least_60db() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = DMatrix::from_fn(50, 5, |_, _| rng.random::<f64>());
        let a0 = rand_simplex(&mut rng, 5, 400);
        let (a, _) = fclsu(&cube(&e * &a0), &em(e), &SolverOptions::default()).unwrap();
        let sre = 20.0 * (a0.norm() / (a.coeffs() - &a0).norm()).log10();
        assert!(sre >= 60.0, "sre {sre}");
    }

    #[test]
    fn constraint_tightening_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let opts = SolverOptions::default();
        for _ in 0..20 {
            let e = DMatrix::from_fn(5, 3, |_, _| rng.random::<f64>());
            let y = DMatrix::from_fn(5, 1, |_, _| rng.random::<f64>());
            let obj = |a: &DMatrix<f64>| 0.5 * (&y - &e * a).norm_squared();
            let (f, _) = fclsu(&cube(y.clone()), &em(e.clone()), &opts).unwrap();
            let (nn, _) = nclsu(&cube(y.clone()), &em(e.clone()), &opts).unwrap();
            let mut nn = nn.into_coeffs();
            let s = nn.sum();
            if s > 0.0 {
                nn /= s;
            } else {
                nn.fill(1.0 / 3.0);
            }
            let u = uclsu(&cube(y.clone()), &em(e.clone())).unwrap();
            let proj = crate::simplex::project_simplex(u.coeffs().as_slice()).unwrap();
            let proj = DMatrix::from_column_slice(3, 1, &proj);
            assert!(obj(f.coeffs()) <= obj(&nn) + 1e-12);
            assert!(obj(&nn) <= obj(&proj) + 1e-12 || obj(f.coeffs()) <= obj(&proj) + 1e-12);
        }
    }

    fn bundles(rng: &mut ChaCha8Rng) -> SpectralLibrary {
        let atoms = DMatrix::from_fn(8, 4, |_, _| 0.1 + rng.random::<f64>());
        let names = (0..4).map(|i| format!("a{i}")).collect();
        SpectralLibrary::new(atoms, names, Some(vec![vec![0, 1], vec![2, 3]])).unwrap()
    }

    #[test]
    fn mesma_single_member_groups_equal_fclsu() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let atoms = DMatrix::from_fn(8, 2, |_, _| 0.1 + rng.random::<f64>());
        let lib = SpectralLibrary::new(atoms.clone(), vec!["x".into(), "y".into()], Some(vec![vec![0], vec![1]])).unwrap();
        let y = DMatrix::from_fn(8, 6, |_, _| rng.random::<f64>());
        let res = mesma(&cube(y.clone()), &lib, &SolverOptions::default(), DEFAULT_MESMA_CAP).unwrap();
        let (f, _) = fclsu(&cube(y), &em(atoms), &SolverOptions::default()).unwrap();
        assert!((res.abundances.coeffs() - f.coeffs()).norm() < 1e-12);
    }

    #[test]
    fn mesma_picks_generating_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let lib = bundles(&mut rng);
        let e = lib.atoms().select_columns([1, 2].iter());
        let y = &e * DMatrix::from_row_slice(2, 1, &[0.35, 0.65]);
        let res = mesma(&cube(y), &lib, &SolverOptions::default(), DEFAULT_MESMA_CAP).unwrap();
        assert_eq!(res.models[0], vec![1, 2]);
        assert!(res.residuals[0] <= 1e-8);
    }

    #[test]
    fn mesma_matches_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let lib = bundles(&mut rng);
        let y = DMatrix::from_fn(8, 5, |_, _| 0.5 + 0.3 * rng.random::<f64>());
        let res = mesma(&cube(y.clone()), &lib, &SolverOptions::default(), DEFAULT_MESMA_CAP).unwrap();
        // Oracle: two-endmember FCLSU on a fine grid of the segment, all four models.
        for j in 0..5 {
            let yj = y.column(j);
            let mut best = (f64::INFINITY, vec![]);
            for a in [0usize, 1] {
                for b in [2usize, 3] {
                    let (ea, eb) = (lib.atoms().column(a), lib.atoms().column(b));
                    for k in 0..=20_000 {
                        let t = k as f64 / 20_000.0;
                        let r = (yj - ea * t - eb * (1.0 - t)).norm_squared();
                        if r < best.0 {
                            best = (r, vec![a, b]);
                        }
                    }
                }
            }
            assert_eq!(res.models[j], best.1);
            assert!((res.residuals[j] - best.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn mesma_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lib = bundles(&mut rng);
        let y = DMatrix::from_element(8, 1, 0.5);
        assert!(matches!(
            mesma(&cube(y), &lib, &SolverOptions::default(), 3),
            Err(UnmixError::CombinatorialCap { combinations: 4, cap: 3 })
        ));
    }
}
