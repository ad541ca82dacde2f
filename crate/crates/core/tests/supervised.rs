use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unmix::supervised::{fclsu, nclsu};
use unmix::{EndmemberMatrix, HsiCube, SolverOptions};

const STEP: f64 = 1e-3;

fn cube(y: DMatrix<f64>) -> HsiCube {
    let n = y.ncols();
    HsiCube::new(1, n, y).unwrap()
}

/// `f(a) = 1/2 ||y - E a||^2` for r = 3 in Gram form.
struct Quad {
    g: [[f64; 3]; 3],
    b: [f64; 3],
    c: f64,
}

impl Quad {
    fn new(e: &DMatrix<f64>, y: &DMatrix<f64>) -> Self {
        let gm = e.transpose() * e;
        let bm = e.transpose() * y;
        let mut g = [[0.0; 3]; 3];
        let mut b = [0.0; 3];
        for i in 0..3 {
            b[i] = bm[(i, 0)];
            for j in 0..3 {
                g[i][j] = gm[(i, j)];
            }
        }
        Self { g, b, c: 0.5 * y.norm_squared() }
    }

    fn eval(&self, a: [f64; 3]) -> f64 {
        let mut f = self.c;
        for i in 0..3 {
            f -= self.b[i] * a[i];
            for j in 0..3 {
                f += 0.5 * a[i] * self.g[i][j] * a[j];
            }
        }
        f
    }
}

/// Minimum over `{0, STEP, ..., 2}^3`; the last coordinate is minimized
/// over its grid values nearest to the exact 1-D optimum.
fn nonneg_grid_min(q: &Quad) -> f64 {
    let k = (2.0 / STEP).round() as i64;
    let mut best = f64::INFINITY;
    for i in 0..=k {
        let a0 = i as f64 * STEP;
        for j in 0..=k {
            let a1 = j as f64 * STEP;
            let t = (q.b[2] - q.g[2][0] * a0 - q.g[2][1] * a1) / q.g[2][2];
            let base = (t / STEP).floor() as i64;
            for l in [base, base + 1] {
                let a2 = l.clamp(0, k) as f64 * STEP;
                best = best.min(q.eval([a0, a1, a2]));
            }
        }
    }
    best
}

/// Minimum over the simplex lattice with spacing STEP.
fn simplex_grid_min(q: &Quad) -> f64 {
    let k = (1.0 / STEP).round() as i64;
    let mut best = f64::INFINITY;
    for i in 0..=k {
        for j in 0..=(k - i) {
            let a = [i as f64 * STEP, j as f64 * STEP, (k - i - j) as f64 * STEP];
            best = best.min(q.eval(a));
        }
    }
    best
}

#[test]
fn nclsu_matches_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let opts = SolverOptions::default();
    for _ in 0..25 {
        let e = DMatrix::from_fn(4, 3, |_, _| 0.2 + rng.random::<f64>());
        let a0 = DMatrix::from_fn(3, 1, |_, _| 1.2 * rng.random::<f64>() - 0.2);
        let y = &e * a0 + DMatrix::from_fn(4, 1, |_, _| 0.1 * (rng.random::<f64>() - 0.5));
        let q = Quad::new(&e, &y);
        let (a, _) = nclsu(&cube(y), &EndmemberMatrix::new(e).unwrap(), &opts).unwrap();
        let got = q.eval([a.coeffs()[0], a.coeffs()[1], a.coeffs()[2]]);
        let oracle = nonneg_grid_min(&q);
        assert!(got <= oracle + 1e-12, "{got} > {oracle}");
        assert!(oracle - got <= 2e-3);
    }
}

#[test]
fn fclsu_matches_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let opts = SolverOptions::default();
    for _ in 0..25 {
        let e = DMatrix::from_fn(4, 3, |_, _| rng.random::<f64>());
        let y = DMatrix::from_fn(4, 1, |_, _| rng.random::<f64>());
        let q = Quad::new(&e, &y);
        let (a, diag) = fclsu(&cube(y), &EndmemberMatrix::new(e).unwrap(), &opts).unwrap();
        assert!(diag.converged);
        let got = q.eval([a.coeffs()[0], a.coeffs()[1], a.coeffs()[2]]);
        let oracle = simplex_grid_min(&q);
        assert!(got <= oracle + 1e-12, "{got} > {oracle}");
        assert!(oracle - got <= 2e-3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fclsu_output_is_on_the_simplex(seed in any::<u64>(), r in 1usize..6, n in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = DMatrix::from_fn(8, r, |_, _| rng.random::<f64>());
        let y = DMatrix::from_fn(8, n, |_, _| 2.0 * rng.random::<f64>() - 0.5);
        let (a, _) = fclsu(&cube(y), &EndmemberMatrix::new(e).unwrap(), &SolverOptions::default()).unwrap();
        for c in a.coeffs().column_iter() {
            prop_assert!(c.iter().all(|&v| v >= 0.0));
            prop_assert!((c.sum() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn nclsu_output_is_nonnegative_and_stationary(seed in any::<u64>(), r in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = DMatrix::from_fn(8, r, |_, _| rng.random::<f64>());
        let y = DMatrix::from_fn(8, 3, |_, _| 2.0 * rng.random::<f64>() - 0.5);
        let (a, _) = nclsu(&cube(y.clone()), &EndmemberMatrix::new(e.clone()).unwrap(), &SolverOptions::default()).unwrap();
        let grad = e.transpose() * (&e * a.coeffs() - &y);
        for (x, g) in a.coeffs().iter().zip(grad.iter()) {
            prop_assert!(*x >= 0.0);
            // KKT: zero gradient on the support, nonnegative off it
            if *x > 0.0 {
                prop_assert!(g.abs() <= 1e-8);
            } else {
                prop_assert!(*g >= -1e-8);
            }
        }
    }
}
