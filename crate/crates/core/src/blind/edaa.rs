use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Result, UnmixError};
use crate::rng::{stream_rng, Stream};
use crate::types::{AbundanceMap, Diagnostics, EndmemberMatrix, HsiCube, SolverOptions};

/// Upper bound on epochs per candidate.
pub const EDAA_MAX_EPOCHS: usize = 100;
/// Mirror-descent steps on each factor per epoch.
pub const EDAA_INNER_STEPS: usize = 3;
const MAX_HALVINGS: usize = 40;

/// Archetypal factors `Y ~ Y B A`.
#[derive(Debug, Clone)]
pub struct AaFactors {
    /// `n x r`, columns on the probability simplex.
    pub b: DMatrix<f64>,
    /// `r x n`, columns on the probability simplex.
    pub a: DMatrix<f64>,
    /// Per candidate: max |cosine| between distinct endmembers.
    pub coherence: Vec<f64>,
    /// Per candidate: `sum |Y - Y B A|`.
    pub residual_l1: Vec<f64>,
    /// Selected candidate.
    pub chosen: usize,
}

#[derive(Debug, Clone)]
pub struct EdaaResult {
    pub factors: AaFactors,
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceMap,
    /// Diagnostics of the selected candidate.
    pub diagnostics: Diagnostics,
}

/// Largest absolute cosine between two distinct columns (0 for one column).
pub fn coherence(e: &DMatrix<f64>) -> f64 {
    let norms: Vec<f64> = e.column_iter().map(|c| c.norm()).collect();
    let mut mu: f64 = 0.0;
    for i in 0..e.ncols() {
        for j in 0..i {
            let d = norms[i] * norms[j];
            let c = if d > 0.0 { e.column(i).dot(&e.column(j)) / d } else { 0.0 };
            mu = mu.max(c.abs());
        }
    }
    mu
}

fn random_simplex_cols(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| -(1.0 - rng.random::<f64>()).ln());
    for mut c in m.column_iter_mut() {
        let s = c.sum();
        c /= s;
    }
    m
}

/// `x_ij <- x_ij exp(-eta g_ij)`, renormalized per column (log-domain).
fn eg_step(x: &DMatrix<f64>, g: &DMatrix<f64>, eta: f64) -> DMatrix<f64> {
    let mut out = x.clone();
    for (mut col, (xc, gc)) in out.column_iter_mut().zip(x.column_iter().zip(g.column_iter())) {
        let logs: Vec<f64> = xc.iter().zip(gc.iter()).map(|(x, g)| x.ln() - eta * g).collect();
        let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (o, l) in col.iter_mut().zip(&logs) {
            *o = (l - mx).exp();
            s += *o;
        }
        col /= s;
        // stay strictly inside the simplex
        col.apply(|v| *v = v.max(f64::MIN_POSITIVE));
    }
    out
}

struct Run {
    b: DMatrix<f64>,
    a: DMatrix<f64>,
    diagnostics: Diagnostics,
}

/// `1/2 ||Y - Y B A||^2` from `yb = Y B`, `yat = Y A^T` and `aat = A A^T`.
fn loss_b(yy: f64, yb: &DMatrix<f64>, yat: &DMatrix<f64>, aat: &DMatrix<f64>) -> f64 {
    let k = yb.transpose() * yb;
    0.5 * yy - yb.dot(yat) + 0.5 * k.dot(aat)
}

/// Same loss as a function of `A`, from `m = (Y B)^T Y` and `k = (Y B)^T Y B`.
fn loss_a(yy: f64, m: &DMatrix<f64>, k: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    0.5 * yy - m.dot(a) + 0.5 * (k * a).dot(a)
}

/// Backtracking mirror step: halve `eta` until the loss does not increase,
/// grow it by 1.5 on acceptance. Returns the new factor and loss, or the
/// old ones when no decrease is found.
fn descend<F, G>(x: &DMatrix<f64>, f0: f64, eta: &mut f64, grad: G, eval: F) -> (DMatrix<f64>, f64)
where
    F: Fn(&DMatrix<f64>) -> f64,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let g = grad(x);
    for _ in 0..MAX_HALVINGS {
        let cand = eg_step(x, &g, *eta);
        let f = eval(&cand);
        if f <= f0 {
            *eta *= 1.5;
            return (cand, f);
        }
        *eta *= 0.5;
    }
    (x.clone(), f0)
}

fn run_candidate(y: &DMatrix<f64>, r: usize, rng: &mut impl Rng, opts: &SolverOptions) -> Run {
    let n = y.ncols();
    let mut b = random_simplex_cols(rng, n, r);
    let mut a = DMatrix::from_element(r, n, 1.0 / r as f64);
    let yy = y.norm_squared();
    let mut yb = y * &b;
    // a unit step moves abundances by O(1)
    let mut eta_a = r as f64 / yb.norm_squared().max(1e-300);
    let mut eta_b = eta_a;
    let mut f = 0.5 * (y - &yb * &a).norm_squared();
    let mut trace = vec![f];
    let mut converged = false;
    let mut epochs = 0;
    let max_epochs = opts.max_iter.min(EDAA_MAX_EPOCHS);
    while epochs < max_epochs {
        epochs += 1;
        let f_start = f;
        let m = yb.transpose() * y;
        let k = yb.transpose() * &yb;
        for _ in 0..EDAA_INNER_STEPS {
            let (na, nf) = descend(&a, f, &mut eta_a, |a| &k * a - &m, |a| loss_a(yy, &m, &k, a));
            a = na;
            f = nf;
        }
        let yat = y * a.transpose();
        let aat = &a * a.transpose();
        for _ in 0..EDAA_INNER_STEPS {
            let (nb, nf) = descend(
                &b,
                f,
                &mut eta_b,
                |b| y.tr_mul(&(y * b * &aat - &yat)),
                |b| loss_b(yy, &(y * b), &yat, &aat),
            );
            b = nb;
            f = nf;
            yb = y * &b;
        }
        trace.push(f);
        if f_start - f <= opts.tol * f.max(1e-12) {
            converged = true;
            break;
        }
    }
    Run {
        b,
        a,
        diagnostics: Diagnostics {
            converged,
            iterations: epochs,
            objective: trace,
        },
    }
}

/// Archetypal analysis by entropic (exponentiated-gradient) descent:
/// `min 1/2 ||Y - Y B A||_F^2` with both factors column stochastic, so
/// every endmember `Y b_j` is a convex combination of pixels.
///
/// `candidates` runs from random simplex-valued `B` (seeded from
/// `opts.seed`); the winner minimizes the sum of its coherence and l1
/// residual, each min-max normalized across runs. Ties keep the first run.
pub fn edaa(y: &HsiCube, r: usize, candidates: usize, opts: &SolverOptions) -> Result<EdaaResult> {
    opts.validate()?;
    if r < 2 {
        return Err(UnmixError::InvalidInput("EDAA needs r >= 2".into()));
    }
    if candidates == 0 {
        return Err(UnmixError::InvalidInput("EDAA needs at least one candidate".into()));
    }
    if r > y.pixels() {
        return Err(UnmixError::InvalidInput("more archetypes than pixels".into()));
    }
    let yv = y.values();
    let mut rng = stream_rng(opts.seed, Stream::Edaa);
    let runs: Vec<Run> = (0..candidates)
        .map(|_| run_candidate(yv, r, &mut rng, opts))
        .collect();
    let coh: Vec<f64> = runs.iter().map(|run| coherence(&(yv * &run.b))).collect();
    let res: Vec<f64> = runs
        .iter()
        .map(|run| (yv - yv * &run.b * &run.a).iter().map(|v| v.abs()).sum())
        .collect();
    let norm = |v: &[f64]| -> Vec<f64> {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        v.iter()
            .map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
            .collect()
    };
    let (nc, nr) = (norm(&coh), norm(&res));
    let mut chosen = 0;
    for k in 1..candidates {
        if nc[k] + nr[k] < nc[chosen] + nr[chosen] {
            chosen = k;
        }
    }
    let Run { b, a, diagnostics } = runs.into_iter().nth(chosen).expect("chosen run exists");
    let endmembers = EndmemberMatrix::new(yv * &b)?;
    let abundances = AbundanceMap::new(a.clone(), y.height(), y.width(), true, true)?;
    Ok(EdaaResult {
        factors: AaFactors {
            b,
            a,
            coherence: coh,
            residual_l1: res,
            chosen,
        },
        endmembers,
        abundances,
        diagnostics,
    })
}
