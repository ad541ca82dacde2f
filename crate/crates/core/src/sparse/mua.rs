use nalgebra::DMatrix;

use super::admm::{self, Penalty, Quadratic};
use super::sunsal::{check_weight, sunsal, LsData, SparseCode};
use super::SpectralLibrary;
use crate::error::{Result, UnmixError};
use crate::subspace::fit_subspace_matrix;
use crate::types::{Diagnostics, HsiCube, SolverOptions};

/// SLIC superpixel settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicParams {
    /// Grid interval `S` in pixels; roughly the side of one superpixel.
    pub size: f64,
    pub compactness: f64,
    pub iterations: usize,
}

impl SlicParams {
    pub fn new(size: f64) -> Self {
        Self {
            size,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

/// Range the spectral features are rescaled to, comparable to Lab units.
const FEATURE_RANGE: f64 = 100.0;

/// SLIC on the top (up to) three principal components of the cube.
/// Returns one label per pixel, labels dense in `0..k`.
pub fn slic(y: &HsiCube, params: &SlicParams) -> Result<Vec<usize>> {
    if !(params.size >= 1.0) || !(params.compactness >= 0.0) {
        return Err(UnmixError::InvalidInput(
            "SLIC needs size >= 1 and compactness >= 0".into(),
        ));
    }
    let (h, w) = (y.height(), y.width());
    let n = h * w;
    let k = 3.min(y.bands()).min(n.saturating_sub(1)).max(1);
    let feats = if n > 1 {
        let model = fit_subspace_matrix(y.values(), k, true)?;
        model.project(y.values())?
    } else {
        DMatrix::zeros(k, n)
    };
    let lo = feats.min();
    let hi = feats.max();
    let f = if hi > lo {
        feats.map(|v| (v - lo) * FEATURE_RANGE / (hi - lo))
    } else {
        DMatrix::zeros(k, n)
    };

    let s = params.size;
    let rows = ((h as f64 / s).round() as usize).max(1);
    let cols = ((w as f64 / s).round() as usize).max(1);
    let mut centers: Vec<(Vec<f64>, f64, f64)> = Vec::with_capacity(rows * cols);
    for a in 0..rows {
        for b in 0..cols {
            let ri = (((a as f64 + 0.5) * h as f64 / rows as f64) as usize).min(h - 1);
            let ci = (((b as f64 + 0.5) * w as f64 / cols as f64) as usize).min(w - 1);
            let j = ri * w + ci;
            centers.push((f.column(j).iter().copied().collect(), ri as f64, ci as f64));
        }
    }
    let m2 = (params.compactness / s).powi(2);
    let mut labels = vec![usize::MAX; n];
    let reach = (2.0 * s).ceil() as i64;
    for _ in 0..params.iterations.max(1) {
        let mut dist = vec![f64::INFINITY; n];
        for (ci, (cf, cr, cc)) in centers.iter().enumerate() {
            let (r0, c0) = (*cr as i64, *cc as i64);
            for rr in (r0 - reach).max(0)..(r0 + reach + 1).min(h as i64) {
                for cc2 in (c0 - reach).max(0)..(c0 + reach + 1).min(w as i64) {
                    let j = rr as usize * w + cc2 as usize;
                    let dc: f64 = cf.iter().zip(f.column(j).iter()).map(|(a, b)| (a - b).powi(2)).sum();
                    let ds = (rr as f64 - cr).powi(2) + (cc2 as f64 - cc).powi(2);
                    let d = dc + m2 * ds;
                    if d < dist[j] {
                        dist[j] = d;
                        labels[j] = ci;
                    }
                }
            }
        }
        let mut acc = vec![(vec![0.0; k], 0.0, 0.0, 0usize); centers.len()];
        for j in 0..n {
            let a = &mut acc[labels[j]];
            for (t, v) in a.0.iter_mut().zip(f.column(j).iter()) {
                *t += v;
            }
            a.1 += (j / w) as f64;
            a.2 += (j % w) as f64;
            a.3 += 1;
        }
        for (c, a) in centers.iter_mut().zip(acc) {
            if a.3 > 0 {
                let cnt = a.3 as f64;
                *c = (a.0.iter().map(|v| v / cnt).collect(), a.1 / cnt, a.2 / cnt);
            }
        }
    }
    Ok(enforce_connectivity(&labels, h, w))
}

fn neighbors(j: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (j / w, j % w);
    [
        (r > 0).then(|| j - w),
        (r + 1 < h).then(|| j + w),
        (c > 0).then(|| j - 1),
        (c + 1 < w).then(|| j + 1),
    ]
    .into_iter()
    .flatten()
}

/// Splits labels into 4-connected components, keeps the largest component
/// of every label and merges each other component into the largest
/// adjacent kept segment. Relabels densely in raster order.
fn enforce_connectivity(labels: &[usize], h: usize, w: usize) -> Vec<usize> {
    let n = labels.len();
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut owner = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut stack = vec![s];
        comp[s] = id;
        let mut size = 0;
        while let Some(j) = stack.pop() {
            size += 1;
            for nb in neighbors(j, h, w) {
                if comp[nb] == usize::MAX && labels[nb] == labels[s] {
                    comp[nb] = id;
                    stack.push(nb);
                }
            }
        }
        sizes.push(size);
        owner.push(labels[s]);
    }
    let ncomp = sizes.len();
    let mut keep = vec![false; ncomp];
    let mut best: std::collections::HashMap<usize, usize> = Default::default();
    for c in 0..ncomp {
        let e = best.entry(owner[c]).or_insert(c);
        if sizes[c] > sizes[*e] {
            *e = c;
        }
    }
    for &c in best.values() {
        keep[c] = true;
    }
    // Orphans, smallest first, join their largest kept neighbor.
    let mut target: Vec<usize> = (0..ncomp).collect();
    let mut orphans: Vec<usize> = (0..ncomp).filter(|&c| !keep[c]).collect();
    orphans.sort_by_key(|&c| (sizes[c], c));
    let find = |t: &Vec<usize>, mut c: usize| {
        while t[c] != c {
            c = t[c];
        }
        c
    };
    let mut merged_size = sizes.clone();
    for &c in &orphans {
        let mut cand: Option<usize> = None;
        for j in 0..n {
            if comp[j] != c {
                continue;
            }
            for nb in neighbors(j, h, w) {
                let o = find(&target, comp[nb]);
                if o != c && cand.is_none_or(|b| merged_size[o] > merged_size[b]) {
                    cand = Some(o);
                }
            }
        }
        if let Some(o) = cand {
            target[c] = o;
            merged_size[o] += merged_size[c];
        }
    }
    let mut dense = std::collections::HashMap::new();
    let mut out = vec![0; n];
    for j in 0..n {
        let root = find(&target, comp[j]);
        let next = dense.len();
        out[j] = *dense.entry(root).or_insert(next);
    }
    out
}

/// Multiscale sparse unmixing. Stage 1 segments the image with SLIC
/// (grid interval `beta` pixels); stage 2 runs [`sunsal`] (weight
/// `lambda1`) on the segment-mean spectra; stage 3 solves, for every pixel,
/// `1/2 ||y - D x||^2 + lambda1 ||x||_1 + lambda2 ||x - x_seg||^2`, `x >= 0`,
/// with `x_seg` the coefficients of the pixel's segment.
pub fn mua(
    y: &HsiCube,
    d: &SpectralLibrary,
    beta: f64,
    lambda1: f64,
    lambda2: f64,
    opts: &SolverOptions,
) -> Result<(SparseCode, Diagnostics)> {
    mua_with(y, d, &SlicParams::new(beta), lambda1, lambda2, opts)
}

pub fn mua_with(
    y: &HsiCube,
    d: &SpectralLibrary,
    slic_params: &SlicParams,
    lambda1: f64,
    lambda2: f64,
    opts: &SolverOptions,
) -> Result<(SparseCode, Diagnostics)> {
    d.check_bands(y)?;
    opts.validate()?;
    check_weight("lambda1", lambda1)?;
    check_weight("lambda2", lambda2)?;
    let labels = slic(y, slic_params)?;
    let k = labels.iter().max().map_or(0, |v| v + 1);
    if k < 2 {
        return Err(UnmixError::SegmentationFailure(k));
    }
    let x_seg = segment_code(y, d, &labels, k, lambda1, opts)?;
    let ls = LsData::new(y.values(), d.atoms());
    let mut gram = ls.gram.clone();
    for i in 0..gram.nrows() {
        gram[(i, i)] += 2.0 * lambda2;
    }
    let lin = &ls.lin + &x_seg * (2.0 * lambda2);
    let quad = Quadratic {
        gram: &gram,
        lin: &lin,
        constant: ls.constant + lambda2 * x_seg.norm_squared(),
    };
    let (x, diag) = admm::solve(&quad, Penalty::L1(lambda1), false, opts, Some(&x_seg));
    Ok((SparseCode::new(x, y.height(), y.width())?, diag))
}

/// Stage 2: coefficients of every segment mean, broadcast to its pixels.
fn segment_code(
    y: &HsiCube,
    d: &SpectralLibrary,
    labels: &[usize],
    k: usize,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<DMatrix<f64>> {
    let p = y.bands();
    let mut means = DMatrix::zeros(p, k);
    let mut counts = vec![0usize; k];
    for (j, &l) in labels.iter().enumerate() {
        let mut col = means.column_mut(l);
        col += y.values().column(j);
        counts[l] += 1;
    }
    for (l, &c) in counts.iter().enumerate() {
        let mut col = means.column_mut(l);
        col /= c as f64;
    }
    let seg = HsiCube::new(1, k, means)?;
    let (code, _) = sunsal(&seg, d, lambda, false, opts)?;
    let xs = code.coeffs();
    Ok(DMatrix::from_fn(xs.nrows(), labels.len(), |i, j| xs[(i, labels[j])]))
}
