use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::{pick_columns, reduce, ExtractionResult};
use crate::error::{Result, UnmixError};
use crate::rng::{stream_rng, Stream};
use crate::types::{Diagnostics, HsiCube};

/// Vertex component analysis. Data are reduced to `r` dimensions and
/// projectively scaled onto the plane `x^T u = 1` (`u` the mean pixel);
/// step `i` draws a Gaussian direction, removes its component in the span
/// of the pixels chosen so far and keeps the pixel with the largest
/// absolute projection. Ties go to the lowest pixel index and no pixel is
/// chosen twice. The returned spectra are the chosen pixels projected onto
/// the `r`-dimensional signal subspace.
pub fn vca(y: &HsiCube, r: usize, seed: u64) -> Result<ExtractionResult> {
    let (model, x) = reduce(y, r)?;
    let n = x.ncols();
    let u = x.column_mean();
    let dots: Vec<f64> = x.column_iter().map(|c| c.dot(&u)).collect();
    let scale = u.norm_squared();
    let projective = dots.iter().all(|&d| d > 1e-9 * scale);
    let xp = if projective {
        DMatrix::from_fn(r, n, |i, j| x[(i, j)] / dots[j])
    } else {
        x.clone()
    };

    let mut rng = stream_rng(seed, Stream::Vca);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(r);
    let mut chosen: Vec<usize> = Vec::with_capacity(r);
    let mut trace = Vec::with_capacity(r);
    for _ in 0..r {
        let mut f = DVector::from_fn(r, |_, _| StandardNormal.sample(&mut rng));
        for b in &basis {
            let c = b.dot(&f);
            f.axpy(-c, b, 1.0);
        }
        let fnorm = f.norm();
        if fnorm < 1e-12 {
            return Err(UnmixError::DegenerateInput("no direction left to explore".into()));
        }
        f /= fnorm;
        let proj = f.transpose() * &xp;
        let mut best: Option<(usize, f64)> = None;
        for (j, v) in proj.iter().enumerate() {
            if chosen.contains(&j) {
                continue;
            }
            if best.is_none_or(|(_, bv)| v.abs() > bv) {
                best = Some((j, v.abs()));
            }
        }
        let (j, val) = best.ok_or_else(|| UnmixError::DegenerateInput("fewer pixels than endmembers".into()))?;
        chosen.push(j);
        trace.push(val);
        let mut v = xp.column(j).into_owned();
        for b in &basis {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
        let vn = v.norm();
        if vn > 1e-12 * xp.column(j).norm() {
            basis.push(v / vn);
        }
    }
    if basis.len() < r {
        return Err(UnmixError::DegenerateInput(format!(
            "selected pixels span only {} dimensions",
            basis.len()
        )));
    }
    Ok(ExtractionResult {
        endmembers: pick_columns(&model, &x, &chosen)?,
        indices: Some(chosen),
        diagnostics: Diagnostics {
            converged: true,
            iterations: r,
            objective: trace,
        },
    })
}
