use nalgebra::DMatrix;

use super::{pick_columns, reduce, ExtractionResult};
use crate::error::Result;
use crate::geometry::volume_from_squared_distances;
use crate::types::{Diagnostics, HsiCube};

/// Simplex volume maximization. Works in the top-`r` subspace: starts from
/// the pixel farthest from the data mean, then greedily adds the pixel that
/// maximizes the Cayley-Menger volume of the selected set. A replacement
/// pass then swaps single vertices while the full `r`-vertex volume grows.
///
/// The objective trace holds the full-simplex volume after the greedy stage
/// and after every improving replacement sweep, so it is strictly
/// increasing. Deterministic; ties go to the lowest pixel index. Returned
/// spectra are the chosen pixels projected onto the signal subspace.
pub fn sivm(y: &HsiCube, r: usize) -> Result<ExtractionResult> {
    let (model, x) = reduce(y, r)?;
    let n = x.ncols();
    let mean = x.column_mean();
    let mut first = 0;
    let mut far = -1.0;
    for (j, c) in x.column_iter().enumerate() {
        let d = (c - &mean).norm_squared();
        if d > far {
            far = d;
            first = j;
        }
    }
    let mut chosen = vec![first];
    let sqdist = |a: usize, b: usize| (x.column(a) - x.column(b)).norm_squared();
    // Squared distance of every pixel to each chosen vertex.
    let mut to_chosen: Vec<Vec<f64>> = vec![(0..n).map(|j| sqdist(j, first)).collect()];

    while chosen.len() < r {
        let k = chosen.len();
        let mut sq = DMatrix::zeros(k + 1, k + 1);
        for a in 0..k {
            for b in (a + 1)..k {
                let d = to_chosen[b][chosen[a]];
                sq[(a, b)] = d;
                sq[(b, a)] = d;
            }
        }
        let mut best = (usize::MAX, -1.0);
        for j in 0..n {
            if chosen.contains(&j) {
                continue;
            }
            for a in 0..k {
                sq[(a, k)] = to_chosen[a][j];
                sq[(k, a)] = to_chosen[a][j];
            }
            let v = volume_from_squared_distances(&sq)?;
            if v > best.1 {
                best = (j, v);
            }
        }
        let j = best.0;
        chosen.push(j);
        to_chosen.push((0..n).map(|i| sqdist(i, j)).collect());
    }

    let full_volume = |set: &[usize]| -> Result<f64> {
        let sq = DMatrix::from_fn(set.len(), set.len(), |a, b| sqdist(set[a], set[b]));
        volume_from_squared_distances(&sq)
    };
    let mut volume = if r >= 2 { full_volume(&chosen)? } else { far.sqrt() };
    let mut trace = vec![volume];
    let mut sweeps = 0;
    if r >= 2 {
        loop {
            sweeps += 1;
            let mut improved = false;
            for pos in 0..r {
                let mut best = (chosen[pos], volume);
                let mut trial = chosen.clone();
                for j in 0..n {
                    if chosen.contains(&j) {
                        continue;
                    }
                    trial[pos] = j;
                    let v = full_volume(&trial)?;
                    if v > best.1 * (1.0 + 1e-12) {
                        best = (j, v);
                    }
                }
                if best.0 != chosen[pos] {
                    chosen[pos] = best.0;
                    volume = best.1;
                    improved = true;
                }
            }
            if !improved || sweeps >= 20 {
                break;
            }
            trace.push(volume);
        }
    }
    Ok(ExtractionResult {
        endmembers: pick_columns(&model, &x, &chosen)?,
        indices: Some(chosen),
        diagnostics: Diagnostics {
            converged: true,
            iterations: sweeps,
            objective: trace,
        },
    })
}
