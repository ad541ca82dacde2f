use nalgebra::{DMatrix, DVector};

use super::sunsal::SparseCode;
use super::SpectralLibrary;
use crate::error::{Result, UnmixError};
use crate::eval::spectral_angle;
use crate::subspace::fit_subspace_matrix;
use crate::supervised::fclsu_matrix;
use crate::types::{Diagnostics, HsiCube, SolverOptions};

/// Normalized projection error `||P_perp d|| / ||d||` of every atom onto the
/// `r_sub`-dimensional linear subspace of `Y`. A zero atom scores 1.
pub fn music_scores(y: &HsiCube, d: &SpectralLibrary, r_sub: usize) -> Result<Vec<f64>> {
    d.check_bands(y)?;
    let model = fit_subspace_matrix(y.values(), r_sub, false)?;
    Ok(d.atoms()
        .column_iter()
        .map(|c| {
            let c: DVector<f64> = c.into_owned();
            let nrm = c.norm();
            if nrm > 0.0 {
                model.residual(&c).norm() / nrm
            } else {
                1.0
            }
        })
        .collect())
}

/// MUSIC library pruning: keeps the `keep` atoms with the lowest projection
/// error onto the data subspace, in library order. Ties keep lower indices.
pub fn music_prune(
    y: &HsiCube,
    d: &SpectralLibrary,
    r_sub: usize,
    keep: usize,
) -> Result<SpectralLibrary> {
    if keep == 0 || keep > d.len() {
        return Err(UnmixError::InvalidInput(format!(
            "keep must be in 1..={}, got {keep}",
            d.len()
        )));
    }
    let scores = music_scores(y, d, r_sub)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    Ok(d.subset(&kept))
}

/// Greedy angular pruning in atom order: an atom is dropped when it lies
/// within `min_angle_deg` of an atom already kept. Zero atoms are dropped.
pub fn sad_prune(d: &SpectralLibrary, min_angle_deg: f64) -> Result<SpectralLibrary> {
    if !(min_angle_deg >= 0.0) {
        return Err(UnmixError::InvalidInput("min_angle must be >= 0".into()));
    }
    let atoms = d.atoms();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..atoms.ncols() {
        let col = atoms.column(j);
        if col.norm() == 0.0 {
            continue;
        }
        let mut close = false;
        for &k in &kept {
            let ang = spectral_angle(col.as_slice(), atoms.column(k).as_slice())?;
            if ang < min_angle_deg {
                close = true;
                break;
            }
        }
        if !close {
            kept.push(j);
        }
    }
    if kept.is_empty() {
        return Err(UnmixError::InvalidInput("library has only zero atoms".into()));
    }
    Ok(d.subset(&kept))
}

/// Default number of rescaling cycles.
pub const RESCALE_CYCLES: usize = 5;

#[derive(Debug, Clone)]
pub struct RescaleResult {
    /// Diagonal of `S`, one factor per band.
    pub scales: DVector<f64>,
    pub code: SparseCode,
    /// `objective` holds `||S Y - D X||_F` after the first `X`-step and then
    /// after every cycle.
    pub diagnostics: Diagnostics,
}

/// Bandwise rescaling: alternates a simplex-constrained least-squares fit
/// of `S Y` on `D` with the per-band closed form
/// `s_b = <y_b, (D X)_b> / <y_b, y_b>`, starting from `S = I`.
pub fn rescale_bands(y: &HsiCube, d: &SpectralLibrary, opts: &SolverOptions) -> Result<RescaleResult> {
    rescale_bands_with(y, d, RESCALE_CYCLES, opts)
}

pub fn rescale_bands_with(
    y: &HsiCube,
    d: &SpectralLibrary,
    cycles: usize,
    opts: &SolverOptions,
) -> Result<RescaleResult> {
    d.check_bands(y)?;
    opts.validate()?;
    let yv = y.values();
    let p = yv.nrows();
    let band_energy: Vec<f64> = yv.row_iter().map(|r| r.norm_squared()).collect();
    if let Some(b) = band_energy.iter().position(|&e| e == 0.0) {
        return Err(UnmixError::ZeroBand(b));
    }
    let mut s = DVector::from_element(p, 1.0);
    let scaled = |s: &DVector<f64>| {
        let mut m = yv.clone();
        for (b, mut row) in m.row_iter_mut().enumerate() {
            row *= s[b];
        }
        m
    };
    let mut x: Option<DMatrix<f64>> = None;
    let mut trace = Vec::with_capacity(cycles + 1);
    let mut converged = false;
    for c in 0..cycles {
        let sy = scaled(&s);
        let (xn, _) = fclsu_matrix(&sy, d.atoms(), opts, x.as_ref());
        if c == 0 {
            trace.push((&sy - d.atoms() * &xn).norm());
        }
        let dx = d.atoms() * &xn;
        for b in 0..p {
            s[b] = yv.row(b).dot(&dx.row(b)) / band_energy[b];
        }
        let res = (scaled(&s) - &dx).norm();
        let prev = *trace.last().unwrap_or(&f64::INFINITY);
        trace.push(res);
        x = Some(xn);
        if prev - res <= opts.tol * res.max(1e-12) {
            converged = true;
            break;
        }
    }
    let x = x.unwrap_or_else(|| fclsu_matrix(yv, d.atoms(), opts, None).0);
    let iterations = trace.len().saturating_sub(1);
    Ok(RescaleResult {
        scales: s,
        code: SparseCode::new(x, y.height(), y.width())?,
        diagnostics: Diagnostics {
            converged,
            iterations,
            objective: trace,
        },
    })
}
