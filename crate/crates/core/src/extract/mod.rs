//! Geometrical endmember extraction.
//!
//! [`vca`] and [`sivm`] select pixels (they assume pure pixels exist);
//! [`sisal`] fits a minimum-volume simplex and also works without them.

mod sisal;
mod sivm;
mod vca;

pub use sisal::{sisal, SisalParams};
pub use sivm::sivm;
pub use vca::vca;

use nalgebra::DMatrix;

use crate::error::{Result, UnmixError};
use crate::subspace::{fit_with_spectrum, SubspaceModel};
use crate::types::{Diagnostics, EndmemberMatrix, HsiCube};

#[derive(Debug, Clone)]
pub struct ExtractionResult {
    pub endmembers: EndmemberMatrix,
    /// Selected pixel columns (pixel-selection methods only).
    pub indices: Option<Vec<usize>>,
    pub diagnostics: Diagnostics,
}

/// Top-`r` linear subspace of `Y` and the projected pixels, rejecting data
/// whose rank is below `r`.
fn reduce(y: &HsiCube, r: usize) -> Result<(SubspaceModel, DMatrix<f64>)> {
    if r == 0 {
        return Err(UnmixError::InvalidInput("r must be >= 1".into()));
    }
    let (model, s) = fit_with_spectrum(y.values(), r, false)?;
    if s[r - 1] <= 1e-9 * s[0].max(1e-300) {
        return Err(UnmixError::DegenerateInput(format!(
            "data rank is below {r} (singular value {} of {:e})",
            r,
            s[r - 1]
        )));
    }
    let x = model.project(y.values())?;
    Ok((model, x))
}

/// Selected pixels, denoised by projection onto the signal subspace.
fn pick_columns(model: &SubspaceModel, x: &DMatrix<f64>, idx: &[usize]) -> Result<EndmemberMatrix> {
    EndmemberMatrix::new(model.backproject(&x.select_columns(idx.iter()))?)
}
