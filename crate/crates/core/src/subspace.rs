//! Linear and affine signal subspaces from a thin SVD.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Result, UnmixError};
use crate::types::HsiCube;

/// Orthonormal basis `V` (p x r) and center `c` (zero for a linear fit).
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceModel {
    basis: DMatrix<f64>,
    center: DVector<f64>,
}

impl SubspaceModel {
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn bands(&self) -> usize {
        self.basis.nrows()
    }

    /// `V^T (Y - c 1^T)`.
    pub fn project(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.nrows() != self.bands() {
            return Err(UnmixError::ShapeMismatch(format!(
                "data has {} bands, subspace expects {}",
                y.nrows(),
                self.bands()
            )));
        }
        let mut centered = y.clone();
        for mut col in centered.column_iter_mut() {
            col -= &self.center;
        }
        Ok(self.basis.transpose() * centered)
    }

    /// `V F + c 1^T`. Backprojected spectra are not clamped, so noise can
    /// push reflectances slightly below zero.
    pub fn backproject(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if f.nrows() != self.dim() {
            return Err(UnmixError::ShapeMismatch(format!(
                "coordinates have {} rows, subspace dimension is {}",
                f.nrows(),
                self.dim()
            )));
        }
        let mut out = &self.basis * f;
        for mut col in out.column_iter_mut() {
            col += &self.center;
        }
        Ok(out)
    }

    /// Orthogonal residual `(I - V V^T)(x - c)`.
    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let centered = x - &self.center;
        let coords = self.basis.transpose() * &centered;
        centered - &self.basis * coords
    }
}

pub fn fit_subspace(y: &HsiCube, r: usize, affine: bool) -> Result<SubspaceModel> {
    fit_subspace_matrix(y.values(), r, affine)
}

/// Top-`r` left singular vectors of `Y` (or of `Y - mean` when `affine`).
/// Each basis vector is signed so its largest-magnitude entry is positive.
pub fn fit_subspace_matrix(y: &DMatrix<f64>, r: usize, affine: bool) -> Result<SubspaceModel> {
    fit_with_spectrum(y, r, affine).map(|(m, _)| m)
}

/// As [`fit_subspace_matrix`], also returning all singular values of the
/// (centered) data in decreasing order.
pub(crate) fn fit_with_spectrum(
    y: &DMatrix<f64>,
    r: usize,
    affine: bool,
) -> Result<(SubspaceModel, Vec<f64>)> {
    let (p, n) = y.shape();
    let limit = p.min(n);
    if r == 0 {
        return Err(UnmixError::InvalidInput("subspace dimension must be >= 1".into()));
    }
    if r > limit {
        return Err(UnmixError::RankTooLarge { requested: r, limit });
    }
    let center = if affine {
        y.column_mean()
    } else {
        DVector::zeros(p)
    };
    let mut centered = y.clone();
    if affine {
        for mut col in centered.column_iter_mut() {
            col -= &center;
        }
    }
    let (u, s) = left_singular(centered);
    let mut basis = DMatrix::zeros(p, r);
    for k in 0..r {
        let mut col = u.column(k).into_owned();
        let (imax, _) = col
            .iter()
            .enumerate()
            .fold((0, 0.0), |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        basis.set_column(k, &col);
    }
    Ok((SubspaceModel { basis, center }, s))
}

/// Left singular vectors and singular values, sorted decreasingly. Wide
/// matrices go through the eigendecomposition of the `p x p` scatter
/// matrix, which is much cheaper than an SVD when `n >> p`.
fn left_singular(y: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (p, n) = y.shape();
    let (u, s) = if n > 4 * p {
        let eig = SymmetricEigen::new(&y * y.transpose());
        let s: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
        (eig.eigenvectors, s)
    } else {
        let svd = SVD::new(y, true, false);
        let s = svd.singular_values.iter().copied().collect();
        (svd.u.expect("left singular vectors requested"), s)
    };
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let u = u.select_columns(order.iter());
    let s = order.iter().map(|&i| s[i]).collect();
    (u, s)
}

/// Singular values of `Y` in decreasing order.
#[cfg(test)]
pub(crate) fn singular_values(y: &DMatrix<f64>) -> Vec<f64> {
    left_singular(y.clone()).1
}
