//! Simplex volumes and the total-variation endmember penalty.

use nalgebra::DMatrix;

use crate::error::{Result, UnmixError};
use crate::types::EndmemberMatrix;

/// Radicands down to this value are treated as a degenerate (zero) volume.
pub const RADICAND_CLAMP: f64 = -1e-12;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Volume of the simplex spanned by the origin and the `r` columns of a
/// square `r x r` matrix: `|det E| / r!`.
pub fn simplex_volume_origin(e: &EndmemberMatrix) -> Result<f64> {
    let m = e.spectra();
    if m.nrows() != m.ncols() {
        return Err(UnmixError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.clone().determinant().abs() / factorial(m.ncols()))
}

/// Volume of the `(r-1)`-simplex whose vertices are the `r` columns, computed
/// from pairwise distances with the Cayley-Menger determinant.
pub fn simplex_volume_cmd(e: &EndmemberMatrix) -> Result<f64> {
    let m = e.spectra();
    let r = m.ncols();
    if r < 2 {
        return Err(UnmixError::InvalidInput(
            "Cayley-Menger volume needs at least 2 vertices".into(),
        ));
    }
    let mut sq = DMatrix::zeros(r, r);
    for i in 0..r {
        for j in (i + 1)..r {
            let d = (m.column(i) - m.column(j)).norm_squared();
            sq[(i, j)] = d;
            sq[(j, i)] = d;
        }
    }
    volume_from_squared_distances(&sq)
}

/// Cayley-Menger volume from an `r x r` matrix of squared pairwise distances.
pub(crate) fn volume_from_squared_distances(sq: &DMatrix<f64>) -> Result<f64> {
    let r = sq.nrows();
    let mut cm = DMatrix::from_element(r + 1, r + 1, 1.0);
    cm[(0, 0)] = 0.0;
    cm.view_mut((1, 1), (r, r)).copy_from(sq);
    let det = cm.determinant();
    let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
    let denom = 2f64.powi(r as i32 - 1) * factorial(r - 1).powi(2);
    let radicand = sign * det / denom;
    if radicand < RADICAND_CLAMP {
        return Err(UnmixError::NegativeRadicand(radicand));
    }
    Ok(radicand.max(0.0).sqrt())
}

/// `||E (I - 11^T / r)||_F^2`, the squared spread of the endmembers around
/// their centroid. Equal to `sum_i ||e_i - mean||^2`.
pub fn tv_endmember_penalty(e: &EndmemberMatrix) -> f64 {
    let m = e.spectra();
    let r = m.ncols();
    let centering =
        DMatrix::<f64>::identity(r, r) - DMatrix::from_element(r, r, 1.0 / r as f64);
    (m * centering).norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn em(rows: usize, cols: usize, data: &[f64]) -> EndmemberMatrix {
        EndmemberMatrix::new(DMatrix::from_row_slice(rows, cols, data)).unwrap()
    }

    #[test]
    fn origin_volume_examples() {
        let i2 = EndmemberMatrix::new(DMatrix::identity(2, 2)).unwrap();
        assert!((simplex_volume_origin(&i2).unwrap() - 0.5).abs() < 1e-15);
        let i3 = EndmemberMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert!((simplex_volume_origin(&i3).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        let flat = em(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(simplex_volume_origin(&flat).unwrap(), 0.0);
        let wide = em(2, 3, &[1.0; 6]);
        assert!(matches!(
            simplex_volume_origin(&wide),
            Err(UnmixError::NotSquare { .. })
        ));
    }

    #[test]
    fn cmd_volume_examples() {
        let seg = em(2, 2, &[0.0, 3.0, 0.0, 0.0]);
        assert!((simplex_volume_cmd(&seg).unwrap() - 3.0).abs() < 1e-12);
        let h = 3f64.sqrt() / 2.0;
        let tri = em(2, 3, &[0.0, 1.0, 0.5, 0.0, 0.0, h]);
        assert!((simplex_volume_cmd(&tri).unwrap() - 3f64.sqrt() / 4.0).abs() < 1e-12);
        let line = em(2, 3, &[0.0, 1.0, 2.0, 0.0, 1.0, 2.0]);
        assert!(simplex_volume_cmd(&line).unwrap() < 1e-6);
    }

    #[test]
    fn tv_examples() {
        let same = em(3, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 0.5, 0.5, 0.5]);
        assert!(tv_endmember_penalty(&same) < 1e-24);
        let pair = em(1, 2, &[1.0, -1.0]);
        assert!((tv_endmember_penalty(&pair) - 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn tv_matches_centroid_and_pairwise_forms(data in prop::collection::vec(-5.0f64..5.0, 12)) {
            let e = em(4, 3, &data);
            let m = e.spectra();
            let r = m.ncols() as f64;
            let mean = m.column_sum() / r;
            let centroid: f64 = m.column_iter().map(|c| (c - &mean).norm_squared()).sum();
            let mut pairwise = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    pairwise += (m.column(i) - m.column(j)).norm_squared();
                }
            }
            let tv = tv_endmember_penalty(&e);
            let scale = tv.max(1e-300);
            prop_assert!((tv - centroid).abs() / scale <= 1e-10);
            prop_assert!((tv - pairwise / (2.0 * r)).abs() / scale <= 1e-10);
        }

        #[test]
        fn cmd_agrees_with_origin_volume(data in prop::collection::vec(-1.0f64..1.0, 1..26), extra in 1usize..5) {
            // r points in R^r plus the origin form an r-simplex; its volume via
            // Cayley-Menger on r+1 vertices must equal |det|/r!.
            let r = extra.min(5);
            let mut vals = data.clone();
            vals.resize(r * r, 0.37);
            let square = DMatrix::from_column_slice(r, r, &vals);
            let origin = simplex_volume_origin(&EndmemberMatrix::new(square.clone()).unwrap()).unwrap();
            let mut with_origin = DMatrix::zeros(r, r + 1);
            with_origin.view_mut((0, 1), (r, r)).copy_from(&square);
            let cmd = simplex_volume_cmd(&EndmemberMatrix::new(with_origin).unwrap());
            if origin > 1e-3 {
                let v = cmd.unwrap();
                prop_assert!((v - origin).abs() <= 1e-8 * origin);
            }
        }
    }
}
