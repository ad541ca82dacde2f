//! The probability simplex: Euclidean projection and softmax.

use crate::error::{Result, UnmixError};

/// Euclidean projection of `v` onto `{x : x >= 0, sum(x) = 1}`.
///
/// Sort-based threshold method: find `tau` such that `sum(max(v - tau, 0)) = 1`.
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(UnmixError::EmptyVector);
    }
    let mut out = v.to_vec();
    let mut scratch = Vec::with_capacity(v.len());
    project_simplex_in_place(&mut out, &mut scratch);
    Ok(out)
}

/// In-place variant for hot loops; `scratch` is reused between calls.
pub(crate) fn project_simplex_in_place(v: &mut [f64], scratch: &mut Vec<f64>) {
    let tau = simplex_threshold(v, scratch);
    for x in v.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
}

fn simplex_threshold(v: &[f64], sorted: &mut Vec<f64>) -> f64 {
    sorted.clear();
    sorted.extend_from_slice(v);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    tau
}

/// Scaled softmax `exp(gamma * v) / sum(exp(gamma * v))`, computed with the
/// maximum subtracted first so large inputs do not overflow.
pub fn softmax(v: &[f64], gamma: f64) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|&x| (gamma * (x - max)).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn projection_examples() {
        assert!(close(&project_simplex(&[0.4, 0.6]).unwrap(), &[0.4, 0.6], 1e-15));
        assert!(close(&project_simplex(&[0.5, 0.7]).unwrap(), &[0.4, 0.6], 1e-15));
        assert!(close(&project_simplex(&[1.5, -0.3]).unwrap(), &[1.0, 0.0], 1e-15));
        assert!(matches!(project_simplex(&[]), Err(UnmixError::EmptyVector)));
    }

    #[test]
    fn projection_matches_grid_search() {
        // Oracle: brute-force minimum distance over the 2-simplex at step 1e-4.
        let v = [1.5, -0.3];
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=10_000 {
            let x = k as f64 * 1e-4;
            let d = (x - v[0]).powi(2) + (1.0 - x - v[1]).powi(2);
            if d < best.0 {
                best = (d, x);
            }
        }
        let p = project_simplex(&v).unwrap();
        assert!((p[0] - best.1).abs() <= 1e-4);
    }

    #[test]
    fn softmax_examples() {
        assert!(close(&softmax(&[0.0, 0.0, 0.0], 1.0), &[1.0 / 3.0; 3], 1e-15));
        let s = softmax(&[2f64.ln(), 0.0], 1.0);
        assert!(close(&s, &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
        let s = softmax(&[5.0, 1.0, 1.0], 3.0);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s[0] > s[1] && s[0] > s[2]);
        // no overflow for huge inputs
        let s = softmax(&[1e308, 0.0], 10.0);
        assert!(close(&s, &[1.0, 0.0], 0.0));
    }

    proptest! {
        #[test]
        fn projection_kkt(v in prop::collection::vec(-10.0f64..10.0, 1..20)) {
            let p = project_simplex(&v).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            // one threshold tau explains every coordinate
            let (i, _) = p.iter().enumerate().find(|(_, &x)| x > 0.0).unwrap();
            let tau = v[i] - p[i];
            for (x, y) in v.iter().zip(&p) {
                prop_assert!((y - (x - tau).max(0.0)).abs() <= 1e-10);
            }
            let again = project_simplex(&p).unwrap();
            prop_assert!(close(&again, &p, 1e-12));
        }

        #[test]
        fn softmax_on_simplex(v in prop::collection::vec(-50.0f64..50.0, 1..12), gamma in 1.0f64..20.0) {
            let s = softmax(&v, gamma);
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(s.iter().all(|&x| x >= 0.0));
            let argmax = |xs: &[f64]| xs.iter().enumerate().fold(0, |b, (i, &x)| if x > xs[b] { i } else { b });
            prop_assert_eq!(argmax(&s), argmax(&v));
        }
    }
}
