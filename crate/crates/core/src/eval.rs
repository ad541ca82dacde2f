//! Metrics, endmember alignment and run reports.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};
use crate::types::{Diagnostics, EndmemberMatrix};

/// Largest endmember count accepted by [`hungarian_align`].
pub const MAX_ALIGN: usize = 64;

/// Signal-to-reconstruction error in dB, `20 log10(||X|| / ||X - X_hat||)`.
/// Returns `+inf` when the two agree to within `1e-300` in Frobenius norm.
pub fn sre(x_true: &DMatrix<f64>, x_est: &DMatrix<f64>) -> Result<f64> {
    if x_true.shape() != x_est.shape() {
        return Err(UnmixError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            x_true.shape(),
            x_est.shape()
        )));
    }
    let num = x_true.norm();
    if num == 0.0 {
        return Err(UnmixError::ZeroReference);
    }
    let den = (x_true - x_est).norm();
    if den < 1e-300 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (num / den).log10())
}

pub fn rmse(x_true: &DMatrix<f64>, x_est: &DMatrix<f64>) -> Result<f64> {
    if x_true.shape() != x_est.shape() {
        return Err(UnmixError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            x_true.shape(),
            x_est.shape()
        )));
    }
    Ok(((x_true - x_est).norm_squared() / x_true.len().max(1) as f64).sqrt())
}

/// Angle between two spectra in degrees.
pub fn spectral_angle(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na < 1e-300 {
        return Err(UnmixError::ZeroColumn(0));
    }
    if nb < 1e-300 {
        return Err(UnmixError::ZeroColumn(1));
    }
    // 2 asin(|a/|a| - b/|b|| / 2) keeps full precision near 0 and 180 degrees
    let chord = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x / na - y / nb).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((2.0 * (0.5 * chord).min(1.0).asin()).to_degrees())
}

/// `cost[(i, j)]` = SAD between true column `i` and estimated column `j`.
pub fn sad_matrix(e_true: &DMatrix<f64>, e_est: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if e_true.nrows() != e_est.nrows() {
        return Err(UnmixError::ShapeMismatch(format!(
            "{} vs {} bands",
            e_true.nrows(),
            e_est.nrows()
        )));
    }
    for m in [e_true, e_est] {
        for (j, c) in m.column_iter().enumerate() {
            if c.norm() < 1e-300 {
                return Err(UnmixError::ZeroColumn(j));
            }
        }
    }
    let mut cost = DMatrix::zeros(e_true.ncols(), e_est.ncols());
    for i in 0..e_true.ncols() {
        for j in 0..e_est.ncols() {
            cost[(i, j)] = spectral_angle(e_true.column(i).as_slice(), e_est.column(j).as_slice())?;
        }
    }
    Ok(cost)
}

/// Minimum-cost assignment of rows to distinct columns (`rows <= cols`),
/// by the O(n^2 m) shortest-augmenting-path method with potentials.
/// `result[i]` is the column assigned to row `i`.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let (n, m) = cost.shape();
    assert!(n <= m, "hungarian needs rows <= cols");
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Permutation `perm` minimizing `sum_i SAD(e_true_i, e_est_perm[i])`.
pub fn hungarian_align(e_true: &DMatrix<f64>, e_est: &DMatrix<f64>) -> Result<Vec<usize>> {
    if e_true.ncols() > MAX_ALIGN {
        return Err(UnmixError::InvalidInput(format!(
            "alignment supports at most {MAX_ALIGN} endmembers"
        )));
    }
    if e_true.ncols() > e_est.ncols() {
        return Err(UnmixError::ShapeMismatch(format!(
            "{} estimated endmembers for {} true ones",
            e_est.ncols(),
            e_true.ncols()
        )));
    }
    Ok(hungarian(&sad_matrix(e_true, e_est)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SadResult {
    /// SAD per true endmember, degrees.
    pub per_endmember: Vec<f64>,
    pub mean: f64,
    /// `permutation[i]` is the estimated column matched to true column `i`.
    pub permutation: Vec<usize>,
}

/// Spectral angle per endmember. With `aligned` set the columns are
/// compared in order; otherwise they are first matched by
/// [`hungarian_align`].
pub fn sad(e_true: &EndmemberMatrix, e_est: &EndmemberMatrix, aligned: bool) -> Result<SadResult> {
    sad_raw(e_true.spectra(), e_est.spectra(), aligned)
}

pub fn sad_raw(e_true: &DMatrix<f64>, e_est: &DMatrix<f64>, aligned: bool) -> Result<SadResult> {
    let r = e_true.ncols();
    if aligned && e_est.ncols() != r {
        return Err(UnmixError::ShapeMismatch(format!(
            "{} estimated endmembers for {r} true ones",
            e_est.ncols()
        )));
    }
    let cost = sad_matrix(e_true, e_est)?;
    let permutation = if aligned {
        (0..r).collect()
    } else {
        hungarian_align(e_true, e_est)?
    };
    let per_endmember: Vec<f64> = (0..r).map(|i| cost[(i, permutation[i])]).collect();
    let mean = per_endmember.iter().sum::<f64>() / r as f64;
    Ok(SadResult {
        per_endmember,
        mean,
        permutation,
    })
}

/// Spectral information divergence: symmetric KL divergence (nats) between
/// the band-normalized spectra. Normalized entries are floored at `1e-12`.
pub fn sid(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(UnmixError::ShapeMismatch(format!("{} vs {} bands", y.len(), y_hat.len())));
    }
    if y.is_empty() {
        return Err(UnmixError::EmptyVector);
    }
    let normalize = |v: &[f64]| -> Result<Vec<f64>> {
        let s: f64 = v.iter().sum();
        if !(s > 0.0) || v.iter().any(|&x| x < 0.0) {
            return Err(UnmixError::NonPositiveSpectrum);
        }
        Ok(v.iter().map(|&x| (x / s).max(1e-12)).collect())
    };
    let p = normalize(y)?;
    let q = normalize(y_hat)?;
    Ok(p.iter()
        .zip(&q)
        .map(|(&a, &b)| (a - b) * (a / b).ln())
        .sum())
}

/// Metrics of one estimate against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub sre_db: f64,
    pub rmse: f64,
    pub sad: Option<SadResult>,
}

/// Scores an estimate against ground truth. When endmembers are available
/// the abundance rows are permuted by the SAD alignment before computing
/// SRE; otherwise rows are compared in order.
pub fn score(
    e_true: Option<&DMatrix<f64>>,
    a_true: &DMatrix<f64>,
    e_est: Option<&DMatrix<f64>>,
    a_est: &DMatrix<f64>,
) -> Result<Scores> {
    let sad = match (e_true, e_est) {
        (Some(t), Some(e)) => Some(sad_raw(t, e, false)?),
        _ => None,
    };
    let a_cmp = match &sad {
        Some(s) if a_est.nrows() == e_est.map_or(0, |e| e.ncols()) => {
            a_est.select_rows(s.permutation.iter())
        }
        _ => a_est.clone(),
    };
    Ok(Scores {
        sre_db: sre(a_true, &a_cmp)?,
        rmse: rmse(a_true, &a_cmp)?,
        sad,
    })
}

/// Serializes non-finite floats as the strings "inf", "-inf" and "nan".
mod json_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(serde::Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn decode(r: Repr) -> Result<f64, String> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(format!("not a number: {s:?}")),
            },
        }
    }

    pub fn encode<S: Serializer>(v: f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        encode(*v, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        decode(Repr::deserialize(d)?).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            struct One(f64);
            impl serde::Serialize for One {
                fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                    super::encode(self.0, s)
                }
            }
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for &x in v {
                seq.serialize_element(&One(x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?
                .into_iter()
                .map(|r| decode(r).map_err(serde::de::Error::custom))
                .collect()
        }
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(x) => super::encode(*x, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Option::<Repr>::deserialize(d)?
                .map(|r| decode(r).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    #[serde(with = "json_f64::opt")]
    pub final_objective: Option<f64>,
}

impl From<&Diagnostics> for ReportDiagnostics {
    fn from(d: &Diagnostics) -> Self {
        Self {
            converged: d.converged,
            iterations: d.iterations,
            final_objective: d.objective.last().copied(),
        }
    }
}

/// One unmixing run, as written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmixReport {
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    #[serde(with = "json_f64")]
    pub snr_db: f64,
    #[serde(with = "json_f64")]
    pub sre_db: f64,
    #[serde(with = "json_f64::vec")]
    pub sad_deg: Vec<f64>,
    #[serde(with = "json_f64")]
    pub sad_mean_deg: f64,
    #[serde(with = "json_f64")]
    pub rmse: f64,
    #[serde(with = "json_f64::opt", default)]
    pub sid: Option<f64>,
    pub permutation: Vec<usize>,
    /// Wall-clock solver time, rounded to 0.01 s.
    pub runtime_s: f64,
    pub params: BTreeMap<String, String>,
    pub diagnostics: ReportDiagnostics,
}

pub fn round_runtime(seconds: f64) -> f64 {
    (seconds * 100.0).round() / 100.0
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
