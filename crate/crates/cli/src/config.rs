//! Run configuration: solver defaults plus `--set key=value` overrides.

use std::collections::BTreeMap;

use unmix::blind::QmvKind;
use unmix::SolverOptions;

use crate::CliError;

/// Every key accepted by `--set`.
pub const KEYS: &[&str] = &[
    "r",
    "solver.max_iter",
    "solver.tol",
    "solver.rho",
    "solver.lambda1",
    "solver.lambda2",
    "solver.beta",
    "sisal.tau",
    "qmv.kind",
    "qmv.betas",
    "edaa.candidates",
    "mesma.bundle_size",
    "mesma.cap",
];

#[derive(Debug, Clone)]
pub struct Params {
    pub opts: SolverOptions,
    /// Number of endmembers; taken from the ground truth when unset.
    pub r: Option<usize>,
    pub sisal_tau: Option<f64>,
    pub qmv_kind: QmvKind,
    pub qmv_betas: Option<Vec<f64>>,
    pub edaa_candidates: usize,
    pub mesma_bundle_size: Option<usize>,
    pub mesma_cap: usize,
    /// Overrides as given, echoed into the report.
    pub raw: BTreeMap<String, String>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            opts: SolverOptions::default(),
            r: None,
            sisal_tau: None,
            qmv_kind: QmvKind::Tv,
            qmv_betas: None,
            edaa_candidates: 5,
            mesma_bundle_size: None,
            mesma_cap: unmix::supervised::DEFAULT_MESMA_CAP,
            raw: BTreeMap::new(),
        }
    }
}

fn bad(msg: String) -> CliError {
    CliError::BadConfig(msg)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| bad(format!("{key}: cannot parse {v:?}")))
}

pub fn parse_kind(v: &str) -> Result<QmvKind, CliError> {
    match v {
        "tv" => Ok(QmvKind::Tv),
        "center" => Ok(QmvKind::Center),
        "boundary" => Ok(QmvKind::Boundary),
        _ => Err(bad(format!("qmv.kind must be tv, center or boundary, got {v:?}"))),
    }
}

impl Params {
    /// Applies `key=value` overrides in order; later ones win.
    pub fn from_overrides(sets: &[String]) -> Result<Self, CliError> {
        let mut p = Params::default();
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| bad(format!("override {s:?} is not key=value")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "r" => p.r = Some(num(k, v)?),
                "solver.max_iter" => p.opts.max_iter = num(k, v)?,
                "solver.tol" => p.opts.tol = num(k, v)?,
                "solver.rho" => p.opts.rho = num(k, v)?,
                "solver.lambda1" => p.opts.lambda1 = num(k, v)?,
                "solver.lambda2" => p.opts.lambda2 = num(k, v)?,
                "solver.beta" => p.opts.beta = num(k, v)?,
                "sisal.tau" => p.sisal_tau = Some(num(k, v)?),
                "qmv.kind" => p.qmv_kind = parse_kind(v)?,
                "qmv.betas" => {
                    let betas = v
                        .split(',')
                        .map(|b| num::<f64>(k, b))
                        .collect::<Result<Vec<_>, _>>()?;
                    p.qmv_betas = Some(betas);
                }
                "edaa.candidates" => p.edaa_candidates = num(k, v)?,
                "mesma.bundle_size" => p.mesma_bundle_size = Some(num(k, v)?),
                "mesma.cap" => p.mesma_cap = num(k, v)?,
                _ => {
                    return Err(bad(format!(
                        "unknown key {k:?}; known keys: {}",
                        KEYS.join(", ")
                    )))
                }
            }
            p.raw.insert(k.to_string(), v.to_string());
        }
        p.opts
            .validate()
            .map_err(|e| bad(format!("solver options: {e}")))?;
        if p.r == Some(0) {
            return Err(bad("r must be >= 1".into()));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_in_order() {
        let sets = ["solver.rho=2".to_string(), "solver.rho=3".to_string(), "qmv.betas=1,2".to_string()];
        let p = Params::from_overrides(&sets).unwrap();
        assert_eq!(p.opts.rho, 3.0);
        assert_eq!(p.qmv_betas, Some(vec![1.0, 2.0]));
        assert_eq!(p.raw["solver.rho"], "3");
    }

    #[test]
    fn bad_overrides_are_rejected() {
        for s in ["nokey", "solver.what=1", "solver.tol=abc", "solver.tol=-1", "qmv.kind=x", "r=0"] {
            let err = Params::from_overrides(&[s.to_string()]).unwrap_err();
            assert_eq!(err.token(), "BadConfig", "{s}");
        }
    }
}
