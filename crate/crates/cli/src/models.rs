//! Model registry: mode -> method names, and the code that runs each one.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use unmix::blind::{default_beta_grid, edaa, nmf_qmv, QmvKind, QmvRegularizer};
use unmix::eval::sad_matrix;
use unmix::extract::{sisal, sivm, vca, SisalParams};
use unmix::sparse::{clsunsal, mua, s2wsu, sunaa, sunsal, sunsal_tv, DiffOps, SpectralLibrary};
use unmix::supervised::{fclsu, mesma};
use unmix::{AbundanceMap, Diagnostics, EndmemberMatrix, HsiCube};

use crate::config::Params;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Supervised,
    Semi,
    Blind,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "supervised" => Ok(Mode::Supervised),
            "semi" => Ok(Mode::Semi),
            "blind" => Ok(Mode::Blind),
            _ => Err(CliError::BadConfig(format!(
                "mode must be supervised, semi or blind, got {s:?}"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Supervised => "supervised",
            Mode::Semi => "semi",
            Mode::Blind => "blind",
        }
    }

    pub fn models(self) -> &'static [&'static str] {
        match self {
            Mode::Supervised => &["vca+fclsu", "sivm+fclsu", "sisal+fclsu", "mesma"],
            Mode::Semi => &["sunsal", "clsunsal", "sunsal-tv", "s2wsu", "mua", "sunaa"],
            Mode::Blind => &["nmf-qmv", "edaa"],
        }
    }

    pub fn check_model(self, model: &str) -> Result<(), CliError> {
        if self.models().contains(&model) {
            Ok(())
        } else {
            Err(CliError::UnknownModel(format!(
                "{model:?} is not a {} model; choose one of {}",
                self.name(),
                self.models().join(", ")
            )))
        }
    }
}

/// What a method produced, split into what is written to disk and what is
/// scored.
pub struct Estimate {
    /// Written to `E.csv`. For library methods this is the library itself
    /// (or `D B` for SUnAA).
    pub endmembers: EndmemberMatrix,
    /// Written to `A.bin`; rows match the columns of `endmembers`.
    pub abundances: AbundanceMap,
    /// Endmembers compared against the truth by SAD, when the method
    /// estimates them.
    pub scored_endmembers: Option<EndmemberMatrix>,
    /// Abundances compared by SRE. Library methods report coefficients in
    /// library coordinates.
    pub scored_abundances: DMatrix<f64>,
    pub library_coords: bool,
    pub diagnostics: Diagnostics,
    /// Data-dependent choices worth recording (selected beta, ...).
    pub notes: BTreeMap<String, String>,
}

fn endmember_estimate(e: EndmemberMatrix, a: AbundanceMap, diagnostics: Diagnostics) -> Estimate {
    Estimate {
        scored_endmembers: Some(e.clone()),
        scored_abundances: a.coeffs().clone(),
        endmembers: e,
        abundances: a,
        library_coords: false,
        diagnostics,
        notes: BTreeMap::new(),
    }
}

fn library_estimate(lib: &SpectralLibrary, x: DMatrix<f64>, h: usize, w: usize, diagnostics: Diagnostics) -> Result<Estimate, CliError> {
    let endmembers = EndmemberMatrix::new(lib.atoms().clone())?.with_names(lib.names().to_vec())?;
    Ok(Estimate {
        endmembers,
        scored_endmembers: None,
        scored_abundances: x.clone(),
        abundances: AbundanceMap::new(x, h, w, false, true)?,
        library_coords: true,
        diagnostics,
        notes: BTreeMap::new(),
    })
}

/// Disjoint bundles: every atom joins the extracted endmember it is closest
/// to in angle, and each bundle keeps its `size` closest atoms. An endmember
/// that attracts no atom takes the closest one still free.
pub fn build_bundles(lib: &SpectralLibrary, e: &EndmemberMatrix, size: usize) -> Result<SpectralLibrary, CliError> {
    let angles = sad_matrix(e.spectra(), lib.atoms())?;
    let (r, m) = (e.count(), lib.len());
    let mut members: Vec<Vec<(f64, usize)>> = vec![Vec::new(); r];
    for j in 0..m {
        let i = (0..r)
            .min_by(|&a, &b| angles[(a, j)].total_cmp(&angles[(b, j)]))
            .expect("r >= 1");
        members[i].push((angles[(i, j)], j));
    }
    let mut used = vec![false; m];
    for mem in members.iter_mut() {
        mem.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        mem.truncate(size);
        for &(_, j) in mem.iter() {
            used[j] = true;
        }
    }
    for (i, mem) in members.iter_mut().enumerate() {
        if mem.is_empty() {
            let j = (0..m)
                .filter(|&j| !used[j])
                .min_by(|&a, &b| angles[(i, a)].total_cmp(&angles[(i, b)]))
                .ok_or_else(|| CliError::BadConfig("library too small for the bundles".into()))?;
            used[j] = true;
            mem.push((angles[(i, j)], j));
        }
    }
    let groups: Vec<Vec<usize>> = members
        .iter()
        .map(|mem| mem.iter().map(|&(_, j)| j).collect())
        .collect();
    // re-index into a sub-library holding only bundled atoms
    let order: Vec<usize> = groups.iter().flatten().copied().collect();
    let mut next = 0;
    let local: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| {
            let idx = (next..next + g.len()).collect();
            next += g.len();
            idx
        })
        .collect();
    Ok(lib.subset(&order).with_groups(local)?)
}

/// Largest bundle size `k <= 3` with `k^r <= cap`.
pub fn default_bundle_size(r: usize, cap: usize) -> usize {
    let mut k = 3usize;
    while k > 1 && (k as f64).powi(r as i32) > cap as f64 {
        k -= 1;
    }
    k
}

/// Runs `model` on `y`. `r` is the endmember count, `lib` the library for
/// library-based methods.
pub fn run_model(
    model: &str,
    y: &HsiCube,
    r: usize,
    lib: &SpectralLibrary,
    params: &Params,
) -> Result<Estimate, CliError> {
    let opts = &params.opts;
    let (h, w) = (y.height(), y.width());
    let est = match model {
        "vca+fclsu" | "sivm+fclsu" | "sisal+fclsu" => {
            let ext = match model {
                "vca+fclsu" => vca(y, r, opts.seed)?,
                "sivm+fclsu" => sivm(y, r)?,
                _ => {
                    let sp = SisalParams {
                        tau: params.sisal_tau,
                        ..Default::default()
                    };
                    sisal(y, r, &sp, opts)?
                }
            };
            let (a, d) = fclsu(y, &ext.endmembers, opts)?;
            endmember_estimate(ext.endmembers, a, d)
        }
        "mesma" => {
            let ext = vca(y, r, opts.seed)?;
            let size = params
                .mesma_bundle_size
                .unwrap_or_else(|| default_bundle_size(r, params.mesma_cap));
            if size == 0 {
                return Err(CliError::BadConfig("mesma.bundle_size must be >= 1".into()));
            }
            let bundles = build_bundles(lib, &ext.endmembers, size)?;
            let out = mesma(y, &bundles, opts, params.mesma_cap)?;
            let mut est = endmember_estimate(ext.endmembers, out.abundances, Diagnostics {
                converged: true,
                iterations: 1,
                objective: vec![0.5 * out.residuals.iter().sum::<f64>()],
            });
            est.notes.insert("mesma.bundle_size".into(), size.to_string());
            est
        }
        "sunsal" => {
            let (x, d) = sunsal(y, lib, opts.lambda1, false, opts)?;
            library_estimate(lib, x.into_coeffs(), h, w, d)?
        }
        "clsunsal" => {
            let (x, d) = clsunsal(y, lib, opts.lambda1, opts)?;
            library_estimate(lib, x.into_coeffs(), h, w, d)?
        }
        "sunsal-tv" => {
            let (x, d) = sunsal_tv(y, lib, opts.lambda1, opts.lambda2, &DiffOps::for_cube(y), opts)?;
            library_estimate(lib, x.into_coeffs(), h, w, d)?
        }
        "s2wsu" => {
            let (x, d) = s2wsu(y, lib, opts.lambda1, opts)?;
            library_estimate(lib, x.into_coeffs(), h, w, d)?
        }
        "mua" => {
            let (x, d) = mua(y, lib, opts.beta, opts.lambda1, opts.lambda2, opts)?;
            library_estimate(lib, x.into_coeffs(), h, w, d)?
        }
        "sunaa" => {
            let out = sunaa(y, lib, r, opts)?;
            let e = out.endmembers(lib)?;
            let x = &out.b * out.abundances.coeffs();
            Estimate {
                scored_endmembers: Some(e.clone()),
                scored_abundances: x,
                endmembers: e,
                abundances: out.abundances,
                library_coords: true,
                diagnostics: out.diagnostics,
                notes: BTreeMap::new(),
            }
        }
        "nmf-qmv" => {
            let reg = QmvRegularizer::build(params.qmv_kind, y, r, opts.seed)?;
            let grid = params.qmv_betas.clone().unwrap_or_else(default_beta_grid);
            let out = nmf_qmv(y, r, &reg, &grid, opts)?;
            let d = out.runs[out.chosen].diagnostics.clone();
            let mut est = endmember_estimate(out.endmembers, out.abundances, d);
            est.notes.insert("qmv.beta".into(), format!("{:e}", out.beta));
            est.notes.insert("qmv.kind".into(), kind_name(params.qmv_kind).into());
            est
        }
        "edaa" => {
            let out = edaa(y, r, params.edaa_candidates, opts)?;
            let mut est = endmember_estimate(out.endmembers, out.abundances, out.diagnostics);
            est.notes.insert("edaa.chosen".into(), out.factors.chosen.to_string());
            est
        }
        _ => return Err(CliError::UnknownModel(format!("{model:?}"))),
    };
    Ok(est)
}

fn kind_name(k: QmvKind) -> &'static str {
    match k {
        QmvKind::Tv => "tv",
        QmvKind::Center => "center",
        QmvKind::Boundary => "boundary",
    }
}

/// Library methods need the endmember count only for SUnAA; the truth
/// supplies it when present.
pub fn needs_r(model: &str) -> bool {
    !matches!(model, "sunsal" | "clsunsal" | "sunsal-tv" | "s2wsu" | "mua")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_mode_lists_its_models() {
        assert!(Mode::Semi.check_model("sunsal").is_ok());
        assert_eq!(Mode::Blind.check_model("sunsal").unwrap_err().token(), "UnknownModel");
        assert_eq!(Mode::parse("x").unwrap_err().token(), "BadConfig");
    }

    #[test]
    fn bundle_size_respects_cap() {
        assert_eq!(default_bundle_size(5, 10_000), 3);
        assert_eq!(default_bundle_size(9, 10_000), 2);
        assert_eq!(default_bundle_size(20, 10_000), 1);
    }

    #[test]
    fn bundles_are_disjoint_and_headed_by_nearest_atoms() {
        let lib = unmix::fixtures::builtin_library();
        let e = unmix::fixtures::endmembers(4).unwrap();
        let b = build_bundles(&lib, &e, 3).unwrap();
        let groups = b.groups().unwrap();
        assert_eq!(groups.len(), 4);
        for (i, g) in groups.iter().enumerate() {
            assert!(!g.is_empty() && g.len() <= 3);
            // the true endmember is in the library, so it heads its bundle
            assert_eq!(b.names()[g[0]], lib.names()[i]);
        }
    }
}
