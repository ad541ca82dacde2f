//! `run`: load data, unmix, score against the truth, write artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::{json, Value};
use unmix::datagen::{add_noise, generate_scene, NoiseSpec, SceneSpec};
use unmix::eval::{mean_std, rmse, round_runtime, sad_raw, score, sid, spectral_angle, sre, ReportDiagnostics, UnmixReport};
use unmix::fixtures::{builtin_library, endmembers};
use unmix::io::{read_dataset, read_library, write_abundance_bin, write_abundance_pgm, write_endmembers};
use unmix::sparse::SpectralLibrary;
use unmix::{AbundanceMap, EndmemberMatrix, HsiCube};

use crate::config::Params;
use crate::models::{needs_r, run_model, Estimate, Mode};
use crate::CliError;

/// Library atoms matching a true endmember within this angle (degrees).
const MATCH_DEG: f64 = 1e-3;

pub struct RunArgs {
    pub mode: Mode,
    pub model: String,
    pub data: String,
    pub snr_db: f64,
    pub seed: u64,
    pub repeats: usize,
    pub library: Option<PathBuf>,
    pub dir: PathBuf,
    pub params: Params,
}

struct Scene {
    cube: HsiCube,
    truth: Option<(EndmemberMatrix, AbundanceMap)>,
}

pub fn builtin_spec(kind: &str, seed: u64) -> Option<SceneSpec> {
    match kind {
        "dc1" => Some(SceneSpec::dc1(seed)),
        "dc2" => Some(SceneSpec::dc2(seed)),
        "dc3" => Some(SceneSpec::dc3(seed)),
        _ => None,
    }
}

/// Builtin scenes are regenerated from `seed`; dataset directories are read
/// as is. Noise uses the same seed.
fn load_scene(data: &str, snr_db: f64, seed: u64) -> Result<Scene, CliError> {
    let (clean, truth) = match builtin_spec(data, seed) {
        Some(spec) => {
            let e = endmembers(spec.r)?;
            let (cube, a) = generate_scene(&spec, &e)?;
            (cube, Some((e, a)))
        }
        None => {
            let path = Path::new(data);
            if !path.is_dir() {
                return Err(CliError::BadConfig(format!(
                    "data must be dc1, dc2, dc3 or a dataset directory, got {data:?}"
                )));
            }
            let ds = read_dataset(path)?;
            let truth = ds.e_true.zip(ds.a_true);
            (ds.cube, truth)
        }
    };
    let cube = add_noise(&clean, &NoiseSpec { snr_db, seed });
    Ok(Scene { cube, truth })
}

struct Scored {
    sre_db: f64,
    rmse: f64,
    sad_deg: Vec<f64>,
    sad_mean_deg: f64,
    sid: Option<f64>,
    permutation: Vec<usize>,
}

fn unscored() -> Scored {
    Scored {
        sre_db: f64::NAN,
        rmse: f64::NAN,
        sad_deg: Vec::new(),
        sad_mean_deg: f64::NAN,
        sid: None,
        permutation: Vec::new(),
    }
}

/// Mean SID over aligned endmember pairs; `None` if any spectrum has a
/// non-positive sum.
fn mean_sid(e_true: &DMatrix<f64>, e_est: &DMatrix<f64>, perm: &[usize]) -> Option<f64> {
    let mut acc = 0.0;
    for (i, &j) in perm.iter().enumerate() {
        let t: Vec<f64> = e_true.column(i).iter().copied().collect();
        let e: Vec<f64> = e_est.column(j).iter().copied().collect();
        acc += sid(&t, &e).ok()?;
    }
    Some(acc / perm.len().max(1) as f64)
}

/// Library index of each true endmember, if all are in the library.
fn library_positions(lib: &SpectralLibrary, e: &EndmemberMatrix) -> Option<Vec<usize>> {
    let d = lib.atoms();
    (0..e.count())
        .map(|i| {
            let t: Vec<f64> = e.spectra().column(i).iter().copied().collect();
            (0..lib.len())
                .map(|j| {
                    let a: Vec<f64> = d.column(j).iter().copied().collect();
                    (spectral_angle(&t, &a).unwrap_or(f64::INFINITY), j)
                })
                .filter(|&(ang, _)| ang <= MATCH_DEG)
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, j)| j)
        })
        .collect()
}

fn score_estimate(
    est: &Estimate,
    truth: Option<&(EndmemberMatrix, AbundanceMap)>,
    lib: &SpectralLibrary,
) -> Result<Scored, CliError> {
    let Some((e_true, a_true)) = truth else {
        return Ok(unscored());
    };
    if !est.library_coords {
        let e_est = est.scored_endmembers.as_ref().expect("endmember methods estimate E");
        if e_est.count() != e_true.count() {
            return Ok(unscored());
        }
        let s = score(Some(e_true.spectra()), a_true.coeffs(), Some(e_est.spectra()), &est.scored_abundances)?;
        let sad = s.sad.expect("both endmember sets given");
        return Ok(Scored {
            sre_db: s.sre_db,
            rmse: s.rmse,
            sid: mean_sid(e_true.spectra(), e_est.spectra(), &sad.permutation),
            sad_deg: sad.per_endmember,
            sad_mean_deg: sad.mean,
            permutation: sad.permutation,
        });
    }
    let Some(pos) = library_positions(lib, e_true) else {
        return Ok(unscored());
    };
    let mut x_true = DMatrix::zeros(lib.len(), a_true.coeffs().ncols());
    for (i, &j) in pos.iter().enumerate() {
        let mut row = x_true.row_mut(j);
        row += a_true.coeffs().row(i);
    }
    let mut out = Scored {
        sre_db: sre(&x_true, &est.scored_abundances)?,
        rmse: rmse(&x_true, &est.scored_abundances)?,
        permutation: pos,
        ..unscored()
    };
    if let Some(e_est) = &est.scored_endmembers {
        if e_est.count() == e_true.count() {
            let sad = sad_raw(e_true.spectra(), e_est.spectra(), false)?;
            out.sid = mean_sid(e_true.spectra(), e_est.spectra(), &sad.permutation);
            out.sad_deg = sad.per_endmember;
            out.sad_mean_deg = sad.mean;
            out.permutation = sad.permutation;
        }
    }
    Ok(out)
}

fn write_artifacts(dir: &Path, est: &Estimate, report: &UnmixReport) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_endmembers(&dir.join("E.csv"), &est.endmembers)?;
    write_abundance_bin(&dir.join("A.bin"), est.abundances.coeffs())?;
    write_abundance_pgm(&est.abundances, dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

fn fmt_snr(snr: f64) -> String {
    if snr.is_infinite() {
        "inf".into()
    } else {
        snr.to_string()
    }
}

fn one_run(args: &RunArgs, lib: &SpectralLibrary, seed: u64) -> Result<(Estimate, UnmixReport), CliError> {
    let scene = load_scene(&args.data, args.snr_db, seed)?;
    let r = match (args.params.r, &scene.truth) {
        (Some(r), _) => r,
        (None, Some((e, _))) => e.count(),
        (None, None) if needs_r(&args.model) => {
            return Err(CliError::BadConfig(
                "dataset has no ground truth; pass --set r=<count>".into(),
            ))
        }
        (None, None) => 0,
    };
    let mut params = args.params.clone();
    params.opts.seed = seed;
    let start = Instant::now();
    let est = run_model(&args.model, &scene.cube, r, lib, &params)?;
    let runtime_s = round_runtime(start.elapsed().as_secs_f64());
    let scored = score_estimate(&est, scene.truth.as_ref(), lib)?;

    let o = &params.opts;
    let mut p: BTreeMap<String, String> = BTreeMap::new();
    p.insert("mode".into(), args.mode.name().into());
    p.insert("r".into(), r.to_string());
    p.insert("solver.max_iter".into(), o.max_iter.to_string());
    for (k, v) in [
        ("solver.tol", o.tol),
        ("solver.rho", o.rho),
        ("solver.lambda1", o.lambda1),
        ("solver.lambda2", o.lambda2),
        ("solver.beta", o.beta),
    ] {
        p.insert(k.into(), format!("{v:e}"));
    }
    p.extend(params.raw.clone());
    p.extend(est.notes.clone());
    let report = UnmixReport {
        method: args.model.clone(),
        dataset: args.data.clone(),
        seed,
        snr_db: args.snr_db,
        sre_db: scored.sre_db,
        sad_deg: scored.sad_deg,
        sad_mean_deg: scored.sad_mean_deg,
        rmse: scored.rmse,
        sid: scored.sid,
        permutation: scored.permutation,
        runtime_s,
        params: p,
        diagnostics: ReportDiagnostics::from(&est.diagnostics),
    };
    Ok((est, report))
}

/// JSON number, or the strings used by the report for non-finite values.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn summary(values: &[f64]) -> Value {
    let (m, s) = mean_std(values);
    json!({ "mean": num(m), "std": num(s) })
}

fn print_line(r: &UnmixReport) {
    println!(
        "{} {} seed={} snr={} sre_db={:.3} sad_mean_deg={:.4} runtime_s={:.2}",
        r.method,
        r.dataset,
        r.seed,
        fmt_snr(r.snr_db),
        r.sre_db,
        r.sad_mean_deg,
        r.runtime_s
    );
}

/// Runs every seed (in parallel when repeating) and writes the artifacts.
/// Returns the reports in seed order.
pub fn run(args: &RunArgs) -> Result<Vec<UnmixReport>, CliError> {
    args.mode.check_model(&args.model)?;
    if args.repeats == 0 {
        return Err(CliError::BadConfig("repeats must be >= 1".into()));
    }
    if args.snr_db.is_nan() {
        return Err(CliError::BadConfig("snr must be a number or inf".into()));
    }
    let lib = match &args.library {
        Some(p) => read_library(p)?,
        None => builtin_library(),
    };
    let seeds: Vec<u64> = (0..args.repeats as u64).map(|k| args.seed + k).collect();
    // finish every solve before touching the output directory
    let results: Vec<(Estimate, UnmixReport)> = if seeds.len() == 1 {
        vec![one_run(args, &lib, seeds[0])?]
    } else {
        seeds
            .par_iter()
            .map(|&s| one_run(args, &lib, s))
            .collect::<Result<_, _>>()?
    };
    if results.len() == 1 {
        let (est, report) = &results[0];
        write_artifacts(&args.dir, est, report)?;
        print_line(report);
    } else {
        for (est, report) in &results {
            write_artifacts(&args.dir.join(format!("seed-{}", report.seed)), est, report)?;
            print_line(report);
        }
        let reports: Vec<&UnmixReport> = results.iter().map(|(_, r)| r).collect();
        let field = |f: fn(&UnmixReport) -> f64| reports.iter().map(|r| f(r)).collect::<Vec<_>>();
        let agg = json!({
            "method": args.model,
            "mode": args.mode.name(),
            "dataset": args.data,
            "snr_db": num(args.snr_db),
            "seeds": seeds,
            "summary": {
                "sre_db": summary(&field(|r| r.sre_db)),
                "sad_mean_deg": summary(&field(|r| r.sad_mean_deg)),
                "rmse": summary(&field(|r| r.rmse)),
                "runtime_s": summary(&field(|r| r.runtime_s)),
            },
            "runs": reports,
        });
        fs::create_dir_all(&args.dir)?;
        fs::write(args.dir.join("report.json"), serde_json::to_string_pretty(&agg)?)?;
        let (m, s) = mean_std(&field(|r| r.sre_db));
        println!("{} {} repeats={} sre_db={m:.3}±{s:.3}", args.model, args.data, seeds.len());
    }
    println!("report: {}", args.dir.join("report.json").display());
    Ok(results.into_iter().map(|(_, r)| r).collect())
}
