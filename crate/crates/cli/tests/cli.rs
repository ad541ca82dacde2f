use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use unmix::io::{read_abundance_bin, read_cube_header, read_dataset};

fn unmix(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unmix"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = unmix(dir, args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Exit status and the token of the single stderr line.
fn fail(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = unmix(dir, args);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    let token = err
        .strip_prefix("error: ")
        .and_then(|s| s.split(':').next())
        .unwrap_or_else(|| panic!("unparseable error line {err:?}"));
    (out.status.code().unwrap(), token.to_string())
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn semi_run_reports_sre() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["run", "--mode", "semi", "--data", "dc1", "--model", "sunsal", "--snr", "30", "--seed", "0", "--name", "s"]);
    let dir = tmp.path().join("runs/s");
    let r = report(&dir.join("report.json"));
    assert!(r["sre_db"].as_f64().unwrap().is_finite());
    assert_eq!(r["method"], "sunsal");
    for f in ["E.csv", "A.bin", "abundance_00.pgm"] {
        assert!(dir.join(f).exists(), "{f}");
    }
}

#[test]
fn noiseless_supervised_run_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["run", "--mode", "supervised", "--data", "dc1", "--model", "sivm+fclsu", "--snr", "inf", "--seed", "0", "--name", "x"]);
    let r = report(&tmp.path().join("runs/x/report.json"));
    assert!(r["sre_db"].as_f64().unwrap() >= 60.0);
    assert_eq!(r["snr_db"], "inf");
    assert_eq!(r["sad_deg"].as_array().unwrap().len(), 5);
}

#[test]
fn repeats_aggregate_by_seed() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["run", "--mode", "supervised", "--data", "dc1", "--model", "vca+fclsu", "--snr", "30", "--seed", "3", "--repeats", "10", "--name", "rep"]);
    let dir = tmp.path().join("runs/rep");
    let r = report(&dir.join("report.json"));
    let runs = r["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 10);
    let seeds: Vec<u64> = runs.iter().map(|x| x["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, (3..13).collect::<Vec<_>>());
    let sre: Vec<f64> = runs.iter().map(|x| x["sre_db"].as_f64().unwrap()).collect();
    let mean = sre.iter().sum::<f64>() / 10.0;
    let std = (sre.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 10.0).sqrt();
    let s = &r["summary"]["sre_db"];
    assert!((s["mean"].as_f64().unwrap() - mean).abs() < 1e-9);
    assert!((s["std"].as_f64().unwrap() - std).abs() < 1e-9);
    for seed in 3..13 {
        assert!(dir.join(format!("seed-{seed}/report.json")).exists());
    }
}

#[test]
fn gen_dc1_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let line = ok(tmp.path(), &["gen", "dc1", "--seed", "0", "--out", "d"]);
    assert!(line.contains("n=5625") && line.contains("r=5"), "{line}");
    let h = read_cube_header(&tmp.path().join("d")).unwrap();
    assert_eq!((h.height, h.width, h.bands), (75, 75, 188));
}

#[test]
fn gen_dc3_has_no_pure_pixels_but_two_facet_points() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen", "dc3", "--seed", "1", "--out", "d"]);
    let d = tmp.path().join("d");
    let h = read_cube_header(&d).unwrap();
    let a = read_abundance_bin(&d.join("A_true.bin"), 6, h.width * h.height).unwrap();
    let above = a
        .column_iter()
        .filter(|c| c.max() > 0.8 + 1e-6)
        .count();
    assert!(above <= 2, "{above} pixels above 0.8");
    let facet = a.column_iter().filter(|c| c.iter().any(|&v| v.abs() < 1e-7)).count();
    assert_eq!(facet, 2);
}

#[test]
fn gen_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen", "dc2", "--seed", "4", "--snr", "30", "--out", "a"]);
    ok(tmp.path(), &["gen", "dc2", "--seed", "4", "--snr", "30", "--out", "b"]);
    for f in ["header.txt", "data.bin", "E_true.csv", "A_true.bin"] {
        let x = fs::read(tmp.path().join("a").join(f)).unwrap();
        let y = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn runs_on_a_dataset_directory() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen", "dc1", "--seed", "2", "--out", "d", "--layout", "bip"]);
    assert!(read_dataset(&tmp.path().join("d")).unwrap().e_true.is_some());
    ok(tmp.path(), &["run", "--mode", "supervised", "--data", "d", "--model", "sivm+fclsu", "--name", "dir"]);
    let r = report(&tmp.path().join("runs/dir/report.json"));
    // the payload is f32, so exactness stops near single precision
    assert!(r["sre_db"].as_f64().unwrap() > 60.0);
}

#[test]
fn failures_have_distinct_tokens_and_leave_no_output() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    let base = ["run", "--mode", "semi", "--data", "dc1", "--name", "bad"];
    let with = |extra: &[&'static str]| {
        let mut v: Vec<&str> = base.to_vec();
        v.extend_from_slice(extra);
        v
    };
    assert_eq!(fail(p, &with(&["--model", "nmf-qmv"])), (2, "UnknownModel".into()));
    assert_eq!(fail(p, &with(&["--model", "sunsal", "--set", "solver.nope=1"])), (2, "BadConfig".into()));
    assert_eq!(fail(p, &with(&["--model", "sunsal", "--snr", "loud"])), (2, "BadConfig".into()));
    assert_eq!(fail(p, &with(&["--model", "mua", "--set", "solver.beta=500"])), (1, "SegmentationFailure".into()));
    assert_eq!(fail(p, &["run", "--mode", "semi", "--data", "dc1"]), (2, "BadConfig".into()));
    assert_eq!(fail(p, &["gen", "dc9"]), (2, "BadConfig".into()));

    fs::create_dir_all(p.join("broken")).unwrap();
    fs::write(p.join("broken/header.txt"), "width=2\nheight=2\nbands=3\ndtype=f32le\nlayout=bsq\n").unwrap();
    fs::write(p.join("broken/data.bin"), [0u8; 47]).unwrap();
    let (code, token) = fail(p, &["run", "--mode", "blind", "--data", "broken", "--model", "edaa", "--set", "r=2", "--name", "bad"]);
    assert_eq!((code, token.as_str()), (1, "TruncatedPayload"));
    assert!(!p.join("runs/bad").exists());
}

#[test]
fn dataset_without_truth_needs_r() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    ok(p, &["gen", "dc1", "--seed", "0", "--out", "d"]);
    fs::remove_file(p.join("d/E_true.csv")).unwrap();
    assert_eq!(
        fail(p, &["run", "--mode", "blind", "--data", "d", "--model", "edaa", "--name", "n"]),
        (2, "BadConfig".into())
    );
    // without truth the run succeeds and reports unscored metrics
    ok(p, &["run", "--mode", "supervised", "--data", "d", "--model", "vca+fclsu", "--set", "r=5", "--name", "n"]);
    let r = report(&p.join("runs/n/report.json"));
    assert_eq!(r["sre_db"], "nan");
}
