use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const MATHIEU: &str = "\
[lattice]
a1 = 6.283185307179586

[potential]
preset = mathieu1d
V0 = 0.5

[window]
n = 0
m = 1

[grid]
N = 64
cutoff = 8
";

fn wannier(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wannier"))
        .current_dir(dir)
        .args(["--out", "out", "--quiet"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.ini"), config).unwrap();
    dir
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn free_bands_are_folded_parabolas() {
    let cfg = MATHIEU.replace("preset = mathieu1d\nV0 = 0.5", "preset = free").replace("N = 64", "N = 8");
    let dir = setup(&cfg);
    let out = wannier(dir.path(), &["--config", "run.ini", "bands"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("out/bands.csv"));
    assert_eq!(rows.len(), 8);
    for row in rows {
        let k: f64 = row[1].parse().unwrap();
        let e0: f64 = row[2].parse().unwrap();
        let best = (-8..=8).map(|g| (k + g as f64).powi(2)).fold(f64::INFINITY, f64::min);
        assert!((e0 - best).abs() < 1e-12, "k = {k}: {e0} vs {best}");
    }
}

#[test]
fn mathieu_gap_is_reported_open() {
    let dir = setup(MATHIEU);
    let out = wannier(dir.path(), &["--config", "run.ini", "bands"]);
    assert!(out.status.success());
    let gap = read_json(&dir.path().join("out/gap.json"));
    assert!(gap["minGap"].as_f64().unwrap() > 0.5);
    assert_eq!(gap["open"], Value::Bool(true));
}

#[test]
fn missing_section_is_a_config_error() {
    let dir = setup(&MATHIEU.replace("[window]\nn = 0\nm = 1\n", ""));
    let out = wannier(dir.path(), &["--config", "run.ini", "bands"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[window]"));
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = setup(&MATHIEU.replace("cutoff = 8", "cutoff = 8\nsmear = 1"));
    let out = wannier(dir.path(), &["--config", "run.ini", "bands"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 15") && err.contains("smear"), "{err}");
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = wannier(dir.path(), &["--config", "nope.ini", "bands"]);
    assert_eq!(out.status.code(), Some(11));
}

#[test]
fn usage_errors_and_help() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(wannier(dir.path(), &["frobnicate"]).status.code(), Some(1));
    let help = wannier(dir.path(), &["--help"]);
    assert!(help.status.success());
    assert!(String::from_utf8_lossy(&help.stdout).contains("Exit codes"));
}

#[test]
fn localize_outputs_are_deterministic_and_complete() {
    let dir = setup(MATHIEU);
    let run = |out_dir: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_wannier"))
            .current_dir(dir.path())
            .args(["--quiet", "--seed", "3", "--config", "run.ini", "--out", out_dir, "localize", "--oracle"])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("a");
    run("b");
    for f in ["trace.json", "functional.json", "localize.json", "wannier.json", "gauge.csv", "wannier.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between identical runs");
    }
    let loc = read_json(&dir.path().join("a/localize.json"));
    let rel = loc["oracle"]["relativeDifference"].as_f64().unwrap();
    assert!(rel < 1e-8, "optimizer vs oracle {rel:e}");
    let trace = read_json(&dir.path().join("a/trace.json"));
    let rows = trace.as_array().unwrap();
    assert!(rows.len() > 1);
    for key in ["iter", "F", "gradNorm", "step"] {
        assert!(rows[0].get(key).is_some(), "trace row lacks {key}");
    }
    // Every float in the JSON is written with 17 significant digits.
    let text = std::fs::read_to_string(dir.path().join("a/functional.json")).unwrap();
    let total = read_json(&dir.path().join("a/functional.json"))["total"].as_f64().unwrap();
    let token = text.split("\"total\":").nth(1).unwrap().split(',').next().unwrap();
    let mantissa = token.trim_start_matches('-').split('e').next().unwrap();
    assert_eq!(mantissa.len(), 18, "{token}");
    let objective = loc["descent"]["objective"].as_f64().unwrap();
    assert!((objective - total).abs() < 1e-12 * total);
}

#[test]
fn random_trial_reaches_the_same_minimum() {
    let dir = setup(MATHIEU);
    let objective = |extra: &[&str], out_dir: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_wannier"))
            .current_dir(dir.path())
            .args(["--quiet", "--config", "run.ini", "--out", out_dir, "localize"])
            .args(extra)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        read_json(&dir.path().join(out_dir).join("localize.json"))["descent"]["objective"].as_f64().unwrap()
    };
    let base = objective(&[], "eigen");
    let other = objective(&["--frame-trial", "random", "--seed", "7"], "random");
    assert!((base - other).abs() / base < 1e-6, "{base} vs {other}");
    assert!(read_json(&dir.path().join("eigen/localize.json"))["oracle"].is_null());
}

#[test]
fn synthesize_reproduces_localize_from_gauge_dump() {
    let dir = setup(MATHIEU);
    assert!(wannier(dir.path(), &["--config", "run.ini", "localize"]).status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_wannier"))
        .current_dir(dir.path())
        .args(["--quiet", "--config", "run.ini", "--out", "syn", "synthesize", "--gauge", "out/gauge.csv"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(dir.path().join("out/wannier.json")).unwrap(),
        std::fs::read(dir.path().join("syn/wannier.json")).unwrap()
    );
}

#[test]
fn oracle_rejects_two_bands() {
    let dir = setup(&MATHIEU.replace("m = 1", "m = 2"));
    let out = wannier(dir.path(), &["--config", "run.ini", "oracle-abelian"]);
    assert_eq!(out.status.code(), Some(8), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn harmonic_check_added_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = wannier(dir.path(), &["harmonic-check", "--degree", "3", "--m", "3", "--trials", "1000"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("out/harmonic.json"));
    assert_eq!(report["pass"], Value::Bool(true));
    let rows = report["quantization"].as_array().unwrap();
    let added = rows.last().unwrap();
    assert!(added["case"].as_str().unwrap().contains("added"));
    assert!((added["ratioTo8pi"].as_f64().unwrap() - 3.0).abs() < 0.03);
    for row in report["identity"].as_array().unwrap() {
        assert_eq!(row["trials"].as_u64(), Some(1000));
    }
}
