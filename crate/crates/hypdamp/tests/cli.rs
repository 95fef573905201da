use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hypdamp"));
    c.env_remove("HYPDAMP_JOBS");
    c
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const VERIFY: &str = r#"
schema_version = 1
name = "sup"
operation = "verify"
seed = 5

[parameters]
sigma = 0.75
delta = 1.0
lambdas = [1.0, 10.0]
coefficient = { kind = "constant", c0 = 1.0 }
"#;

#[test]
fn verify_constant_coefficient_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "v.toml", VERIFY);
    let out = tmp.path().join("out");
    let o = bin().arg("verify").arg(&sc).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["passed"], true);
    let m = &r["result"]["worst_margins"]["sup_lemma.weighted"];
    assert!(m.as_f64().unwrap() >= 0.0);
    let jsonl = std::fs::read_to_string(out.join("audits.jsonl")).unwrap();
    assert!(jsonl.lines().any(|l| l.contains("\"sup_lemma.weighted\"")));
    assert!(out.join("stamp.json").exists());
}

#[test]
fn malformed_value_exits_2_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "bad.toml", &VERIFY.replace("sigma = 0.75", "sigma = \"x\""));
    let o = bin().arg("run").arg(&sc).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line") && err.contains("sigma"), "{err}");
}

#[test]
fn unsupported_schema_version_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "v.toml", &VERIFY.replace("schema_version = 1", "schema_version = 2"));
    let o = bin().arg("run").arg(&sc).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn audit_failure_exits_1_naming_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "v.toml", VERIFY);
    // A negative slack demands a positive margin everywhere; the
    // Kovalevskian monotonicity check sits at zero margin for c = 1.
    let o = bin()
        .arg("verify")
        .arg(&sc)
        .args(["--set", "parameters.options.slack=-0.5", "--out"])
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("sup_lemma."), "{err}");
    assert_eq!(report(&tmp.path().join("o"))["passed"], false);
}

#[test]
fn flags_override_file() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "v.toml", VERIFY);
    let out = tmp.path().join("o");
    let o = bin()
        .arg("verify")
        .arg(&sc)
        .args(["--sigma", "0.9", "--seed", "9", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let r = report(&out);
    assert_eq!(r["parameters"]["sigma"], 0.9);
    assert_eq!(r["parameters"]["delta"], 1.0);
    assert_eq!(r["seed"], 9);
}

#[test]
fn report_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(
        tmp.path(),
        "h.toml",
        r#"
schema_version = 1
operation = "verify"
seed = 21

[parameters]
sigma = 0.3
delta = 1.0
lambdas = [10.0, 100.0]
coefficient = { kind = "hoelder", alpha = 0.7 }
"#,
    );
    let mut reports = Vec::new();
    for (i, jobs) in ["1", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("o{i}"));
        let o = bin()
            .env("HYPDAMP_JOBS", jobs)
            .arg("run")
            .arg(&sc)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn dgcs_preset_certifies() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    let o = bin().args(["dgcs", "certify", "--out"]).arg(&out).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert!(r["result"]["certified_modes"].as_u64().unwrap() >= 6);
    assert_eq!(r["result"]["certificate"]["passed"], true);
    for f in ["construction.json", "segments.csv", "ledger.csv", "divergence.json", "divergence.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(out.join("divergence.csv")).unwrap();
    assert!(csv.starts_with("k,ln_lambda,log_e0"));
}

#[test]
fn dgcs_build_skips_certificate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    let o = bin().args(["dgcs", "build", "--k-max", "10", "--out"]).arg(&out).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(out.join("construction.json").exists());
    assert!(!out.join("divergence.json").exists());
    assert_eq!(report(&out)["result"]["k_max"], 10);
}

#[test]
fn dgcs_bad_input_exits_2() {
    let o = bin().args(["dgcs", "build", "--sigma", "0.7"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn small_sweep_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = bin()
        .args([
            "sweep",
            "--set",
            "parameters.sigma_grid=[0.6, 0.1]",
            "--set",
            "parameters.alpha_grid=[0.5]",
            "--set",
            "parameters.lambda_probe=[10.0]",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let wide = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(wide.starts_with("sigma,alpha,delta,lambda,slope_res,slope_damp,class"));
    assert!(wide.contains("damping-dominates"));
    assert!(wide.contains("resonance-dominates"));
    let long = std::fs::read_to_string(out.join("sweep_long.csv")).unwrap();
    assert!(long.lines().count() > 3);
}

#[test]
fn simulate_and_export() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(
        tmp.path(),
        "s.toml",
        r#"
schema_version = 1
operation = "simulate"

[parameters]
lambda = 20.0
sigma = 0.0
delta = 0.5
coefficient = { kind = "sampled", ts = [0.0, 1.0], cs = [1.0, 2.0] }
samples = 11
"#,
    );
    let out = tmp.path().join("o");
    let o = bin().arg("simulate").arg(&sc).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 12);

    let o = bin()
        .arg("export")
        .arg(&sc)
        .args(["--points", "5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let c = std::fs::read_to_string(out.join("coefficient.csv")).unwrap();
    assert_eq!(c.lines().next(), Some("t,c,dc"));
    assert_eq!(c.lines().count(), 6);
}

#[test]
fn operation_mismatch_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "v.toml", VERIFY);
    let o = bin().arg("sweep").arg(&sc).output().unwrap();
    assert_eq!(code(&o), 2);
}
