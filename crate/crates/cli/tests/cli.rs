use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/models")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let text = body.replace("@MODELS@", &models().display().to_string());
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn bp_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bp-lab"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn exact_survival_linear_fractional() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"kind": "exact-survival", "modelPath": "@MODELS@/lf-single.json", "horizons": [10, 100], "seed": 1}"#,
    );
    let o = bp_lab(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<Vec<&str>> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 2);
    for (row, n) in rows.iter().zip([10.0, 100.0]) {
        assert_eq!(row.len(), 9);
        let v: f64 = row[3].parse().unwrap();
        assert!((v - 1.0 / (1.0 + n)).abs() <= 1e-12);
    }
    assert!(stderr(&o).contains("model validation"));
}

#[test]
fn hybrid_at_horizon_zero_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"kind": "hybrid", "modelPath": "@MODELS@/two-point-env.json", "horizons": [0], "reps": 100, "seed": 5}"#,
    );
    let o = bp_lab(&["run", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let nonext = rows
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["experiment"] == "hybrid-nonextinction")
        .unwrap();
    assert_eq!(nonext["value"], 0.0);
    assert_eq!(nonext["params"], "n=0");
}

#[test]
fn unknown_field_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"kind": "exact-survival", "modelPath": "@MODELS@/lf-single.json", "horizion": [10], "seed": 1}"#,
    );
    let o = bp_lab(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("horizion"));
}

#[test]
fn missing_coupling_fails_validate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"kind": "exact-survival", "horizons": [1], "seed": 1, "model": {"N": 2, "type_laws": [
            {"kind": "product", "components": [{"kind": "linear_fractional", "b": 1.0}, {"kind": "deterministic", "k": 0}]},
            {"kind": "product", "components": [{"kind": "linear_fractional", "b": 1.0}]}
        ]}}"#,
    );
    let o = bp_lab(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL] m_{i,i+1} > 0"));
}

#[test]
fn shipped_models_validate() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(models()).unwrap() {
        let path = entry.unwrap().path();
        let body = format!(
            r#"{{"kind": "exact-survival", "modelPath": "{}", "horizons": [1], "seed": 1}}"#,
            path.display()
        );
        let cfg = write_config(dir.path(), "c.json", &body);
        let o = bp_lab(&["validate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}: {}",
            path.display(),
            stdout(&o)
        );
    }
}

#[test]
fn missing_file_is_io_error() {
    let o = bp_lab(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn tiny_population_cap_is_degraded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"kind": "simulate", "modelPath": "@MODELS@/two-point-env.json", "horizons": [30], "reps": 2000, "seed": 2, "popCap": 3}"#,
    );
    let out = dir.path().join("out.csv");
    let o = bp_lab(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    // Results are still written.
    assert!(std::fs::read_to_string(out).unwrap().lines().count() > 1);
}

fn run_twice(cfg: &Path, sub: &str, dir: &Path) -> (Vec<u8>, Vec<u8>) {
    let mut outs = Vec::new();
    for w in ["1", "8"] {
        let out = dir.join(format!("out-{sub}-{w}.csv"));
        let o = bp_lab(&[
            sub,
            "--config",
            cfg.to_str().unwrap(),
            "--workers",
            w,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            matches!(o.status.code(), Some(0) | Some(1)),
            "{}",
            stderr(&o)
        );
        outs.push(std::fs::read(out).unwrap());
    }
    let b = outs.pop().unwrap();
    (outs.pop().unwrap(), b)
}

#[test]
fn hybrid_output_is_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"kind": "hybrid", "modelPath": "@MODELS@/two-point-env.json", "horizons": [8, 64], "reps": 5000, "seed": 11}"#,
    );
    let (a, b) = run_twice(&cfg, "run", dir.path());
    assert_eq!(a, b);
}

#[test]
fn verify_all_output_is_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"kind": "verify-all", "seed": 7, "profile": "smoke"}"#,
    );
    let (a, b) = run_twice(&cfg, "verify-all", dir.path());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 14);
}
