use std::path::Path;
use std::process::{Command, Output};

fn maxdisc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxdisc"))
        .args(args)
        .current_dir(dir)
        .env("MAXDISC_WORKERS", "2")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

const P2: &str = r#"{"components": [{"alpha": 1, "r_diag": 0.5}, {"alpha": 1, "r_diag": 0.5}],
  "r_cross": [0.5, 0.25, 0.5], "log_horizon": 4, "replications": 200, "seed": 1}"#;

#[test]
fn model_check_prints_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "config.json", P2);
    let out = maxdisc(&["model", "check", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("latent") && text.contains("valid"));
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{\"components\": [{\"alpha\": \"x\"}]}");
    let out = maxdisc(&["model", "check", &bad], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("components[0].alpha"));
    assert_eq!(maxdisc(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(maxdisc(&["model", "check", "missing.json"], dir.path()).status.code(), Some(1));
}

#[test]
fn verify_writes_artifacts_and_a_fault_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "config.json", P2);
    let out = maxdisc(&["--out-dir", "run", "verify", "corollary", &cfg, "--samples"], dir.path());
    assert!(matches!(out.status.code(), Some(0) | Some(3)));
    for f in ["report.json", "report.csv", "overlay.csv", "samples.csv", "manifest.json"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["files"].as_array().unwrap().len(), 5);
    let samples = std::fs::read_to_string(dir.path().join("run/samples.csv")).unwrap();
    assert_eq!(samples.lines().next(), Some("rep,k,m_cont,m_grid,x_hat,y_hat"));
    assert_eq!(samples.lines().count(), 1 + 200 * 2);

    // with C = 20 the fault moves x-hat by about ln(20 a_T / sqrt(2 pi))
    let faulty = P2.replace("\"seed\": 1", "\"seed\": 1, \"centering_fault\": \"bt_is_at\"").replace("\"alpha\": 1,", "\"alpha\": 1, \"c\": 20,");
    let cfg = write(dir.path(), "faulty.json", &faulty);
    let out = maxdisc(&["--out-dir", "fault", "verify", "dense", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn rerun_reproduces_report_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "config.json", P2);
    maxdisc(&["--out-dir", "a", "verify", "dense", &cfg], dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_maxdisc"))
        .args(["--out-dir", "b", "verify", "dense", &cfg])
        .current_dir(dir.path())
        .env("MAXDISC_WORKERS", "1")
        .output()
        .unwrap();
    assert!(out.status.code().is_some());
    let read = |d: &str| std::fs::read(dir.path().join(d).join("report.json")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn pickands_emits_json_with_value_and_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = maxdisc(&["pickands", "--alpha", "1", "--d", "1", "--lambda", "32", "--reps", "200", "--table"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["value"].as_f64().unwrap() > 0.0);
    assert!(v["stderr"].as_f64().unwrap() > 0.0);
    assert!(v["h_alpha"]["value"].is_number());
    let table = std::fs::read_to_string(dir.path().join("out/table.csv")).unwrap();
    assert!(table.starts_with("# columns:"));
    let bad = maxdisc(&["pickands", "--alpha", "3", "--d", "1", "--lambda", "32"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn limits_eval_prints_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "config.json", r#"{"components": [{"alpha": 1, "r_diag": 0.5}]}"#);
    let out = maxdisc(&["limits", "eval", &cfg, "--x", "0", "--y", "0", "--x", "-1", "--y", "2", "--law", "sparse"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "x,y,value,error_estimate");
    assert!(rows[1].contains("0.33248490084"), "{}", rows[1]);
    assert!(rows[2].contains("0.24771513977"), "{}", rows[2]);
}

#[test]
fn simulate_can_dump_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "config.json", P2);
    let out = maxdisc(&["simulate", &cfg, "--dump-paths", "--dump-reps", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(dir.path().join("out/paths.bin")).unwrap();
    let (p, n, _h, seed) = maxdisc::io::read_dump_header(&bytes).unwrap();
    assert_eq!((p, seed), (2, 1));
    assert_eq!(bytes.len(), 40 + 2 * 2 * n * 8);
}
