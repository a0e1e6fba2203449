use std::path::Path;
use std::process::{Command, Output};

fn szego(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_szego")).args(args).output().expect("binary runs")
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn torus_log_sweep_writes_all_formats() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = szego(&["run", "--setting", "torus", "--n", "8,16,32", "--symbol", "2+cos(theta1)", "--psi", "log", "--variant", "plain", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "report.csv", "value.dat", "error.dat", "run_meta.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let v = read_json(&dir.path().join("report.json"));
    let errs: Vec<f64> = v["points"].as_array().unwrap().iter().map(|p| p["error"].as_f64().unwrap()).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert_eq!(v["variant"], "plain");
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let plot = std::fs::read_to_string(dir.path().join("error.dat")).unwrap();
    assert!(plot.lines().all(|l| l.split_whitespace().count() == 2));
}

#[test]
fn fock_closed_form_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = szego(&["run", "--setting", "fock", "--alpha", "4", "--symbol", "exp(-r2)", "--psi", "id", "--variant", "symbol-weighted", "--out", out, "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = read_json(&dir.path().join("report.json"));
    let value = v["points"][0]["value"].as_f64().unwrap();
    assert!((value - std::f64::consts::PI * 4.0 / 9.0).abs() < 1e-10);
    assert!(!dir.path().join("report.csv").exists());
}

#[test]
fn identical_config_gives_identical_json() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = a.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "[setting]\nfamily = \"bergman\"\nalphas = [4.0, 16.0]\n[symbols]\nsigma = \"(1 - r2)^2\"\neta = \"(1 - r2)^3\"\npsi = \"id\"\nvariant = \"pair-weighted\"\n",
    )
    .unwrap();
    for d in [&a, &b] {
        let o = szego(&["run", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ja = std::fs::read(a.path().join("report.json")).unwrap();
    let jb = std::fs::read(b.path().join("report.json")).unwrap();
    assert_eq!(ja, jb);
}

#[test]
fn schema_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[setting]\nfamily = \"torus\"\nalphas = []\n[symbols]\nsigma = \"1\"\n").unwrap();
    assert_eq!(szego(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&cfg, "[setting]\nfamilly = \"torus\"\n").unwrap();
    assert_eq!(szego(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(szego(&["run", "--setting", "torus", "--n", "8", "--symbol", "2 + cos(theta1)", "--variant", "sideways"]).status.code(), Some(2));
    assert_eq!(szego(&["run", "--setting", "torus", "--symbol", "cos(r2)"]).status.code(), Some(2));
    assert_eq!(szego(&["run", "--setting", "nowhere", "--symbol", "1"]).status.code(), Some(2));
}

#[test]
fn failed_points_still_write_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // A one-function sinc basis cannot resolve the Gaussian's support.
    let o = szego(&["run", "--setting", "paley-wiener", "--alpha", "2,4", "--symbol", "exp(-x^2)", "--half-width", "1", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    let v = read_json(&dir.path().join("report.json"));
    assert!(v["points"][0]["failure"].is_string());
    let meta = read_json(&dir.path().join("run_meta.json"));
    assert!(!meta["failed_assertions"].as_array().unwrap().is_empty());
}

#[test]
fn catalog_is_sorted_and_complete() {
    let o = szego(&["catalog"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let mut sorted = lines.clone();
    sorted.sort();
    assert_eq!(lines, sorted);
    for name in ["bergman", "fock", "paley-wiener", "torus", "group"] {
        assert!(text.contains(&format!("setting {name}")), "{name}");
    }
    for k in ["id", "power", "log-shifted", "exp", "abs-power", "expr"] {
        assert!(lines.contains(&format!("psi {k}").as_str()), "{k}");
    }
}

#[test]
fn verify_suites() {
    assert_eq!(szego(&["verify", "nosuch"]).status.code(), Some(2));
    let o = szego(&["verify", "frames"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["total"].as_u64().unwrap() > 10);
}
