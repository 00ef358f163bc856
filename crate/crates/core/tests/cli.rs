use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

struct Run {
    dir: tempfile::TempDir,
    out: PathBuf,
}

impl Run {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        Run { dir, out }
    }

    fn config(&self, name: &str, body: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        path
    }

    fn exec(&self, sub: &str, config: &Path, extra: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_qtk"))
            .arg(sub)
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(&self.out)
            .args(extra)
            .output()
            .unwrap()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.out.join(name)).unwrap()).unwrap()
    }
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
}

#[test]
fn pme_solve_symmetric_and_asymmetric() {
    let run = Run::new();
    let cfg = run.config("sym.json", r#"{"W": [[0, 1], [1, 0]], "p0": [1, 0], "t_end": 5}"#);
    let out = run.exec("pme-solve", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = run.json("report.json");
    assert!(close(&floats(&report["stationary"]), &[0.5, 0.5], 1e-15));
    assert_eq!(report["flags"]["symmetric"], Value::Bool(true));

    let cfg = run.config("asym.json", r#"{"W": [[0, 2], [1, 0]], "p0": [0, 1], "t_end": 20}"#);
    assert_eq!(run.exec("pme-solve", &cfg, &["--stride", "1000"]).status.code(), Some(0));
    let report = run.json("report.json");
    assert!(close(&floats(&report["stationary"]), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
    assert!(close(&floats(&report["final_state"]), &[2.0 / 3.0, 1.0 / 3.0], 1e-8));

    let csv = std::fs::read_to_string(run.out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,y1,y2,entropy,sum_drift"));
    // 40000 steps at stride 1000, plus the initial sample
    assert_eq!(lines.count(), 41);
}

#[test]
fn malformed_config_writes_nothing() {
    let run = Run::new();
    let cfg = run.config("bad.json", r#"{"W": [[0, 1], [1, 0]], "p0": [1, 0"#);
    let out = run.exec("pme-solve", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!run.out.exists());

    let cfg = run.config("unknown.json", r#"{"W": [[0, 1], [1, 0]], "p0": [1, 0], "t_end": 1, "tend": 2}"#);
    assert_eq!(run.exec("pme-solve", &cfg, &[]).status.code(), Some(2));
    assert!(!run.out.exists());
}

#[test]
fn invalid_inputs_exit_two() {
    let run = Run::new();
    let cases = [
        ("pme-solve", r#"{"W": [[0, -1], [1, 0]], "p0": [1, 0], "t_end": 1}"#),
        ("pme-solve", r#"{"W": [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], "p0": [1, 0, 0, 0], "t_end": 1}"#),
        ("relax-classify", r#"{"rates": [1, 1, 1, 1, 1, -1]}"#),
        ("composite", r#"{"a": 0, "c": 1}"#),
        ("composite", r#"{"a": 1, "c": -2}"#),
        ("composite", r#"{"a": 1, "c": 1, "precision": 40}"#),
    ];
    for (sub, body) in cases {
        let cfg = run.config("case.json", body);
        let out = run.exec(sub, &cfg, &[]);
        assert_eq!(out.status.code(), Some(2), "{sub} {body}");
        assert!(!run.out.exists(), "{sub} {body}");
    }
}

#[test]
fn qt_fit_outputs() {
    let run = Run::new();
    let cfg = run.config("ones.json", r#"{"W": [[0, 1, 1], [1, 0, 1], [1, 1, 0]], "seed": 5}"#);
    assert_eq!(run.exec("qt-fit", &cfg, &[]).status.code(), Some(0));
    let rep = run.json("representation.json");
    assert!(rep["r"][0].as_f64().unwrap().abs() < 1e-8);
    assert!(rep["residual"].as_f64().unwrap() <= 1e-8);

    let cfg = run.config("two.json", r#"{"W": [[0, 1], [1, 0]]}"#);
    assert_eq!(run.exec("qt-fit", &cfg, &[]).status.code(), Some(0));
    assert_eq!(run.json("representation.json")["r"], Value::Array(vec![]));
}

#[test]
fn qt_fit_nonconvergence_still_writes_best() {
    let run = Run::new();
    let cfg = run.config(
        "strict.json",
        r#"{"W": [[0, 0.3, 1.2], [0.9, 0, 0.1], [0.4, 1.1, 0]], "max_restarts": 2, "tolerance": 1e-300}"#,
    );
    let out = run.exec("qt-fit", &cfg, &[]);
    assert_eq!(out.status.code(), Some(3));
    let rep = run.json("representation.json");
    assert!(rep["residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn identical_config_gives_identical_bytes() {
    let run = Run::new();
    let fit = run.config(
        "fit.json",
        r#"{"W": [[0, 0.3, 1.2, 0.5], [0.9, 0, 0.1, 0.7], [0.4, 1.1, 0, 0.2], [0.6, 0.8, 1.3, 0]], "seed": 11, "precision": 12}"#,
    );
    let scan = run.config("scan.json", r#"{"samples": 2000, "seed": 3, "bins": 4}"#);
    for (sub, cfg, files) in [
        ("qt-fit", &fit, &["representation.json"][..]),
        ("relax-scan", &scan, &["scan.csv", "summary.json"][..]),
    ] {
        assert_eq!(run.exec(sub, cfg, &[]).status.code(), Some(0));
        let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(run.out.join(f)).unwrap()).collect();
        let out = Command::new(env!("CARGO_BIN_EXE_qtk"))
            .args([sub, "--config"])
            .arg(cfg)
            .arg("--out")
            .arg(&run.out)
            .env("QTK_THREADS", "3")
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        for (f, bytes) in files.iter().zip(&first) {
            assert_eq!(&std::fs::read(run.out.join(f)).unwrap(), bytes, "{sub} {f}");
        }
    }
}

#[test]
fn relax_classify_examples() {
    let run = Run::new();
    let cfg = run.config("ones.json", r#"{"rates": [1, 1, 1, 1, 1, 1]}"#);
    assert_eq!(run.exec("relax-classify", &cfg, &[]).status.code(), Some(0));
    let rep = run.json("report.json");
    assert_eq!(rep["monotonic"], Value::Bool(true));
    assert_eq!(rep["disc"].as_f64(), Some(0.0));

    let cfg = run.config("cyclic.json", r#"{"rates": [1, 0, 0, 1, 1, 0]}"#);
    assert_eq!(run.exec("relax-classify", &cfg, &[]).status.code(), Some(0));
    assert_eq!(run.json("report.json")["monotonic"], Value::Bool(false));

    let cfg = run.config("balanced.json", r#"{"rates": [1, 0.5, 0.5, 0.5, 1, 1.5]}"#);
    assert_eq!(run.exec("relax-classify", &cfg, &[]).status.code(), Some(0));
    let rep = run.json("report.json");
    assert_eq!(rep["omega"].as_f64(), Some(0.0));
    assert_eq!(rep["monotonic"], Value::Bool(true));
}

#[test]
fn relax_scan_balanced_constraint() {
    let run = Run::new();
    let cfg = run.config("scan.json", r#"{"samples": 500, "constraint": "omega_zero", "seed": 9}"#);
    assert_eq!(run.exec("relax-scan", &cfg, &[]).status.code(), Some(0));
    let summary = run.json("summary.json");
    assert_eq!(summary["samples"].as_u64(), Some(500));
    assert_eq!(summary["oscillatory"].as_u64(), Some(0));
    let csv = std::fs::read_to_string(run.out.join("scan.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("a,b,c,d,e,f,xi,disc,omega,u,v,monotonic"));
    assert_eq!(csv.lines().count(), 501);
}

#[test]
fn lindblad_pure_mixed_and_rejected() {
    let run = Run::new();
    let cfg = run.config(
        "pure.json",
        r#"{"dissipators": [{"A": [1, 0, 0], "B": [0, 1, 0]}], "P0": [0, 0, -1], "t_end": 15}"#,
    );
    assert_eq!(run.exec("lindblad", &cfg, &["--stride", "100"]).status.code(), Some(0));
    let rep = run.json("report.json");
    assert!(close(&floats(&rep["stationary"]), &[0.0, 0.0, 1.0], 1e-15));
    assert_eq!(rep["stationary_norm"].as_f64(), Some(1.0));
    assert_eq!(rep["pure"], Value::Bool(true));
    assert!(close(&floats(&rep["final_state"]), &[0.0, 0.0, 1.0], 1e-6));
    assert!(rep["gradient_residual"].as_f64().unwrap() < 1e-12);
    assert!(rep["six_state_residual"].as_f64().unwrap() < 1e-10);

    let cfg = run.config(
        "mixed.json",
        r#"{"dissipators": [{"A": [1, 0, 0], "B": [0, 0, 0]}], "P0": [0, 0, 1], "t_end": 1}"#,
    );
    assert_eq!(run.exec("lindblad", &cfg, &[]).status.code(), Some(0));
    assert_eq!(floats(&run.json("report.json")["stationary"]), vec![0.0, 0.0, 0.0]);

    let other = Run::new();
    let cfg = other.config(
        "h.json",
        r#"{"h": [0, 0, 1], "dissipators": [{"A": [1, 0, 0], "B": [0, 1, 0]}], "P0": [0, 0, -1], "t_end": 1}"#,
    );
    let out = other.exec("lindblad", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gradient form unavailable"));
    assert!(!other.out.exists());

    let cfg = other.config(
        "h_nocheck.json",
        r#"{"h": [0, 0, 1], "dissipators": [{"A": [1, 0, 0], "B": [0, 1, 0]}], "P0": [0, 0, -1], "t_end": 1, "gradient_check": false}"#,
    );
    assert_eq!(other.exec("lindblad", &cfg, &[]).status.code(), Some(0));
    assert_eq!(other.json("report.json")["gradient_residual"], Value::Null);
}

#[test]
fn composite_report() {
    let run = Run::new();
    let cfg = run.config("c.json", r#"{"a": 2, "c": 2, "k": 1}"#);
    assert_eq!(run.exec("composite", &cfg, &[]).status.code(), Some(0));
    let rep = run.json("report.json");
    assert_eq!(rep["lambda"].as_f64(), Some(4.0));
    assert_eq!(rep["q"].as_f64(), Some(2.0));
    assert!(rep["gradient_residual"].as_f64().unwrap() < 1e-10);
    assert!(close(&floats(&rep["stationary"]), &[0.25; 4], 1e-12));

    let cfg = run.config("c1.json", r#"{"a": 1, "c": 1}"#);
    assert_eq!(run.exec("composite", &cfg, &[]).status.code(), Some(0));
    assert_eq!(run.json("report.json")["lambda"].as_f64(), Some(8.0));
}

#[test]
fn help_documents_schemas() {
    let out = Command::new(env!("CARGO_BIN_EXE_qtk"))
        .args(["qt-fit", "--help"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("representation.json"));
    assert!(text.contains("precision"));
}

#[test]
fn missing_output_directory_is_invalid() {
    let run = Run::new();
    let cfg = run.config("c.json", r#"{"a": 2, "c": 2}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_qtk"))
        .args(["composite", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
