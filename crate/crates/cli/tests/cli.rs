use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = r#"{"geometry": {"n1": 12, "n2": 12}, "time": {"nt": 8}, "solver": {"N_particles": 2000}}"#;

fn mfg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfg"))
        .args(args)
        .current_dir(dir)
        .env_remove("MFG_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn with_config(json: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("run.json"), json).unwrap();
    dir
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn help_and_usage_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&mfg(dir.path(), &["--help"])), 0);
    assert_eq!(code(&mfg(dir.path(), &["--version"])), 0);
    assert_eq!(code(&mfg(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&mfg(dir.path(), &["validate", "--config", "missing.json"])), 1);
}

#[test]
fn malformed_config_is_exit_one() {
    let dir = with_config(r#"{"geometry": {"hname": "sin"}}"#);
    let o = mfg(dir.path(), &["validate", "--config", "run.json", "--out", "o"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn validate_reports_assumptions() {
    let dir = with_config(SMALL);
    let o = mfg(dir.path(), &["validate", "--config", "run.json", "--out", "o"]);
    assert_eq!(code(&o), 0);
    let v = read_json(&dir.path().join("o/validate.json"));
    let names: Vec<&str> = v["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    for h in ["H1", "H2", "H3", "H4", "H5", "H6"] {
        assert!(names.contains(&h), "missing {h}");
    }
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn vanishing_h_fails_validation() {
    let dir = with_config(r#"{"geometry": {"h_name": "const(0)", "n1": 12, "n2": 12}, "time": {"nt": 8}}"#);
    assert_eq!(code(&mfg(dir.path(), &["validate", "--config", "run.json", "--out", "o"])), 2);
    assert_eq!(code(&mfg(dir.path(), &["solve-hje", "--config", "run.json", "--out", "o"])), 2);
}

#[test]
fn negative_strength_is_refused() {
    let dir = with_config(r#"{"geometry": {"n1": 12, "n2": 12}, "time": {"nt": 8}, "coupling": {"lambda_F": -1}}"#);
    assert_eq!(code(&mfg(dir.path(), &["solve-mfg", "--config", "run.json", "--out", "o"])), 2);
    assert_eq!(code(&mfg(dir.path(), &["solve-mfg", "--config", "run.json", "--out", "o", "--force"])), 2);
}

#[test]
fn warnings_need_force() {
    let dir = with_config(r#"{"geometry": {"h_name": "const(1)", "n1": 12, "n2": 12}, "time": {"nt": 8}}"#);
    assert_eq!(code(&mfg(dir.path(), &["validate", "--config", "run.json", "--out", "o"])), 0);
    assert_eq!(code(&mfg(dir.path(), &["solve-hje", "--config", "run.json", "--out", "o"])), 2);
    assert_eq!(code(&mfg(dir.path(), &["solve-hje", "--config", "run.json", "--out", "o", "--force"])), 0);
}

#[test]
fn cfl_violation_is_exit_two() {
    let dir = with_config(r#"{"geometry": {"n1": 48, "n2": 48}, "time": {"nt": 2}}"#);
    let o = mfg(dir.path(), &["solve-fpe", "--config", "run.json", "--out", "o"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("CFL"));
}

#[test]
fn hje_and_fpe_write_fields() {
    let dir = with_config(SMALL);
    assert_eq!(code(&mfg(dir.path(), &["solve-hje", "--config", "run.json", "--out", "o"])), 0);
    let hje = read_json(&dir.path().join("o/hje.json"));
    assert!(hje["u_sup"].as_f64().unwrap() <= hje["bound"].as_f64().unwrap());
    assert!(hje["w_min"].as_f64().unwrap() >= hje["barrier"].as_f64().unwrap());
    for f in ["u.csv", "w.csv", "alpha1.csv", "alpha2.csv"] {
        assert!(dir.path().join("o").join(f).exists(), "{f}");
    }
    assert_eq!(code(&mfg(dir.path(), &["solve-fpe", "--config", "run.json", "--out", "o"])), 0);
    let fpe = read_json(&dir.path().join("o/fpe.json"));
    assert!(fpe["diagnostics"]["mass_error_max"].as_f64().unwrap() < 1e-12);
    assert_eq!(fpe["summary"]["second_moments"].as_array().unwrap().len(), 9);
}

#[test]
fn solve_mfg_is_reproducible() {
    let dir = with_config(SMALL);
    for out in ["a", "b"] {
        assert_eq!(code(&mfg(dir.path(), &["solve-mfg", "--config", "run.json", "--out", out])), 0);
    }
    for f in ["report.json", "m.csv", "u.csv", "summary.txt"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between identical runs");
    }
    let rep = read_json(&dir.path().join("a/report.json"));
    assert_eq!(rep["converged"], Value::Bool(true));
    let v = mfg(dir.path(), &["validate", "--config", "run.json", "--out", "a"]);
    assert_eq!(code(&v), 0);
    let val = read_json(&dir.path().join("a/validate.json"));
    assert_eq!(rep["config_hash"], val["config_hash"]);
}

#[test]
fn output_dir_from_environment() {
    let dir = with_config(SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_mfg"))
        .args(["geometry", "--config", "run.json"])
        .current_dir(dir.path())
        .env("MFG_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let g = read_json(&dir.path().join("from-env/geometry.json"));
    assert_eq!(g["indices"][0]["hormander_index"], 2);
}

#[test]
fn non_convergence_is_exit_three_with_best_iterate() {
    let dir = with_config(r#"{"geometry": {"n1": 12, "n2": 12}, "time": {"nt": 8}, "solver": {"k_max": 1, "tol_fp": 1e-9}}"#);
    assert_eq!(code(&mfg(dir.path(), &["solve-mfg", "--config", "run.json", "--out", "o"])), 3);
    let rep = read_json(&dir.path().join("o/report.json"));
    assert_eq!(rep["converged"], Value::Bool(false));
    assert_eq!(rep["iterations"], 1);
}

#[test]
fn binary_output_has_header_and_payload() {
    let dir = with_config(
        r#"{"geometry": {"n1": 12, "n2": 12}, "time": {"nt": 8}, "outputs": {"formats": ["binary"]}}"#,
    );
    assert_eq!(code(&mfg(dir.path(), &["solve-mfg", "--config", "run.json", "--out", "o"])), 0);
    let len = std::fs::metadata(dir.path().join("o/m.bin")).unwrap().len();
    assert_eq!(len, 36 + 8 * 12 * 12 * 9);
    assert!(!dir.path().join("o/m.csv").exists());
}

#[test]
fn particles_agree_with_pde() {
    let dir = with_config(SMALL);
    let o = mfg(dir.path(), &["mc-validate", "--config", "run.json", "--out", "o", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mc = read_json(&dir.path().join("o/mc.json"));
    assert_eq!(mc["seed"], 7);
    assert_eq!(mc["d1_vs_pde"].as_array().unwrap().len(), 5);
    let cost = mc["empirical_cost"].as_f64().unwrap();
    let value = mc["value"].as_f64().unwrap();
    let se = mc["cost_std_err"].as_f64().unwrap();
    assert!((cost - value).abs() < 4.0 * se + 0.05, "cost {cost} value {value}");
    let traj = std::fs::read_to_string(dir.path().join("o/trajectories.csv")).unwrap();
    assert!(traj.lines().count() > 100);
}

#[test]
fn report_certifies_uniqueness() {
    let dir = with_config(SMALL);
    assert_eq!(code(&mfg(dir.path(), &["report", "--config", "run.json", "--out", "o"])), 0);
    let rep = read_json(&dir.path().join("o/report.json"));
    assert!(rep["uniqueness"]["sup_d1"].as_f64().unwrap() < 1e-2);
    assert!(std::fs::read_to_string(dir.path().join("o/summary.txt")).unwrap().contains("uniqueness"));
}
