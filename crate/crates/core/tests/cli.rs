use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ms-hybrid"))
}

fn run(args: &[&str], out: &Path) -> i32 {
    bin()
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fem_ref_writes_1001_rows_with_zero_ends() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--mode", "fem-ref", "--epsilon", "0.0625"], dir.path()), 0);
    let text = std::fs::read_to_string(dir.path().join("fem_ref.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1001);
    let value = |row: &str| row.split(',').nth(1).unwrap().parse::<f64>().unwrap();
    assert_eq!(value(rows[0]), 0.0);
    assert_eq!(value(rows[1000]), 0.0);
    let manifest = json(&dir.path().join("manifest.json"));
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(dir.path().join(f.as_str().unwrap()).exists());
    }
}

#[test]
fn upscale1d_reports_k_tilde() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--mode", "upscale1d", "--epsilon", "0.0625"], dir.path()), 0);
    let k = json(&dir.path().join("summary.json"))["k_tilde"].as_f64().unwrap();
    assert!((k - 0.834).abs() < 0.005, "{k}");
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--mode", "gradcheck"], dir.path()), 0);
    let s = json(&dir.path().join("summary.json"));
    assert!(s["report"]["max_rel_err"].as_f64().unwrap() < 1e-4);
}

#[test]
fn upscale2d_constant_block_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(
        &["--mode", "upscale2d", "--coefficient", "2.0", "--cells", "16", "--blocks", "4", "--dump-fields"],
        dir.path(),
    );
    assert_eq!(code, 0);
    let t = json(&dir.path().join("tensors.json"));
    let blocks = t[0]["blocks"].as_array().unwrap();
    assert_eq!(blocks.len(), 16);
    for b in blocks {
        assert!((b["k11"].as_f64().unwrap() - 2.0).abs() < 1e-8);
        assert!(b["k12"].as_f64().unwrap().abs() < 1e-8);
    }
    assert!(dir.path().join("field_constant_w1.csv").exists());
}

#[test]
fn misaligned_blocks_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&["--mode", "upscale2d", "--coefficient", "2.0", "--cells", "16", "--blocks", "3"], dir.path());
    assert_eq!(code, 2);
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--mode", "bogus"], dir.path()), 2);
    assert_eq!(run(&["--mode", "hybrid", "--epsilon", "-1"], dir.path()), 2);
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"not_a_key": 3}"#).unwrap();
    assert_eq!(run(&["--mode", "hybrid", "--config", cfg.to_str().unwrap()], dir.path()), 2);
    std::fs::write(&cfg, r#"{"lr0": 0}"#).unwrap();
    assert_eq!(run(&["--mode", "hybrid", "--config", cfg.to_str().unwrap()], dir.path()), 2);
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("blowup.json");
    std::fs::write(&cfg, r#"{"lr0": 1e300, "iterations": 5, "width": 8, "collocation": 40, "log_every": 0}"#).unwrap();
    assert_eq!(run(&["--mode", "pinn", "--config", cfg.to_str().unwrap()], dir.path()), 3);
}

#[test]
fn training_outputs_are_reproducible_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    std::fs::write(&cfg, r#"{"width": 8, "collocation": 64, "coarse_nodes": 12, "iterations": 25, "log_every": 10}"#)
        .unwrap();
    let a = dir.path().join("a");
    assert_eq!(run(&["--mode", "hybrid", "--config", cfg.to_str().unwrap(), "--seed", "3"], &a), 0);
    for f in ["history.csv", "solution.csv", "summary.json", "manifest.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    // replay the config snapshot recorded in the manifest
    let snapshot = dir.path().join("snapshot.json");
    std::fs::write(&snapshot, json(&a.join("manifest.json"))["config"].to_string()).unwrap();
    let b = dir.path().join("b");
    assert_eq!(run(&["--mode", "hybrid", "--config", snapshot.to_str().unwrap()], &b), 0);
    let ha = std::fs::read(a.join("history.csv")).unwrap();
    let hb = std::fs::read(b.join("history.csv")).unwrap();
    assert_eq!(ha, hb);
    let text = String::from_utf8(ha).unwrap();
    assert_eq!(text.lines().count(), 26);
    let solution = std::fs::read_to_string(a.join("solution.csv")).unwrap();
    assert!(solution.starts_with("x,u_pred,u_ref\n"));
    assert_eq!(solution.lines().count(), 1002);
}

#[test]
fn thread_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let code = bin()
        .args(["--mode", "upscale1d", "--out"])
        .arg(dir.path())
        .env("MS_HYBRID_THREADS", "zero")
        .status()
        .unwrap()
        .code()
        .unwrap();
    assert_eq!(code, 2);
    let code = bin()
        .args(["--mode", "upscale1d", "--out"])
        .arg(dir.path())
        .env("MS_HYBRID_THREADS", "1")
        .status()
        .unwrap()
        .code()
        .unwrap();
    assert_eq!(code, 0);
}
