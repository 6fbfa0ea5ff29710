use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn projcons(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_projcons"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn converging_recipe_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = projcons(&["--recipe", "sync-unique", "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(&out)["converged"], true);
    let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(csv.starts_with("t,agent,err,disagreement,residual\n"));
}

#[test]
fn necessity_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = projcons(&["--recipe", "necessity", "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(summary(&tmp.path().join("o"))["converged"], false);
}

#[test]
fn config_without_mode_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"seed": 1, "problem": {"generator": {"m": 2, "n": 2, "block_rows": [1, 1]}}}"#).unwrap();
    let o = projcons(&["--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mode"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(projcons(&[], tmp.path()).status.code(), Some(1));
    assert_eq!(projcons(&["--recipe", "nope"], tmp.path()).status.code(), Some(1));
    assert_eq!(projcons(&["--recipe", "sync-unique", "--tol", "x"], tmp.path()).status.code(), Some(1));
    assert_eq!(projcons(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn printed_config_runs_like_the_recipe() {
    let tmp = tempfile::tempdir().unwrap();
    let o = projcons(&["--recipe", "lsq-demo", "--seed", "9", "--print-config"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, &o.stdout).unwrap();
    assert_eq!(projcons(&["--config", cfg.to_str().unwrap(), "--out", "a"], tmp.path()).status.code(), Some(0));
    assert_eq!(projcons(&["--recipe", "lsq-demo", "--seed", "9", "--out", "b"], tmp.path()).status.code(), Some(0));
    for f in ["trace.csv", "summary.json"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap());
    }
    assert_eq!(summary(&tmp.path().join("a"))["x_hat"].as_array().unwrap().len(), 3);
}

#[test]
fn list_recipes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = projcons(&["--list-recipes"], tmp.path());
    let names = String::from_utf8(o.stdout).unwrap();
    assert_eq!(names.lines().count(), 7);
    assert!(names.lines().any(|l| l == "tracking-paper-example"));
}
