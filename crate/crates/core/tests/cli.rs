use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use diatomic_dp::corpus;
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diatomic-dp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn result_json(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("result.json")).unwrap()).unwrap()
}

fn close(v: &Value, want: f64) -> bool {
    (v.as_f64().unwrap() - want).abs() < 1e-8
}

#[test]
fn spe_golden() {
    let dir = tempfile::tempdir().unwrap();
    let fig1 = data("fig1.json");
    let out = run(&["spe", fig1.to_str().unwrap(), "--policy", "always:a2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = result_json(dir.path());
    assert!(close(&r["q1"]["x1"]["a2"], 1.5) && close(&r["q2"]["x1"]["a2"], 2.5));
    assert!(close(&r["q1"]["x2"]["a2"], 3.5) && close(&r["q2"]["x2"]["a2"], 4.5));
    assert_eq!(r["alpha_coherent"], Value::Bool(true));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let iterations = r["iterations"].as_u64().unwrap() as usize;
    assert_eq!(trace.lines().count(), iterations + 1);
}

#[test]
fn trace_has_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let fig1 = data("fig1.json");
    let out = run(
        &["spe", fig1.to_str().unwrap(), "--max-iter", "20", "--tol", "1e-300"],
        dir.path(),
    );
    assert!(out.status.success());
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 21);
    assert_eq!(result_json(dir.path())["converged"], Value::Bool(false));
}

#[test]
fn safe_and_risky_sets() {
    let fig1 = data("fig1.json");
    for (cmd, want) in [("safe", "a1"), ("risky", "a2")] {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&[cmd, fig1.to_str().unwrap(), "--certify", "5"], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(dir.path().join("result.json")).unwrap();
        let r: Value = serde_json::from_str(&text).unwrap();
        let sets = r["action_sets"].to_string();
        assert!(sets.contains(want), "{cmd}: {sets}");
        assert!(r.get("certificate").is_some(), "{cmd}: no certificate");
    }
}

#[test]
fn avar_golden() {
    let dir = tempfile::tempdir().unwrap();
    let dist = data("fig4_dist.json");
    let out = run(&["avar", dist.to_str().unwrap(), "--alpha", "0.7"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let inner = stdout.trim().trim_start_matches('(').trim_end_matches(')');
    let (l, r) = inner.split_once(", ").unwrap();
    assert!((l.parse::<f64>().unwrap() + 1.0 / 0.7).abs() < 1e-12);
    assert!((r.parse::<f64>().unwrap() - 2.0 / 0.3).abs() < 1e-12);
}

#[test]
fn outputs_are_deterministic() {
    let fig1 = data("fig1.json");
    let run_once = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_diatomic-dp"))
            .args(["robust-verify", fig1.to_str().unwrap(), "--k", "6"])
            .arg("--out")
            .arg(dir.path())
            .env(diatomic_dp::cli::THREADS_ENV, threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (out.stdout, std::fs::read(dir.path().join("result.json")).unwrap())
    };
    let first = run_once("1");
    assert_eq!(first, run_once("1"));
    assert_eq!(first, run_once("4"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(&["spe", "/nonexistent/mdp.json"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/mdp.json"));

    let fig1 = data("fig1.json");
    let bad_alpha = run(&["spe", fig1.to_str().unwrap(), "--alpha", "1.5"], dir.path());
    assert_eq!(bad_alpha.status.code(), Some(1));
    let bad_flag = run(&["spe", fig1.to_str().unwrap(), "--bogus"], dir.path());
    assert_eq!(bad_flag.status.code(), Some(1));

    let unbalanced = dir.path().join("unbalanced.json");
    std::fs::write(&unbalanced, corpus::random_mdp(7, 3, 2, 0.9).to_json_string()).unwrap();
    let safe = run(&["safe", unbalanced.to_str().unwrap()], dir.path());
    assert_eq!(safe.status.code(), Some(2));

    let bad_threads = Command::new(env!("CARGO_BIN_EXE_diatomic-dp"))
        .args(["spe", fig1.to_str().unwrap()])
        .arg("--out")
        .arg(dir.path())
        .env(diatomic_dp::cli::THREADS_ENV, "zero")
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(1));
}

#[test]
fn risky_lp_dump() {
    let dir = tempfile::tempdir().unwrap();
    let fig1 = data("fig1.json");
    let out = run(&["risky-lp", fig1.to_str().unwrap(), "--dump-lp"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let primal = std::fs::read_to_string(dir.path().join("primal.lp")).unwrap();
    let dual = std::fs::read_to_string(dir.path().join("dual.lp")).unwrap();
    assert!(primal.starts_with("Maximize") && dual.starts_with("Minimize"));
    assert_eq!(primal.lines().filter(|l| l.trim_start().starts_with('c')).count(), 24);
    let r = result_json(dir.path());
    assert!((r["primal_objective"].as_f64().unwrap() - 1.25).abs() < 1e-7);
}
