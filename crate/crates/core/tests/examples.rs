//! Every example runs to completion.

#[path = "../examples/atomic_fission.rs"]
mod atomic_fission;
#[path = "../examples/avar_projection.rs"]
mod avar_projection;
#[path = "../examples/coherence.rs"]
mod coherence;
#[path = "../examples/generate_corpus.rs"]
mod generate_corpus;
#[path = "../examples/policy_evaluation.rs"]
mod policy_evaluation;
#[path = "../examples/risky_lp.rs"]
mod risky_lp;
#[path = "../examples/robust_verification.rs"]
mod robust_verification;
#[path = "../examples/safe_risky_control.rs"]
mod safe_risky_control;

#[test]
fn avar_projection_runs() {
    avar_projection::run_example().unwrap();
}

#[test]
fn policy_evaluation_runs() {
    policy_evaluation::run_example().unwrap();
}

#[test]
fn atomic_fission_runs() {
    atomic_fission::run_example().unwrap();
}

#[test]
fn safe_risky_control_runs() {
    safe_risky_control::run_example().unwrap();
}

#[test]
fn robust_verification_runs() {
    robust_verification::run_example().unwrap();
}

#[test]
fn risky_lp_runs() {
    risky_lp::run_example().unwrap();
}

#[test]
fn coherence_runs() {
    coherence::run_example().unwrap();
}

#[test]
fn generate_corpus_matches_bundled_files() {
    let dir = tempfile::tempdir().unwrap();
    generate_corpus::run_example(dir.path()).unwrap();
    let bundled = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/balanced");
    let mut n = 0;
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            std::fs::read_to_string(bundled.join(name)).unwrap(),
            "{name:?}"
        );
        n += 1;
    }
    assert_eq!(n, 25);
}
