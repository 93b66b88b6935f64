//! `±(1 − γ)V^π` as coherent risk measures of the reward table.

use diatomic_dp::corpus;
use diatomic_dp::mdp::Policy;
use diatomic_dp::robust::coherence_axioms_check;
use diatomic_dp::Result;

pub fn run_example() -> Result<()> {
    let mdp = corpus::fig1();
    for (name, pi) in [
        ("always a1", Policy::deterministic(&mdp, &[0, 0])?),
        ("always a2", Policy::deterministic(&mdp, &[1, 1])?),
    ] {
        let report = coherence_axioms_check(&mdp, &pi, 0.5, 0, 20, 42)?;
        println!("{name}, {} random reward tables:", report.trials);
        println!("  lower tail: {:?}", report.left);
        println!("  upper tail: {:?}", report.right);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
