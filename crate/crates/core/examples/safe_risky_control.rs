//! Safe and risky sorted value iteration, with optimality certificates.

use diatomic_dp::control::{optimality_certificate, svi, Mode};
use diatomic_dp::corpus;
use diatomic_dp::Result;

pub fn run_example() -> Result<()> {
    let (random, _) = corpus::random_balanced_mdp(7, 3, 3, 0.6);
    for (name, mdp) in [("fig1", corpus::fig1()), ("random balanced", random)] {
        println!("{name}:");
        for mode in [Mode::Safe, Mode::Risky] {
            let result = svi(&mdp, mode, 0.5, 1e-12, 10_000)?;
            let cert = optimality_certificate(&mdp, &result, 50, 1)?;
            println!("  {} ({} iterations)", mode.name(), result.iterations);
            println!("    V* = {:?}", result.v_star);
            println!("    Q1 = {:?}", result.q1.as_slice());
            println!("    Q2 = {:?}", result.q2.as_slice());
            println!("    action sets {:?}", result.action_sets);
            println!(
                "    certified against {} policies, max violation {:e}, attained by {:?}",
                cert.policies_checked, cert.max_violation, cert.attained_by
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
