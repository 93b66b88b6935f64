//! Classic and diatomic policy evaluation on the two-state example MDP.

use diatomic_dp::corpus;
use diatomic_dp::diatomic::{is_alpha_coherent, run_spe};
use diatomic_dp::mdp::{evaluate_policy, value_iteration, Policy};
use diatomic_dp::Result;

pub fn run_example() -> Result<()> {
    let mdp = corpus::fig1();
    let q_star = value_iteration(&mdp, 1e-12, 10_000)?;
    println!(
        "Q* = {:?} after {} iterations",
        q_star.value.as_slice(),
        q_star.iterations
    );

    let policies = [
        ("always a1", Policy::deterministic(&mdp, &[0, 0])?),
        ("always a2", Policy::deterministic(&mdp, &[1, 1])?),
        ("uniform", Policy::uniform(&mdp)),
    ];
    for (name, pi) in &policies {
        let q = evaluate_policy(&mdp, pi, 1e-12, 10_000)?.value;
        let fp = run_spe(&mdp, pi, 0.5, 1e-12, 1_000, |iter, dq, residual| {
            if iter <= 3 {
                println!(
                    "  {name} iteration {iter}: Q1 = {:?}, residual {residual:e}",
                    dq.q1_table().as_slice()
                );
            }
        })?;
        let dq = &fp.value;
        println!("{name}: Q = {:?}", q.as_slice());
        println!("  Q1 = {:?}", dq.q1_table().as_slice());
        println!("  Q2 = {:?}", dq.q2_table().as_slice());
        println!("  ½(Q1 + Q2) = {:?}", dq.average().as_slice());
        println!(
            "  {} iterations, α-coherent: {}",
            fp.iterations,
            is_alpha_coherent(&mdp, pi, dq, 1e-8)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
