//! Risky control as a linear program: primal, dual and strong duality.

use diatomic_dp::corpus;
use diatomic_dp::lp::{build_risky_primal, duality_gap_check};
use diatomic_dp::Result;

pub fn run_example() -> Result<()> {
    let mdp = corpus::fig1();
    let nu0 = [0.5, 0.5];
    let report = duality_gap_check(&mdp, 0.5, &nu0)?;
    println!("primal rows: {}", report.primal_rows);
    println!(
        "primal {} / dual {} / gap {:e}",
        report.primal_objective, report.dual_objective, report.gap
    );
    println!("V1 from the LP {:?}, from risky SVI {:?}", report.v1, report.v1_svi);
    println!("actions carrying dual mass: {:?}", report.support_actions);

    let primal = build_risky_primal(&mdp, 0.5, &nu0, &report.v_star)?;
    for line in primal.problem.to_text().lines().take(6) {
        println!("  {line}");
    }

    for seed in [11, 12, 13] {
        let (mdp, _) = corpus::random_balanced_mdp(seed, 3, 2, 0.7);
        let r = duality_gap_check(&mdp, 0.25, &[0.2, 0.3, 0.5])?;
        println!("seed {seed}: gap {:e}, |V1 − SVI| {:e}", r.gap, r.max_v1_deviation);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
