//! Growth of the atom count under the full distributional Bellman operator,
//! and the AVaRs of the truncated returns against the BAVaR fixed point.

use diatomic_dp::corpus;
use diatomic_dp::dbo::{avar_tables, dbo_iterate_with, return_avars, DistFunction, FissionOptions};
use diatomic_dp::diatomic::spe;
use diatomic_dp::dist::DiscreteDist;
use diatomic_dp::mdp::Policy;
use diatomic_dp::Result;

pub fn run_example() -> Result<()> {
    let mdp = corpus::fig1();
    let pi = Policy::deterministic(&mdp, &[1, 1])?;
    let alpha = 0.5;
    let fixed = spe(&mdp, &pi, alpha, 1e-12, 1_000)?.value;
    println!("BAVaR at (x1, a2): Q1 = {}, Q2 = {}", fixed.q1(0, 1), fixed.q2(0, 1));

    let mu0 = DistFunction::constant(&mdp, DiscreteDist::dirac(0.0));
    dbo_iterate_with(&mdp, &pi, &mu0, 12, &FissionOptions::default(), |step, mu| {
        let (left, right) = avar_tables(mu, alpha).expect("valid level");
        println!(
            "step {step:2}: {:5} atoms at (x1, a2), left {:.6}, right {:.6}",
            mu.get(0, 1).len(),
            left.get(0, 1),
            right.get(0, 1)
        );
    })?;

    let ra = return_avars(&mdp, &pi, alpha, 30, 1 << 14)?;
    println!(
        "k = 30 (cell-mean compression): left ≤ {:.9}, right ≥ {:.9}, ε = {:e}",
        ra.left.get(0, 1),
        ra.right.get(0, 1),
        ra.tail_bound
    );
    println!(
        "bracket: left − Q1 = {:e} ≤ ε, Q2 − right = {:e} ≤ ε",
        ra.left.get(0, 1) - fixed.q1(0, 1),
        fixed.q2(0, 1) - ra.right.get(0, 1)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
