//! The BAVaR pair as worst/best values over the dichotomous uncertainty set,
//! checked by brute force over permutation kernels.

use diatomic_dp::corpus;
use diatomic_dp::diatomic::spe;
use diatomic_dp::mdp::Policy;
use diatomic_dp::robust::{in_uncertainty_set, star_kernel, worst_best_case};
use diatomic_dp::Result;

pub fn run_example() -> Result<()> {
    let mdp = corpus::fig1();
    let alpha = 0.5;
    let pi = Policy::deterministic(&mdp, &[1, 1])?;
    let fixed = spe(&mdp, &pi, alpha, 1e-13, 1_000)?.value;
    let star = star_kernel(&mdp, &pi, &fixed)?;
    let sub = |s: usize| {
        format!(
            "{}{}",
            if s.is_multiple_of(2) { "worst " } else { "best " },
            mdp.state_names()[s / 2]
        )
    };
    println!(
        "P* rows for a2 (member of the set: {}):",
        in_uncertainty_set(&mdp, alpha, &star, 1e-12)
    );
    for (s, a, t, p) in star.entries() {
        if a == 1 {
            println!("  P*({} | {}, a2) = {p}", sub(t), sub(s));
        }
    }

    for policy in Policy::enumerate_deterministic(&mdp, 16).expect("four policies") {
        let wb = worst_best_case(&mdp, &policy, alpha)?;
        println!(
            "policy {:?}: worst {:?} vs V1 {:?}, best {:?} vs V2 {:?} ({} candidates, {} optimal)",
            (0..2).map(|x| policy.support(x)[0]).collect::<Vec<_>>(),
            wb.worst,
            wb.spe_v1,
            wb.best,
            wb.spe_v2,
            wb.candidates,
            wb.optimal_kernels
        );
    }

    let (mdp, _) = corpus::random_balanced_mdp(301, 3, 2, corpus::corpus_gamma(301));
    let pi = Policy::deterministic(&mdp, &[0, 1, 0])?;
    let wb = worst_best_case(&mdp, &pi, 0.3)?;
    println!(
        "three-state instance: {} candidate kernels, max deviation {:e}",
        wb.candidates, wb.max_deviation
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
