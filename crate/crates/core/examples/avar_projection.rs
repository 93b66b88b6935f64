//! Left/right AVaR of a four-atom distribution and its W2 projection onto
//! diatomic distributions.

use diatomic_dp::corpus;
use diatomic_dp::dist::{Diatomic, WassersteinOrder};
use diatomic_dp::Result;

pub fn run_example() -> Result<()> {
    let d = corpus::fig4_dist();
    let alpha = 0.7;
    let left = d.avar_left(alpha)?;
    let right = d.avar_right(1.0 - alpha)?;
    println!(
        "atoms: {:?}",
        d.atoms().iter().map(|a| (a.value, a.prob)).collect::<Vec<_>>()
    );
    println!("left AVaR at {alpha}: {left} (= -1/{alpha})");
    println!("right AVaR at {:.1}: {right} (= 2/{:.1})", 1.0 - alpha, 1.0 - alpha);
    println!(
        "check: {alpha}·left + {:.1}·right = {} = E = {}",
        1.0 - alpha,
        alpha * left + (1.0 - alpha) * right,
        d.expectation()
    );

    let (value, lambda) = d.avar_left_dual(alpha)?;
    println!("greedy dual: value {value}, weights {lambda:?}");

    let proj = d.project_w2_diatomic(alpha)?;
    let best = d.wasserstein(&proj.to_dist(), WassersteinOrder::P(2.0))?;
    println!(
        "W2 projection: θ1 = {}, θ2 = {}, distance {best}",
        proj.theta1, proj.theta2
    );
    for (t1, t2) in [(-2.0, 6.0), (-1.0, 7.0), (-1.5, 6.5)] {
        let other = Diatomic {
            theta1: t1,
            theta2: t2,
            alpha,
        }
        .to_dist();
        println!(
            "  distance to ({t1}, {t2}): {}",
            d.wasserstein(&other, WassersteinOrder::P(2.0))?
        );
    }
    for tau in [0.1, 0.5, 0.7, 0.9] {
        println!("quantile({tau}) = {}", d.quantile(tau)?);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
