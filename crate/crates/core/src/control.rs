//! Safe and risky control on balanced MDPs.
//!
//! On a balanced MDP every policy has `αQ1^π + (1 − α)Q2^π = Q*`, so only the
//! left component is iterated and `Q2 = (V* − αQ1)/(1 − α)` is reconstructed
//! from it. The safe operator backs up the best left value and the worst
//! right value of each successor; the risky operator does the opposite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::diatomic::spe;
use crate::dist::{check_level, sort_and_avar_left, Atom};
use crate::mdp::{check_balanced_with, iterations_for, optimal_state_values, Mdp, Policy, QTable, DEFAULT_TIE_TOL};
use crate::{Error, FixedPoint, Result};

/// Tolerance of the balance precondition.
pub const BALANCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Safe,
    Risky,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Safe => "safe",
            Mode::Risky => "risky",
        }
    }
}

/// Fixed point of the safe or risky operator with its optimal action sets.
#[derive(Debug, Clone)]
pub struct ControlResult {
    pub mode: Mode,
    pub alpha: f64,
    pub q1: QTable,
    /// `(V*(x) − α q1(x, a)) / (1 − α)`.
    pub q2: QTable,
    pub v_star: Vec<f64>,
    /// `argmax_a Q1` (safe) or `argmin_a Q1` (risky) over available actions.
    pub action_sets: Vec<Vec<usize>>,
    /// Lowest-index action of each set.
    pub policy: Policy,
    pub iterations: usize,
    pub residual: f64,
}

/// `Q2 = (V* − αQ1)/(1 − α)`.
pub fn q2_from_q1(v_star: &[f64], alpha: f64, q1: &QTable) -> QTable {
    let mut q2 = q1.clone();
    for x in 0..q1.n_states() {
        for a in 0..q1.n_actions() {
            q2.set(x, a, (v_star[x] - alpha * q1.get(x, a)) / (1.0 - alpha));
        }
    }
    q2
}

fn check_inputs(mdp: &Mdp, v_star: &[f64], alpha: f64, q1: &QTable) -> Result<()> {
    check_level(alpha)?;
    if q1.n_states() != mdp.n_states() || q1.n_actions() != mdp.n_actions() {
        return Err(Error::Dimension(format!(
            "Q1 is {}x{}, MDP is {}x{}",
            q1.n_states(),
            q1.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    check_balanced_with(mdp, v_star, BALANCE_TOL)
}

fn apply_unchecked(mdp: &Mdp, v_star: &[f64], alpha: f64, q1: &QTable, mode: Mode) -> QTable {
    let (s, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let v1: Vec<f64> = (0..s)
        .map(|x| match mode {
            Mode::Safe => q1.max_over(mdp, x),
            Mode::Risky => q1.min_over(mdp, x),
        })
        .collect();
    let v2: Vec<f64> = (0..s).map(|x| (v_star[x] - alpha * v1[x]) / (1.0 - alpha)).collect();
    let values = (0..s * na)
        .into_par_iter()
        .map_init(Vec::new, |particles, xa| {
            let (x, a) = (xa / na, xa % na);
            particles.clear();
            for y in 0..s {
                let p = mdp.p(x, a, y);
                if p == 0.0 {
                    continue;
                }
                let r = mdp.r(x, a, y);
                particles.push(Atom::new(r + gamma * v1[y], alpha * p));
                particles.push(Atom::new(r + gamma * v2[y], (1.0 - alpha) * p));
            }
            sort_and_avar_left(particles, alpha)
        })
        .collect();
    QTable::from_vec(s, na, values).expect("matching shape")
}

/// One application of the safe operator to `Q1`.
pub fn safe_bellman_apply(mdp: &Mdp, v_star: &[f64], alpha: f64, q1: &QTable) -> Result<QTable> {
    check_inputs(mdp, v_star, alpha, q1)?;
    Ok(apply_unchecked(mdp, v_star, alpha, q1, Mode::Safe))
}

/// One application of the risky operator to `Q1`.
pub fn risky_bellman_apply(mdp: &Mdp, v_star: &[f64], alpha: f64, q1: &QTable) -> Result<QTable> {
    check_inputs(mdp, v_star, alpha, q1)?;
    Ok(apply_unchecked(mdp, v_star, alpha, q1, Mode::Risky))
}

/// Actions within `tie_tol` of `max_a Q1` (safe) or `min_a Q1` (risky).
pub fn extreme_action_sets(mdp: &Mdp, q1: &QTable, mode: Mode, tie_tol: f64) -> Vec<Vec<usize>> {
    (0..mdp.n_states())
        .map(|x| {
            let acts = mdp.actions(x).iter().copied();
            match mode {
                Mode::Safe => {
                    let best = q1.max_over(mdp, x);
                    acts.filter(|&a| q1.get(x, a) >= best - tie_tol).collect()
                }
                Mode::Risky => {
                    let best = q1.min_over(mdp, x);
                    acts.filter(|&a| q1.get(x, a) <= best + tie_tol).collect()
                }
            }
        })
        .collect()
}

/// Safe/risky sorted value iteration from `Q1 ≡ 0`, reporting
/// `(iteration, Q1, residual)` to `observer`. `V*` is computed by value
/// iteration at tolerance `1e-12`.
pub fn run_svi<F>(
    mdp: &Mdp,
    mode: Mode,
    alpha: f64,
    tol: f64,
    max_iter: usize,
    mut observer: F,
) -> Result<FixedPoint<ControlResult>>
where
    F: FnMut(usize, &QTable, f64),
{
    check_level(alpha)?;
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let v_star = optimal_state_values(mdp)?;
    let mut q1 = QTable::for_mdp(mdp);
    check_inputs(mdp, &v_star, alpha, &q1)?;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let next = apply_unchecked(mdp, &v_star, alpha, &q1, mode);
        residual = next.sup_distance(&q1);
        q1 = next;
        observer(iterations, &q1, residual);
        if residual <= tol {
            break;
        }
    }
    let action_sets = extreme_action_sets(mdp, &q1, mode, DEFAULT_TIE_TOL);
    let representative: Vec<usize> = action_sets.iter().map(|set| set[0]).collect();
    let policy = Policy::deterministic(mdp, &representative)?;
    let q2 = q2_from_q1(&v_star, alpha, &q1);
    Ok(FixedPoint {
        converged: residual <= tol,
        iterations,
        residual,
        value: ControlResult {
            mode,
            alpha,
            q1,
            q2,
            v_star,
            action_sets,
            policy,
            iterations,
            residual,
        },
    })
}

/// Safe or risky SVI to tolerance `tol`.
pub fn svi(mdp: &Mdp, mode: Mode, alpha: f64, tol: f64, max_iter: usize) -> Result<ControlResult> {
    Ok(run_svi(mdp, mode, alpha, tol, max_iter, |_, _, _| {})?
        .require_converged()?
        .value)
}

/// Outcome of [`optimality_certificate`].
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub policies_checked: usize,
    pub deterministic_checked: usize,
    /// Largest `Q1^π − Q1^{safe}` (safe) or `Q1^{risky} − Q1^π` (risky); at most `1e-8`.
    pub max_violation: f64,
    /// First checked deterministic policy whose `Q1^π` equals the result's `Q1`
    /// within `1e-8` on every available pair.
    pub attained_by: Option<Vec<usize>>,
}

/// Tolerance of [`optimality_certificate`].
pub const CERTIFICATE_TOL: f64 = 1e-8;

/// Checks `Q1^π ≤ Q1^{safe}` (or `Q1^π ≥ Q1^{risky}`) for every deterministic
/// policy (when there are at most 4096) and `n_policies` random stationary ones.
pub fn optimality_certificate(mdp: &Mdp, result: &ControlResult, n_policies: usize, seed: u64) -> Result<Certificate> {
    let deterministic = Policy::enumerate_deterministic(mdp, 4096).unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = Vec::with_capacity(n_policies);
    for _ in 0..n_policies {
        let mut probs = vec![0.0; mdp.n_states() * mdp.n_actions()];
        for x in 0..mdp.n_states() {
            let acts = mdp.actions(x);
            let w: Vec<f64> = acts.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = w.iter().sum();
            for (&a, wi) in acts.iter().zip(&w) {
                probs[x * mdp.n_actions() + a] = wi / total;
            }
        }
        random.push(Policy::new(mdp.n_states(), mdp.n_actions(), probs)?);
    }
    let budget = iterations_for(mdp.gamma(), 1e-12);
    let mut max_violation = f64::NEG_INFINITY;
    let mut attained_by = None;
    for (i, pi) in deterministic.iter().chain(&random).enumerate() {
        let q1 = spe(mdp, pi, result.alpha, 1e-12, budget)?.value.into_tables().0;
        let mut worst = f64::NEG_INFINITY;
        let mut matches = true;
        for x in 0..mdp.n_states() {
            for &a in mdp.actions(x) {
                let gap = match result.mode {
                    Mode::Safe => q1.get(x, a) - result.q1.get(x, a),
                    Mode::Risky => result.q1.get(x, a) - q1.get(x, a),
                };
                worst = worst.max(gap);
                matches &= gap.abs() <= CERTIFICATE_TOL;
            }
        }
        if worst > CERTIFICATE_TOL {
            return Err(Error::PropertyFailure(format!(
                "{} optimality violated by {worst:e} for policy {:?}",
                result.mode.name(),
                pi.probs()
            )));
        }
        if matches && attained_by.is_none() && i < deterministic.len() {
            attained_by = Some((0..mdp.n_states()).map(|x| pi.support(x)[0]).collect());
        }
        max_violation = max_violation.max(worst);
    }
    Ok(Certificate {
        policies_checked: deterministic.len() + random.len(),
        deterministic_checked: deterministic.len(),
        max_violation,
        attained_by,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::diatomic::{diatomic_bellman_apply, DoubleQ};
    use approx::assert_abs_diff_eq;

    #[test]
    fn safe_single_step_from_zero() {
        let mdp = corpus::fig1();
        let q1 = safe_bellman_apply(&mdp, &[2.0, 4.0], 0.5, &QTable::for_mdp(&mdp)).unwrap();
        // particles 1 (w.p. ½) and 1 + ½·4 = 3 (w.p. ½)
        assert_abs_diff_eq!(q1.get(0, 0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn risky_single_step_from_zero() {
        let mdp = corpus::fig1();
        let q1 = risky_bellman_apply(&mdp, &[2.0, 4.0], 0.5, &QTable::for_mdp(&mdp)).unwrap();
        // V1 = 0, V2 = (2, 4)·2; particles at (x1, a2): 0.5, 0.5, 2.5, 4.5 each w.p. ¼
        assert_abs_diff_eq!(q1.get(0, 1), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn fig1_safe() {
        let mdp = corpus::fig1();
        let res = svi(&mdp, Mode::Safe, 0.5, 1e-12, 1_000).unwrap();
        for (x, v) in [(0, 2.0), (1, 4.0)] {
            assert_abs_diff_eq!(res.q1.get(x, 0), v, epsilon = 1e-9);
            assert_abs_diff_eq!(res.q2.get(x, 0), v, epsilon = 1e-9);
        }
        assert_eq!(res.action_sets, vec![vec![0], vec![0]]);
        let again = safe_bellman_apply(&mdp, &res.v_star, 0.5, &res.q1).unwrap();
        assert!(again.sup_distance(&res.q1) <= 1e-11);
    }

    #[test]
    fn fig1_risky() {
        let mdp = corpus::fig1();
        let res = svi(&mdp, Mode::Risky, 0.5, 1e-12, 1_000).unwrap();
        for (x, q1, q2) in [(0, 1.5, 2.5), (1, 3.5, 4.5)] {
            assert_abs_diff_eq!(res.q1.get(x, 1), q1, epsilon = 1e-9);
            assert_abs_diff_eq!(res.q2.get(x, 1), q2, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(res.q1.get(0, 0), 1.75, epsilon = 1e-9);
        assert_eq!(res.action_sets, vec![vec![1], vec![1]]);
        let again = risky_bellman_apply(&mdp, &res.v_star, 0.5, &res.q1).unwrap();
        assert!(again.sup_distance(&res.q1) <= 1e-11);
    }

    #[test]
    fn single_action_reduces_to_spe() {
        let (mdp, v_star) = corpus::random_balanced_mdp(8, 3, 1, 0.6);
        let pi = Policy::uniform(&mdp);
        let fixed = spe(&mdp, &pi, 0.3, 1e-13, 10_000).unwrap().value;
        let mut q1 = QTable::for_mdp(&mdp);
        q1.as_mut_slice().copy_from_slice(&[0.3, -1.0, 2.0]);
        let q2 = q2_from_q1(&v_star, 0.3, &q1);
        let dq = DoubleQ::new(0.3, q1.clone(), q2).unwrap();
        let expected = diatomic_bellman_apply(&mdp, &pi, &dq).unwrap();
        for op in [safe_bellman_apply, risky_bellman_apply] {
            let got = op(&mdp, &v_star, 0.3, &q1).unwrap();
            assert!(got.sup_distance(expected.q1_table()) <= 1e-12);
        }
        for mode in [Mode::Safe, Mode::Risky] {
            let res = svi(&mdp, mode, 0.3, 1e-13, 10_000).unwrap();
            assert!(res.q1.sup_distance(fixed.q1_table()) <= 1e-9);
            assert!(res.q2.sup_distance(fixed.q2_table()) <= 1e-9);
        }
    }

    #[test]
    fn rejects_unbalanced() {
        let mdp = corpus::fig1();
        let mut r = mdp.reward_table().to_vec();
        r[0] += 1.0;
        let bumped = mdp.with_rewards(r).unwrap();
        assert!(matches!(
            svi(&bumped, Mode::Safe, 0.5, 1e-9, 100),
            Err(Error::NotBalanced { state: 0, .. })
        ));
    }

    #[test]
    fn certificates_on_fig1() {
        let mdp = corpus::fig1();
        let safe = svi(&mdp, Mode::Safe, 0.5, 1e-12, 1_000).unwrap();
        let cert = optimality_certificate(&mdp, &safe, 10, 1).unwrap();
        assert_eq!(cert.deterministic_checked, 4);
        assert_eq!(cert.attained_by, Some(vec![0, 0]));
        let risky = svi(&mdp, Mode::Risky, 0.5, 1e-12, 1_000).unwrap();
        let cert = optimality_certificate(&mdp, &risky, 10, 1).unwrap();
        assert_eq!(cert.attained_by, Some(vec![1, 1]));
        assert!(cert.max_violation <= CERTIFICATE_TOL);
    }

    #[test]
    fn certificate_detects_wrong_result() {
        let mdp = corpus::fig1();
        let mut safe = svi(&mdp, Mode::Safe, 0.5, 1e-12, 1_000).unwrap();
        safe.q1.set(0, 0, 1.0);
        assert!(matches!(
            optimality_certificate(&mdp, &safe, 0, 1),
            Err(Error::PropertyFailure(_))
        ));
    }
}
