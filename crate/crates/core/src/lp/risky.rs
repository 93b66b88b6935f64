//! Primal and dual linear programs of risky control on a balanced MDP.
//!
//! The primal maximises `(1 − γ)⟨ν0, V1⟩` subject to, for every `x`,
//! `a ∈ 𝒜*(x)` and constrained permutation `σ`,
//! `V1(x) ≤ Σ_{s'} 𝑷_σ(s'|x̲, a)(r(x, a, s') + γ𝒱(s'))` where
//! `𝒱(y̲) = V1(y)` and `𝒱(ȳ) = (V*(y) − αV1(y))/(1 − α)` are substituted out.

use serde::Serialize;

use super::{solve, LpProblem, LpStatus, RowSense, Sense};
use crate::control::{svi, Mode, BALANCE_TOL};
use crate::dist::check_level;
use crate::mdp::{check_balanced_with, optimal_state_values, Mdp};
use crate::robust::{best, enumerate_constrained_permutations, permutation_rows, worst};
use crate::{Error, Result};

/// Tolerance on the duality gap and on agreement with risky SVI.
pub const GAP_TOL: f64 = 1e-7;

/// Primal row (or dual column) `(x, a, σ)`, with `σ` indexing
/// [`enumerate_constrained_permutations`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RowLabel {
    pub x: usize,
    pub a: usize,
    pub sigma: usize,
}

/// An LP with the `(x, a, σ)` label of each primal row or dual column.
#[derive(Debug, Clone)]
pub struct RiskyLp {
    pub problem: LpProblem,
    pub labels: Vec<RowLabel>,
}

struct Rows {
    labels: Vec<RowLabel>,
    /// Coefficients on `V1`, one vector per label.
    coefs: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

fn risky_rows(mdp: &Mdp, alpha: f64, nu0: &[f64], v_star: &[f64]) -> Result<Rows> {
    check_level(alpha)?;
    let s = mdp.n_states();
    if nu0.len() != s || v_star.len() != s {
        return Err(Error::Dimension("ν0 and V* need one entry per state".into()));
    }
    if nu0.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Precondition("ν0 must be positive in every state".into()));
    }
    let total: f64 = nu0.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("ν0 sums to {total}")));
    }
    check_balanced_with(mdp, v_star, BALANCE_TOL)?;
    let perms = enumerate_constrained_permutations(s)?;
    let g = mdp.gamma();
    let ratio = alpha / (1.0 - alpha);
    let mut rows = Rows {
        labels: Vec::new(),
        coefs: Vec::new(),
        rhs: Vec::new(),
    };
    for x in 0..s {
        for &a in mdp.actions(x) {
            for (k, sigma) in perms.iter().enumerate() {
                let (w, _) = permutation_rows(mdp, alpha, x, a, sigma);
                let mut coef = vec![0.0; s];
                coef[x] += 1.0;
                let mut rhs = 0.0;
                for y in 0..s {
                    coef[y] -= g * (w[worst(y)] - ratio * w[best(y)]);
                    rhs += (w[worst(y)] + w[best(y)]) * mdp.r(x, a, y) + g / (1.0 - alpha) * w[best(y)] * v_star[y];
                }
                rows.labels.push(RowLabel { x, a, sigma: k });
                rows.coefs.push(coef);
                rows.rhs.push(rhs);
            }
        }
    }
    Ok(rows)
}

/// The primal LP over the free variables `V1(x)`, one `≤` row per `(x, a, σ)`.
pub fn build_risky_primal(mdp: &Mdp, alpha: f64, nu0: &[f64], v_star: &[f64]) -> Result<RiskyLp> {
    let rows = risky_rows(mdp, alpha, nu0, v_star)?;
    let scale = 1.0 - mdp.gamma();
    let names = mdp.state_names().iter().map(|n| format!("V1_{n}")).collect();
    let mut problem = LpProblem::new(Sense::Maximize, nu0.iter().map(|w| scale * w).collect())?.with_names(names)?;
    for j in 0..mdp.n_states() {
        problem.set_free(j)?;
    }
    for (coef, rhs) in rows.coefs.into_iter().zip(rows.rhs) {
        problem.add_row(coef, RowSense::Le, rhs)?;
    }
    Ok(RiskyLp {
        problem,
        labels: rows.labels,
    })
}

/// The dual LP over `p(x, a, σ) ≥ 0`, one equality row per state.
pub fn build_risky_dual(mdp: &Mdp, alpha: f64, nu0: &[f64], v_star: &[f64]) -> Result<RiskyLp> {
    let rows = risky_rows(mdp, alpha, nu0, v_star)?;
    let names = rows
        .labels
        .iter()
        .map(|l| format!("p_{}_{}_{}", mdp.state_names()[l.x], mdp.action_names()[l.a], l.sigma))
        .collect();
    let mut problem = LpProblem::new(Sense::Minimize, rows.rhs)?.with_names(names)?;
    let scale = 1.0 - mdp.gamma();
    for y in 0..mdp.n_states() {
        problem.add_row(rows.coefs.iter().map(|c| c[y]).collect(), RowSense::Eq, scale * nu0[y])?;
    }
    Ok(RiskyLp {
        problem,
        labels: rows.labels,
    })
}

/// Outcome of [`duality_gap_check`].
#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub alpha: f64,
    pub nu0: Vec<f64>,
    pub v_star: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    /// Primal optimum.
    pub v1: Vec<f64>,
    /// `min_a Q1^{risky}(x, a)` from risky SVI.
    pub v1_svi: Vec<f64>,
    pub max_v1_deviation: f64,
    pub primal_rows: usize,
    /// Smallest slack of a primal row at the optimum.
    pub min_primal_slack: f64,
    /// Columns with `p > 1e-9` at the dual optimum.
    pub dual_support: Vec<RowLabel>,
    /// Actions carrying dual mass, per state.
    pub support_actions: Vec<Vec<usize>>,
    /// Risky action sets from SVI.
    pub risky_sets: Vec<Vec<usize>>,
}

/// Solves both LPs and checks strong duality and agreement with risky SVI.
pub fn duality_gap_check(mdp: &Mdp, alpha: f64, nu0: &[f64]) -> Result<DualityReport> {
    let v_star = optimal_state_values(mdp)?;
    let primal = build_risky_primal(mdp, alpha, nu0, &v_star)?;
    let dual = build_risky_dual(mdp, alpha, nu0, &v_star)?;
    let ps = solve(&primal.problem)?;
    let ds = solve(&dual.problem)?;
    if ps.status != LpStatus::Optimal || ds.status != LpStatus::Optimal {
        return Err(Error::PropertyFailure(format!(
            "risky LPs not both optimal: primal {:?}, dual {:?}",
            ps.status, ds.status
        )));
    }
    let control = svi(mdp, Mode::Risky, alpha, 1e-12, 100_000)?;
    let v1_svi: Vec<f64> = (0..mdp.n_states()).map(|x| control.q1.min_over(mdp, x)).collect();
    let max_v1_deviation = ps.x.iter().zip(&v1_svi).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let min_primal_slack = (0..primal.problem.n_rows())
        .map(|i| {
            let (a, _, b) = primal.problem.row(i);
            b - a.iter().zip(&ps.x).map(|(u, v)| u * v).sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    let dual_support: Vec<RowLabel> = dual
        .labels
        .iter()
        .zip(&ds.x)
        .filter(|(_, &p)| p > 1e-9)
        .map(|(l, _)| *l)
        .collect();
    let mut support_actions = vec![Vec::new(); mdp.n_states()];
    for l in &dual_support {
        if !support_actions[l.x].contains(&l.a) {
            support_actions[l.x].push(l.a);
        }
    }
    support_actions.iter_mut().for_each(|v| v.sort_unstable());
    let gap = (ps.objective_value - ds.objective_value).abs();
    let report = DualityReport {
        alpha,
        nu0: nu0.to_vec(),
        v_star,
        primal_objective: ps.objective_value,
        dual_objective: ds.objective_value,
        gap,
        v1: ps.x,
        v1_svi,
        max_v1_deviation,
        primal_rows: primal.problem.n_rows(),
        min_primal_slack,
        dual_support,
        support_actions,
        risky_sets: control.action_sets,
    };
    if gap > GAP_TOL || max_v1_deviation > GAP_TOL {
        return Err(Error::PropertyFailure(format!(
            "duality gap {gap:e}, deviation from risky SVI {max_v1_deviation:e}"
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fig1_shapes_and_optimum() {
        let mdp = corpus::fig1();
        let v_star = [2.0, 4.0];
        let primal = build_risky_primal(&mdp, 0.5, &[0.5, 0.5], &v_star).unwrap();
        assert_eq!((primal.problem.n_vars(), primal.problem.n_rows()), (2, 24));
        let dual = build_risky_dual(&mdp, 0.5, &[0.5, 0.5], &v_star).unwrap();
        assert_eq!((dual.problem.n_vars(), dual.problem.n_rows()), (24, 2));

        let report = duality_gap_check(&mdp, 0.5, &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(report.primal_objective, 1.25, epsilon = 1e-10);
        assert_abs_diff_eq!(report.dual_objective, 1.25, epsilon = 1e-10);
        assert_abs_diff_eq!(report.v1[0], 1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(report.v1[1], 3.5, epsilon = 1e-10);
        assert!(report.min_primal_slack >= -1e-8);
        assert_eq!(report.support_actions, vec![vec![1], vec![1]]);
        assert_eq!(report.risky_sets, vec![vec![1], vec![1]]);
    }

    #[test]
    fn single_state_single_action() {
        let mdp = Mdp::new(1, 1, vec![1.0], vec![3.0], 0.5).unwrap();
        let primal = build_risky_primal(&mdp, 0.3, &[1.0], &[6.0]).unwrap();
        assert_eq!((primal.problem.n_vars(), primal.problem.n_rows()), (1, 1));
        let report = duality_gap_check(&mdp, 0.3, &[1.0]).unwrap();
        assert_abs_diff_eq!(report.v1[0], 6.0, epsilon = 1e-10);
        assert!(report.gap <= 1e-12);
    }

    #[test]
    fn preconditions() {
        let mdp = corpus::fig1();
        let v_star = [2.0, 4.0];
        assert!(matches!(
            build_risky_primal(&mdp, 0.5, &[1.0, 0.0], &v_star),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            build_risky_primal(&mdp, 0.5, &[0.7, 0.7], &v_star),
            Err(Error::Precondition(_))
        ));
        let mut r = mdp.reward_table().to_vec();
        r[0] += 1.0;
        let bumped = mdp.clone().with_rewards(r).unwrap();
        assert!(matches!(
            build_risky_primal(&bumped, 0.5, &[0.5, 0.5], &v_star),
            Err(Error::NotBalanced { .. }) | Err(Error::Precondition(_))
        ));
        assert!(matches!(
            build_risky_primal(&mdp, 1.0, &[0.5, 0.5], &v_star),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn random_balanced_sweep() {
        for seed in 0..4 {
            let (mdp, _) = corpus::random_balanced_mdp(seed, 2 + seed as usize % 2, 2, 0.6);
            let n = mdp.n_states();
            let report = duality_gap_check(&mdp, 0.35, &vec![1.0 / n as f64; n]).unwrap();
            assert!(report.dual_objective >= report.primal_objective - 1e-9);
        }
    }
}
