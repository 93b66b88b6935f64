//! Finite discounted MDPs, stationary policies and the classic Bellman operators.
//!
//! Tables are stored flat: transition and reward tables are indexed by
//! `(x, a, x')`, Q-tables and policies by `(x, a)`. After
//! [`reduce_to_balanced`] a state may only allow a subset of the actions;
//! actions keep their original indices and unavailable `(x, a)` entries are
//! skipped by every max/min and by policies.

use serde::{Deserialize, Serialize};

use crate::linalg::solve_dense;
use crate::{Error, FixedPoint, Result};

/// Accepted deviation of a transition row sum from 1 before renormalising.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Largest row-sum deviation that is still renormalised instead of rejected.
pub const ROW_RENORMALIZE_MAX: f64 = 1e-6;
/// Default stopping tolerance for fixed-point iterations.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default iteration budget for fixed-point iterations.
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Default tie tolerance for optimal action sets.
pub const DEFAULT_TIE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    available: Vec<Vec<usize>>,
    state_names: Vec<String>,
    action_names: Vec<String>,
}

impl Mdp {
    /// Builds an MDP from flat `(x, a, x')` tables.
    pub fn new(n_states: usize, n_actions: usize, transition: Vec<f64>, reward: Vec<f64>, gamma: f64) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Dimension(
                "an MDP needs at least one state and one action".into(),
            ));
        }
        let size = n_states * n_actions * n_states;
        if transition.len() != size || reward.len() != size {
            return Err(Error::Dimension(format!(
                "expected transition and reward tables of length {size}, got {} and {}",
                transition.len(),
                reward.len()
            )));
        }
        check_gamma(gamma)?;
        let mut transition = transition;
        for x in 0..n_states {
            for a in 0..n_actions {
                let row = &mut transition[(x * n_actions + a) * n_states..][..n_states];
                if let Some(bad) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                    return Err(Error::Domain(format!(
                        "transition P(.|{x},{a}) has invalid entry {bad}"
                    )));
                }
                let sum: f64 = row.iter().sum();
                let dev = (sum - 1.0).abs();
                if dev >= ROW_RENORMALIZE_MAX {
                    return Err(Error::Domain(format!("transition row P(.|{x},{a}) sums to {sum}")));
                }
                // rows within summation noise of 1 are kept as given
                if dev > 4.0 * n_states as f64 * f64::EPSILON {
                    row.iter_mut().for_each(|p| *p /= sum);
                }
            }
        }
        if let Some(bad) = reward.iter().find(|r| !r.is_finite()) {
            return Err(Error::Domain(format!("non-finite reward {bad}")));
        }
        Ok(Mdp {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            available: vec![(0..n_actions).collect(); n_states],
            state_names: (1..=n_states).map(|i| format!("x{i}")).collect(),
            action_names: (1..=n_actions).map(|i| format!("a{i}")).collect(),
        })
    }

    pub fn with_names(mut self, states: Vec<String>, actions: Vec<String>) -> Result<Self> {
        if states.len() != self.n_states || actions.len() != self.n_actions {
            return Err(Error::Dimension("name lists do not match the MDP size".into()));
        }
        self.state_names = states;
        self.action_names = actions;
        Ok(self)
    }

    /// Restricts each state to the listed actions (original indices).
    pub fn with_available(mut self, available: Vec<Vec<usize>>) -> Result<Self> {
        if available.len() != self.n_states {
            return Err(Error::Dimension("one action list per state required".into()));
        }
        for (x, list) in available.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::Domain(format!("state {x} has no available action")));
            }
            if list.iter().any(|&a| a >= self.n_actions) {
                return Err(Error::Dimension(format!("state {x} lists an unknown action")));
            }
        }
        self.available = available
            .into_iter()
            .map(|mut l| {
                l.sort_unstable();
                l.dedup();
                l
            })
            .collect();
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        self.gamma = gamma;
        Ok(self)
    }

    /// Same dynamics with a different `(x, a, x')` reward table.
    pub fn with_rewards(mut self, reward: Vec<f64>) -> Result<Self> {
        if reward.len() != self.reward.len() {
            return Err(Error::Dimension("reward table has the wrong length".into()));
        }
        self.reward = reward;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn p(&self, x: usize, a: usize, next: usize) -> f64 {
        self.transition[(x * self.n_actions + a) * self.n_states + next]
    }

    #[inline]
    pub fn r(&self, x: usize, a: usize, next: usize) -> f64 {
        self.reward[(x * self.n_actions + a) * self.n_states + next]
    }

    /// Transition row `P(.|x, a)`.
    pub fn transition_row(&self, x: usize, a: usize) -> &[f64] {
        &self.transition[(x * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    /// Actions allowed in state `x`, by original index.
    pub fn actions(&self, x: usize) -> &[usize] {
        &self.available[x]
    }

    pub fn is_available(&self, x: usize, a: usize) -> bool {
        self.available[x].binary_search(&a).is_ok()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    /// Parses the MDP JSON schema. Missing entries default to zero.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: MdpFile = serde_json::from_str(text)?;
        file.into_mdp()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&MdpFile::from_mdp(self)).expect("MDP serialization")
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::Domain(format!("discount must lie in [0, 1), got {gamma}")))
    }
}

/// On-disk MDP format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub gamma: f64,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    #[serde(default)]
    pub transitions: Vec<TransitionEntry>,
    #[serde(default)]
    pub rewards: Vec<RewardEntry>,
    /// Optional per-state action subsets (written for reduced MDPs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub available: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub x: usize,
    pub a: usize,
    pub next: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardEntry {
    pub x: usize,
    pub a: usize,
    pub next: usize,
    pub r: f64,
}

impl MdpFile {
    pub fn into_mdp(self) -> Result<Mdp> {
        let (s, a_count) = (self.states.len(), self.actions.len());
        if s == 0 || a_count == 0 {
            return Err(Error::Dimension(
                "an MDP needs at least one state and one action".into(),
            ));
        }
        let size = s * a_count * s;
        let index = |x: usize, a: usize, next: usize, what: &str| -> Result<usize> {
            if x >= s || a >= a_count || next >= s {
                return Err(Error::Dimension(format!(
                    "{what} entry ({x}, {a}, {next}) is out of range"
                )));
            }
            Ok((x * a_count + a) * s + next)
        };
        let mut transition = vec![0.0; size];
        let mut seen = vec![false; size];
        for e in &self.transitions {
            let i = index(e.x, e.a, e.next, "transition")?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Domain(format!(
                    "duplicate transition entry ({}, {}, {})",
                    e.x, e.a, e.next
                )));
            }
            transition[i] = e.p;
        }
        let mut reward = vec![0.0; size];
        let mut seen = vec![false; size];
        for e in &self.rewards {
            let i = index(e.x, e.a, e.next, "reward")?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Domain(format!(
                    "duplicate reward entry ({}, {}, {})",
                    e.x, e.a, e.next
                )));
            }
            reward[i] = e.r;
        }
        let mut mdp = Mdp::new(s, a_count, transition, reward, self.gamma)?.with_names(self.states, self.actions)?;
        if let Some(available) = self.available {
            mdp = mdp.with_available(available)?;
        }
        Ok(mdp)
    }

    pub fn from_mdp(mdp: &Mdp) -> Self {
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for x in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                for next in 0..mdp.n_states {
                    let p = mdp.p(x, a, next);
                    if p != 0.0 {
                        transitions.push(TransitionEntry { x, a, next, p });
                    }
                    let r = mdp.r(x, a, next);
                    if r != 0.0 {
                        rewards.push(RewardEntry { x, a, next, r });
                    }
                }
            }
        }
        let full = mdp.available.iter().all(|l| l.len() == mdp.n_actions);
        MdpFile {
            gamma: mdp.gamma,
            states: mdp.state_names.clone(),
            actions: mdp.action_names.clone(),
            transitions,
            rewards,
            available: (!full).then(|| mdp.available.clone()),
        }
    }
}

/// Stationary Markovian policy `π(a|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "policy table needs {} entries, got {}",
                n_states * n_actions,
                probs.len()
            )));
        }
        for x in 0..n_states {
            let row = &probs[x * n_actions..][..n_actions];
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Domain(format!("policy row {x} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Domain(format!("policy row {x} sums to {sum}")));
            }
        }
        Ok(Policy {
            n_states,
            n_actions,
            probs,
        })
    }

    /// Uniform over the actions available in each state.
    pub fn uniform(mdp: &Mdp) -> Self {
        let mut probs = vec![0.0; mdp.n_states * mdp.n_actions];
        for x in 0..mdp.n_states {
            let acts = mdp.actions(x);
            for &a in acts {
                probs[x * mdp.n_actions + a] = 1.0 / acts.len() as f64;
            }
        }
        Policy {
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            probs,
        }
    }

    /// Picks `actions[x]` in state `x`.
    pub fn deterministic(mdp: &Mdp, actions: &[usize]) -> Result<Self> {
        if actions.len() != mdp.n_states {
            return Err(Error::Dimension("one action per state required".into()));
        }
        let mut probs = vec![0.0; mdp.n_states * mdp.n_actions];
        for (x, &a) in actions.iter().enumerate() {
            if !mdp.is_available(x, a) && a < mdp.n_actions {
                return Err(Error::Domain(format!("action {a} is not available in state {x}")));
            }
            if a >= mdp.n_actions {
                return Err(Error::Dimension(format!("unknown action {a}")));
            }
            probs[x * mdp.n_actions + a] = 1.0;
        }
        Ok(Policy {
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            probs,
        })
    }

    /// Every deterministic policy of `mdp`, in lexicographic order of the
    /// per-state action choices, or `None` if there are more than `cap`.
    pub fn enumerate_deterministic(mdp: &Mdp, cap: usize) -> Option<Vec<Policy>> {
        let mut count: usize = 1;
        for x in 0..mdp.n_states {
            count = count.checked_mul(mdp.actions(x).len())?;
            if count > cap {
                return None;
            }
        }
        let mut out = Vec::with_capacity(count);
        let mut digits = vec![0usize; mdp.n_states];
        loop {
            let choice: Vec<usize> = (0..mdp.n_states).map(|x| mdp.actions(x)[digits[x]]).collect();
            out.push(Policy::deterministic(mdp, &choice).expect("available actions"));
            let mut x = mdp.n_states;
            loop {
                if x == 0 {
                    return Some(out);
                }
                x -= 1;
                digits[x] += 1;
                if digits[x] < mdp.actions(x).len() {
                    break;
                }
                digits[x] = 0;
            }
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x * self.n_actions + a]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Actions with positive probability in state `x`.
    pub fn support(&self, x: usize) -> Vec<usize> {
        (0..self.n_actions).filter(|&a| self.prob(x, a) > 0.0).collect()
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.n_states).all(|x| self.support(x).len() == 1)
    }

    /// Checks dimensions against `mdp` and that no mass sits on unavailable actions.
    pub fn check_compatible(&self, mdp: &Mdp) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.n_states, self.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                if self.prob(x, a) > 0.0 && !mdp.is_available(x, a) {
                    return Err(Error::Domain(format!(
                        "policy puts mass on unavailable action {a} in state {x}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// State-action value table `Q(x, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QTable {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn for_mdp(mdp: &Mdp) -> Self {
        Self::zeros(mdp.n_states, mdp.n_actions)
    }

    pub fn from_vec(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "Q-table needs {} entries, got {}",
                n_states * n_actions,
                values.len()
            )));
        }
        Ok(QTable {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, x: usize, a: usize) -> f64 {
        self.values[x * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, x: usize, a: usize, v: f64) {
        self.values[x * self.n_actions + a] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `max_{a available in x} Q(x, a)`.
    pub fn max_over(&self, mdp: &Mdp, x: usize) -> f64 {
        mdp.actions(x)
            .iter()
            .map(|&a| self.get(x, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `min_{a available in x} Q(x, a)`.
    pub fn min_over(&self, mdp: &Mdp, x: usize) -> f64 {
        mdp.actions(x)
            .iter()
            .map(|&a| self.get(x, a))
            .fold(f64::INFINITY, f64::min)
    }

    fn check_shape(&self, mdp: &Mdp) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(Error::Dimension(format!(
                "Q-table is {}x{}, MDP is {}x{}",
                self.n_states, self.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        Ok(())
    }
}

/// `(T^π Q)(x,a) = Σ_{x',a'} P(x'|x,a) π(a'|x') (r(x,a,x') + γ Q(x',a'))`.
pub fn bellman_policy_op(mdp: &Mdp, policy: &Policy, q: &QTable) -> Result<QTable> {
    q.check_shape(mdp)?;
    policy.check_compatible(mdp)?;
    let v = state_values(mdp, policy, q);
    Ok(one_step_backup(mdp, &v))
}

/// `(T Q)(x,a) = Σ_{x'} P(x'|x,a) (r(x,a,x') + γ max_{a'} Q(x',a'))`.
pub fn bellman_optimality_op(mdp: &Mdp, q: &QTable) -> Result<QTable> {
    q.check_shape(mdp)?;
    let v = optimal_values(mdp, q);
    Ok(one_step_backup(mdp, &v))
}

/// `Σ_{x'} P(x'|x,a) (r(x,a,x') + γ v(x'))` for every `(x, a)`.
pub fn one_step_backup(mdp: &Mdp, v: &[f64]) -> QTable {
    let mut out = QTable::for_mdp(mdp);
    for x in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let value = (0..mdp.n_states)
                .map(|next| mdp.p(x, a, next) * (mdp.r(x, a, next) + mdp.gamma * v[next]))
                .sum();
            out.set(x, a, value);
        }
    }
    out
}

/// `V(x) = Σ_a π(a|x) Q(x, a)`.
pub fn state_values(mdp: &Mdp, policy: &Policy, q: &QTable) -> Vec<f64> {
    (0..mdp.n_states)
        .map(|x| (0..mdp.n_actions).map(|a| policy.prob(x, a) * q.get(x, a)).sum())
        .collect()
}

/// `V(x) = max_{a available} Q(x, a)`.
pub fn optimal_values(mdp: &Mdp, q: &QTable) -> Vec<f64> {
    (0..mdp.n_states).map(|x| q.max_over(mdp, x)).collect()
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("tolerance must be positive, got {tol}")))
    }
}

/// Iterates `op` from `start` until the sup-norm step falls to `tol`.
pub(crate) fn iterate_q<F>(start: QTable, tol: f64, max_iter: usize, mut op: F) -> Result<FixedPoint<QTable>>
where
    F: FnMut(&QTable) -> Result<QTable>,
{
    let mut q = start;
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let next = op(&q)?;
        residual = next.sup_distance(&q);
        q = next;
        if residual <= tol {
            return Ok(FixedPoint {
                value: q,
                iterations: iter,
                residual,
                converged: true,
            });
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual,
    })
}

/// Policy evaluation by fixed-point iteration of [`bellman_policy_op`] from zero.
pub fn evaluate_policy(mdp: &Mdp, policy: &Policy, tol: f64, max_iter: usize) -> Result<FixedPoint<QTable>> {
    check_tol(tol)?;
    policy.check_compatible(mdp)?;
    iterate_q(QTable::for_mdp(mdp), tol, max_iter, |q| {
        bellman_policy_op(mdp, policy, q)
    })
}

/// Value iteration from zero; returns `Q*`.
pub fn value_iteration(mdp: &Mdp, tol: f64, max_iter: usize) -> Result<FixedPoint<QTable>> {
    check_tol(tol)?;
    iterate_q(QTable::for_mdp(mdp), tol, max_iter, |q| bellman_optimality_op(mdp, q))
}

/// `Q^π` by a direct linear solve of `(I − γ P_π) Q = r_π` over state-action pairs.
pub fn evaluate_policy_exact(mdp: &Mdp, policy: &Policy) -> Result<QTable> {
    policy.check_compatible(mdp)?;
    let (s, na) = (mdp.n_states, mdp.n_actions);
    let n = s * na;
    let mut m = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for x in 0..s {
        for a in 0..na {
            let row = x * na + a;
            m[row * n + row] += 1.0;
            for next in 0..s {
                let p = mdp.p(x, a, next);
                if p == 0.0 {
                    continue;
                }
                rhs[row] += p * mdp.r(x, a, next);
                for b in 0..na {
                    m[row * n + next * na + b] -= mdp.gamma * p * policy.prob(next, b);
                }
            }
        }
    }
    let values =
        solve_dense(n, &mut m, &mut rhs).ok_or_else(|| Error::Domain("singular policy-evaluation system".into()))?;
    QTable::from_vec(s, na, values)
}

/// Optimal V* computed at tight tolerance, for the balanced-MDP machinery.
pub fn optimal_state_values(mdp: &Mdp) -> Result<Vec<f64>> {
    let budget = iterations_for(mdp.gamma, 1e-12).max(DEFAULT_MAX_ITER);
    let q = value_iteration(mdp, 1e-12, budget)?;
    Ok(optimal_values(mdp, &q.value))
}

/// Iterations a γ-contraction needs to shrink a unit residual below `tol`, with slack.
pub(crate) fn iterations_for(gamma: f64, tol: f64) -> usize {
    if gamma <= 0.0 {
        return 2;
    }
    ((tol.ln() / gamma.ln()).ceil() as usize).saturating_mul(2) + 100
}

/// `A*(x) = {a : Q*(x,a) ≥ max_b Q*(x,b) − tie_tol}` over available actions.
pub fn optimal_action_sets(mdp: &Mdp, q_star: &QTable, tie_tol: f64) -> Vec<Vec<usize>> {
    (0..mdp.n_states)
        .map(|x| {
            let best = q_star.max_over(mdp, x);
            mdp.actions(x)
                .iter()
                .copied()
                .filter(|&a| q_star.get(x, a) >= best - tie_tol)
                .collect()
        })
        .collect()
}

/// Result of [`reduce_to_balanced`].
#[derive(Debug, Clone)]
pub struct BalancedReduction {
    pub mdp: Mdp,
    /// Original action indices kept in each state.
    pub kept: Vec<Vec<usize>>,
    pub removed: Vec<Vec<usize>>,
}

/// Restricts every state to its optimal actions.
pub fn reduce_to_balanced(mdp: &Mdp, tie_tol: f64) -> Result<BalancedReduction> {
    let budget = iterations_for(mdp.gamma, 1e-12).max(DEFAULT_MAX_ITER);
    let q_star = value_iteration(mdp, 1e-12, budget)?.value;
    let kept = optimal_action_sets(mdp, &q_star, tie_tol);
    let removed = (0..mdp.n_states)
        .map(|x| {
            mdp.actions(x)
                .iter()
                .copied()
                .filter(|a| !kept[x].contains(a))
                .collect()
        })
        .collect();
    let reduced = mdp.clone().with_available(kept.clone())?;
    Ok(BalancedReduction {
        mdp: reduced,
        kept,
        removed,
    })
}

/// True iff `max_{x,a,b} |Q*(x,a) − Q*(x,b)| ≤ tol` over available actions.
pub fn is_balanced(mdp: &Mdp, tol: f64) -> Result<bool> {
    let budget = iterations_for(mdp.gamma, 1e-12).max(DEFAULT_MAX_ITER);
    let q_star = value_iteration(mdp, 1e-12, budget)?.value;
    Ok((0..mdp.n_states).all(|x| q_star.max_over(mdp, x) - q_star.min_over(mdp, x) <= tol))
}

/// Checks that `v_star` is the optimal value of a balanced MDP: every
/// available action's one-step backup of `v_star` equals `v_star(x)` within `tol`.
pub fn check_balanced_with(mdp: &Mdp, v_star: &[f64], tol: f64) -> Result<()> {
    if v_star.len() != mdp.n_states {
        return Err(Error::Dimension("V* needs one entry per state".into()));
    }
    let q = one_step_backup(mdp, v_star);
    for x in 0..mdp.n_states {
        let acts = mdp.actions(x);
        for (i, &a) in acts.iter().enumerate() {
            for &b in &acts[i + 1..] {
                let gap = (q.get(x, a) - q.get(x, b)).abs();
                if gap > tol {
                    return Err(Error::NotBalanced {
                        state: x,
                        action_a: a,
                        action_b: b,
                        gap,
                    });
                }
            }
            let dev = (q.get(x, a) - v_star[x]).abs();
            if dev > tol {
                return Err(Error::Precondition(format!(
                    "supplied V* is not a fixed point: backup at ({x}, {a}) differs by {dev:e}"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_policy(mdp: &Mdp, rng: &mut ChaCha8Rng) -> Policy {
        let mut probs = vec![0.0; mdp.n_states() * mdp.n_actions()];
        for x in 0..mdp.n_states() {
            let w: Vec<f64> = (0..mdp.n_actions()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let t: f64 = w.iter().sum();
            for a in 0..mdp.n_actions() {
                probs[x * mdp.n_actions() + a] = w[a] / t;
            }
        }
        Policy::new(mdp.n_states(), mdp.n_actions(), probs).unwrap()
    }

    #[test]
    fn fig1_policy_op_from_zero() {
        let mdp = corpus::fig1();
        let pi = Policy::deterministic(&mdp, &[0, 0]).unwrap();
        let q = bellman_policy_op(&mdp, &pi, &QTable::for_mdp(&mdp)).unwrap();
        assert_abs_diff_eq!(q.get(0, 0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.get(1, 0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_discount_is_expected_reward() {
        let mdp = corpus::random_mdp(4, 3, 2, 0.5).with_gamma(0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pi = random_policy(&mdp, &mut rng);
        let q0 = QTable::from_vec(3, 2, (0..6).map(|i| i as f64).collect()).unwrap();
        let q = bellman_policy_op(&mdp, &pi, &q0).unwrap();
        for x in 0..3 {
            for a in 0..2 {
                let expected: f64 = (0..3).map(|n| mdp.p(x, a, n) * mdp.r(x, a, n)).sum();
                assert_abs_diff_eq!(q.get(x, a), expected, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn fixed_point_residual_and_contraction() {
        let mdp = corpus::random_mdp(7, 3, 2, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pi = random_policy(&mdp, &mut rng);
        let q = evaluate_policy(&mdp, &pi, 1e-10, DEFAULT_MAX_ITER).unwrap().value;
        let tq = bellman_policy_op(&mdp, &pi, &q).unwrap();
        assert!(tq.sup_distance(&q) <= 1e-10);
        for _ in 0..50 {
            let a = QTable::from_vec(3, 2, (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap();
            let b = QTable::from_vec(3, 2, (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap();
            let ta = bellman_policy_op(&mdp, &pi, &a).unwrap();
            let tb = bellman_policy_op(&mdp, &pi, &b).unwrap();
            assert!(ta.sup_distance(&tb) <= mdp.gamma() * a.sup_distance(&b) + 1e-12);
        }
    }

    #[test]
    fn evaluate_fig1_and_geometric_series() {
        let mdp = corpus::fig1();
        let pi = Policy::deterministic(&mdp, &[0, 0]).unwrap();
        let q = evaluate_policy(&mdp, &pi, 1e-12, DEFAULT_MAX_ITER).unwrap().value;
        assert_abs_diff_eq!(q.get(0, 0), 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(q.get(1, 0), 4.0, epsilon = 1e-10);

        let single = Mdp::new(1, 1, vec![1.0], vec![3.0], 0.9).unwrap();
        let pi = Policy::uniform(&single);
        let q = evaluate_policy(&single, &pi, 1e-12, 100_000).unwrap().value;
        assert_abs_diff_eq!(q.get(0, 0), 30.0, epsilon = 1e-9);
    }

    #[test]
    fn evaluate_matches_linear_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..5 {
            let mdp = corpus::random_mdp(100 + seed, 4, 3, 0.9);
            let pi = random_policy(&mdp, &mut rng);
            let it = evaluate_policy(&mdp, &pi, 1e-12, 100_000).unwrap().value;
            let exact = evaluate_policy_exact(&mdp, &pi).unwrap();
            assert!(it.sup_distance(&exact) <= 1e-8);
        }
    }

    #[test]
    fn non_convergence_reports_residual() {
        let mdp = corpus::random_mdp(3, 3, 2, 0.99);
        let err = evaluate_policy(&mdp, &Policy::uniform(&mdp), 1e-12, 3).unwrap_err();
        match err {
            Error::Convergence { iterations, residual } => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(evaluate_policy(&mdp, &Policy::uniform(&mdp), 0.0, 3).is_err());
    }

    #[test]
    fn value_iteration_fig1() {
        let mdp = corpus::fig1();
        let q = value_iteration(&mdp, 1e-12, DEFAULT_MAX_ITER).unwrap().value;
        for (x, v) in [(0, 2.0), (1, 4.0)] {
            for a in 0..2 {
                assert_abs_diff_eq!(q.get(x, a), v, epsilon = 1e-10);
            }
        }
        let sets = optimal_action_sets(&mdp, &q, DEFAULT_TIE_TOL);
        assert_eq!(sets, vec![vec![0, 1], vec![0, 1]]);
    }

    #[test]
    fn value_iteration_single_action_equals_evaluation() {
        let mdp = corpus::random_mdp(12, 4, 1, 0.7);
        let vi = value_iteration(&mdp, 1e-12, DEFAULT_MAX_ITER).unwrap().value;
        let ev = evaluate_policy(&mdp, &Policy::uniform(&mdp), 1e-12, DEFAULT_MAX_ITER)
            .unwrap()
            .value;
        assert!(vi.sup_distance(&ev) <= 1e-10);
    }

    #[test]
    fn optimal_dominates_sampled_policies() {
        let mdp = corpus::random_mdp(21, 3, 3, 0.8);
        let q_star = value_iteration(&mdp, 1e-12, DEFAULT_MAX_ITER).unwrap().value;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let pi = random_policy(&mdp, &mut rng);
            let q = evaluate_policy_exact(&mdp, &pi).unwrap();
            for (s, p) in q_star.as_slice().iter().zip(q.as_slice()) {
                assert!(s - p >= -1e-8);
            }
        }
    }

    #[test]
    fn action_sets_exclude_dominated() {
        // one state, action 1 strictly worse by 0.5
        let mdp = Mdp::new(1, 2, vec![1.0, 1.0], vec![1.0, 0.5], 0.5).unwrap();
        let q = value_iteration(&mdp, 1e-12, DEFAULT_MAX_ITER).unwrap().value;
        assert_eq!(optimal_action_sets(&mdp, &q, 0.1), vec![vec![0]]);
        assert_eq!(optimal_action_sets(&mdp, &q, 1.0), vec![vec![0, 1]]);

        let mdp = corpus::random_mdp(33, 4, 3, 0.9);
        let q = value_iteration(&mdp, 1e-12, DEFAULT_MAX_ITER).unwrap().value;
        let sets = optimal_action_sets(&mdp, &q, 0.0);
        for (x, set) in sets.iter().enumerate() {
            let argmax = (0..3).max_by(|&a, &b| q.get(x, a).total_cmp(&q.get(x, b))).unwrap();
            assert_eq!(set, &vec![argmax]);
        }
    }

    #[test]
    fn balanced_reduction() {
        let mdp = corpus::fig1();
        assert!(is_balanced(&mdp, 1e-6).unwrap());
        let red = reduce_to_balanced(&mdp, DEFAULT_TIE_TOL).unwrap();
        assert_eq!(red.mdp, mdp);
        assert!(red.removed.iter().all(|r| r.is_empty()));

        // bump r(x1, a1) by one: no longer balanced, a2 is dropped in x1
        let mut rewards = mdp.reward_table().to_vec();
        rewards[0] += 1.0;
        let bumped = mdp.clone().with_rewards(rewards).unwrap();
        assert!(!is_balanced(&bumped, 1e-6).unwrap());
        let red = reduce_to_balanced(&bumped, DEFAULT_TIE_TOL).unwrap();
        assert_eq!(red.kept[0], vec![0]);
        assert!(is_balanced(&red.mdp, 1e-6).unwrap());

        let single = corpus::random_mdp(5, 3, 1, 0.6);
        assert!(is_balanced(&single, 1e-12).unwrap());

        for seed in 0..10 {
            let m = corpus::random_mdp(seed, 4, 3, 0.85);
            let red = reduce_to_balanced(&m, DEFAULT_TIE_TOL).unwrap();
            assert!(is_balanced(&red.mdp, 1e-6).unwrap());
        }
    }

    #[test]
    fn balance_check_names_offending_pair() {
        let mdp = Mdp::new(1, 2, vec![1.0, 1.0], vec![1.0, 0.5], 0.5).unwrap();
        match check_balanced_with(&mdp, &[2.0], 1e-6).unwrap_err() {
            Error::NotBalanced {
                state,
                action_a,
                action_b,
                ..
            } => {
                assert_eq!((state, action_a, action_b), (0, 0, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_validation() {
        assert!(Mdp::new(1, 1, vec![0.9], vec![0.0], 0.5).is_err());
        assert!(Mdp::new(1, 1, vec![1.0], vec![0.0], 1.0).is_err());
        let m = Mdp::new(2, 1, vec![0.5 + 4e-7, 0.5, 0.0, 1.0], vec![0.0; 4], 0.5).unwrap();
        assert_abs_diff_eq!(m.p(0, 0, 0) + m.p(0, 0, 1), 1.0, epsilon = 1e-15);
        assert!(Mdp::new(2, 1, vec![0.5 + 2e-6, 0.5, 0.0, 1.0], vec![0.0; 4], 0.5).is_err());
        assert!(Mdp::new(2, 1, vec![1.5, -0.5, 0.0, 1.0], vec![0.0; 4], 0.5).is_err());
    }

    #[test]
    fn json_roundtrip_and_errors() {
        let mdp = corpus::fig1();
        let text = mdp.to_json_string();
        assert_eq!(Mdp::from_json_str(&text).unwrap(), mdp);

        let err = Mdp::from_json_str("{\n  \"gamma\": 0.5,\n  \"states\": [\"x\"]\n  \"actions\": []}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err:?}");

        let missing_row = r#"{"gamma": 0.5, "states": ["x"], "actions": ["a"], "transitions": []}"#;
        assert!(Mdp::from_json_str(missing_row).is_err());

        let reduced = reduce_to_balanced(
            &mdp.clone()
                .with_rewards({
                    let mut r = mdp.reward_table().to_vec();
                    r[0] += 1.0;
                    r
                })
                .unwrap(),
            DEFAULT_TIE_TOL,
        )
        .unwrap()
        .mdp;
        assert_eq!(Mdp::from_json_str(&reduced.to_json_string()).unwrap(), reduced);
    }

    #[test]
    fn deterministic_enumeration() {
        let mdp = corpus::fig1();
        let all = Policy::enumerate_deterministic(&mdp, 4096).unwrap();
        assert_eq!(all.len(), 4);
        assert!(all.iter().all(Policy::is_deterministic));
        assert!(Policy::enumerate_deterministic(&mdp, 3).is_none());
    }
}
