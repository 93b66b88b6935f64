//! Robust-MDP view of the diatomic values on the doubled state space.
//!
//! Every state `x` is split into a worst substate `x̲` (index `2x`) and a
//! best substate `x̄` (index `2x + 1`). Rewards and policies are lifted
//! substate-blind. For an α-coherent policy, `V1^π(x)` is the worst value of
//! `x̲` over the dichotomous uncertainty set `Υ_α` and `V2^π(x)` the best
//! value of `x̄`, both attained by one kernel assembled from permutation
//! kernels. This module checks that claim by brute force.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dbo::return_avars;
use crate::diatomic::{is_alpha_coherent, spe, DoubleQ};
use crate::dist::check_level;
use crate::linalg::solve_dense;
use crate::mdp::{iterations_for, Mdp, Policy};
use crate::{Error, FixedPoint, Result};

/// Default cap on `|X|` for permutation enumeration (`|𝑿| = 8`, 2520 permutations).
pub const DEFAULT_STATE_CAP: usize = 4;
/// Default cap on the number of candidate kernels in [`worst_best_case`].
pub const DEFAULT_CANDIDATE_CAP: usize = 2_000_000;
/// Tolerance for α-coherence and kernel membership checks.
pub const COHERENCE_TOL: f64 = 1e-8;

/// Index of the worst substate `x̲`.
#[inline]
pub fn worst(x: usize) -> usize {
    2 * x
}

/// Index of the best substate `x̄`.
#[inline]
pub fn best(x: usize) -> usize {
    2 * x + 1
}

/// Transition kernel `𝑷(s'|s, a)` on the doubled state space.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedKernel {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl AugmentedKernel {
    /// `probs` is indexed `(s, a, s')` over `2 n_states` augmented states.
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        let m = 2 * n_states;
        if probs.len() != m * n_actions * m {
            return Err(Error::Dimension(format!(
                "augmented kernel needs {} entries, got {}",
                m * n_actions * m,
                probs.len()
            )));
        }
        let kernel = AugmentedKernel {
            n_states,
            n_actions,
            probs,
        };
        for s in 0..m {
            for a in 0..n_actions {
                let row = kernel.row(s, a);
                if row.iter().any(|p| !p.is_finite() || *p < -1e-12) {
                    return Err(Error::Domain(format!("kernel row ({s}, {a}) has a negative entry")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Domain(format!("kernel row ({s}, {a}) sums to {sum}")));
                }
            }
        }
        Ok(kernel)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, next: usize) -> f64 {
        let m = 2 * self.n_states;
        self.probs[(s * self.n_actions + a) * m + next]
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let m = 2 * self.n_states;
        &self.probs[(s * self.n_actions + a) * m..][..m]
    }

    fn row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let m = 2 * self.n_states;
        &mut self.probs[(s * self.n_actions + a) * m..][..m]
    }

    /// Non-zero entries as `(s, a, s', p)`.
    pub fn entries(&self) -> Vec<(usize, usize, usize, f64)> {
        let m = 2 * self.n_states;
        let mut out = Vec::new();
        for s in 0..m {
            for a in 0..self.n_actions {
                for (next, &p) in self.row(s, a).iter().enumerate() {
                    if p != 0.0 {
                        out.push((s, a, next, p));
                    }
                }
            }
        }
        out
    }

    pub fn sup_distance(&self, other: &AugmentedKernel) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// `𝑷(x̲'|s, a) = αP(x'|x, a)` and `𝑷(x̄'|s, a) = (1 − α)P(x'|x, a)` for both substates.
pub fn risk_neutral_kernel(mdp: &Mdp, alpha: f64) -> Result<AugmentedKernel> {
    check_level(alpha)?;
    let (s, na) = (mdp.n_states(), mdp.n_actions());
    let mut kernel = AugmentedKernel {
        n_states: s,
        n_actions: na,
        probs: vec![0.0; 4 * s * s * na],
    };
    for x in 0..s {
        for a in 0..na {
            let row = neutral_row(mdp, alpha, x, a);
            kernel.row_mut(worst(x), a).copy_from_slice(&row);
            kernel.row_mut(best(x), a).copy_from_slice(&row);
        }
    }
    Ok(kernel)
}

fn neutral_row(mdp: &Mdp, alpha: f64, x: usize, a: usize) -> Vec<f64> {
    let mut row = vec![0.0; 2 * mdp.n_states()];
    for y in 0..mdp.n_states() {
        row[worst(y)] = alpha * mdp.p(x, a, y);
        row[best(y)] = (1.0 - alpha) * mdp.p(x, a, y);
    }
    row
}

/// Exchanges the roles of `x̲` and `x̄` everywhere (maps `Υ_α` onto `Υ_{1−α}`).
pub fn swap_substates(kernel: &AugmentedKernel) -> AugmentedKernel {
    let m = 2 * kernel.n_states;
    let flip = |s: usize| s ^ 1;
    let mut probs = vec![0.0; kernel.probs.len()];
    for s in 0..m {
        for a in 0..kernel.n_actions {
            for next in 0..m {
                probs[(flip(s) * kernel.n_actions + a) * m + flip(next)] = kernel.p(s, a, next);
            }
        }
    }
    AugmentedKernel {
        n_states: kernel.n_states,
        n_actions: kernel.n_actions,
        probs,
    }
}

/// Which defining constraint of `Υ_α` is violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Constraint {
    /// `α𝑷(x̲'|x̲,a) + (1−α)𝑷(x̲'|x̄,a) = αP(x'|x,a)`.
    WorstMarginal,
    /// `α𝑷(x̄'|x̲,a) + (1−α)𝑷(x̄'|x̄,a) = (1−α)P(x'|x,a)`.
    BestMarginal,
    /// `𝑷(x̲'|x̲,a) ≥ α/(1−α) 𝑷(x̄'|x̲,a)`.
    Priority,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub x: usize,
    pub a: usize,
    pub next: usize,
    pub amount: f64,
}

/// Every constraint of `Υ_α` violated by more than `tol`.
pub fn uncertainty_violations(mdp: &Mdp, alpha: f64, kernel: &AugmentedKernel, tol: f64) -> Result<Vec<Violation>> {
    check_level(alpha)?;
    if kernel.n_states != mdp.n_states() || kernel.n_actions != mdp.n_actions() {
        return Err(Error::Dimension("kernel and MDP differ in shape".into()));
    }
    let mut out = Vec::new();
    for x in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            for y in 0..mdp.n_states() {
                let p = mdp.p(x, a, y);
                let k = |s: usize, t: usize| kernel.p(s, a, t);
                let checks = [
                    (
                        Constraint::WorstMarginal,
                        (alpha * k(worst(x), worst(y)) + (1.0 - alpha) * k(best(x), worst(y)) - alpha * p).abs(),
                    ),
                    (
                        Constraint::BestMarginal,
                        (alpha * k(worst(x), best(y)) + (1.0 - alpha) * k(best(x), best(y)) - (1.0 - alpha) * p).abs(),
                    ),
                    (
                        Constraint::Priority,
                        alpha / (1.0 - alpha) * k(worst(x), best(y)) - k(worst(x), worst(y)),
                    ),
                ];
                for (constraint, amount) in checks {
                    if amount > tol {
                        out.push(Violation {
                            constraint,
                            x,
                            a,
                            next: y,
                            amount,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Membership in the dichotomous uncertainty set `Υ_α`, within `tol`.
pub fn in_uncertainty_set(mdp: &Mdp, alpha: f64, kernel: &AugmentedKernel, tol: f64) -> bool {
    matches!(uncertainty_violations(mdp, alpha, kernel, tol), Ok(v) if v.is_empty())
}

/// A bijection `σ: 𝑿 → {0, …, |𝑿| − 1}` with `σ(x̲) < σ(x̄)` for every `x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ConstrainedPermutation {
    /// Augmented states listed by increasing rank.
    sequence: Vec<usize>,
}

impl ConstrainedPermutation {
    /// From the augmented states listed by increasing rank.
    pub fn from_sequence(sequence: Vec<usize>) -> Result<Self> {
        let m = sequence.len();
        if m == 0 || !m.is_multiple_of(2) {
            return Err(Error::Dimension("a permutation of 𝑿 has even positive length".into()));
        }
        let mut rank = vec![usize::MAX; m];
        for (i, &s) in sequence.iter().enumerate() {
            if s >= m || rank[s] != usize::MAX {
                return Err(Error::Domain(format!("{sequence:?} is not a permutation")));
            }
            rank[s] = i;
        }
        if (0..m / 2).any(|x| rank[worst(x)] > rank[best(x)]) {
            return Err(Error::Domain(format!("{sequence:?} ranks some x̄ before x̲")));
        }
        Ok(ConstrainedPermutation { sequence })
    }

    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }

    /// `σ(s)`, 0-based.
    pub fn rank(&self, s: usize) -> usize {
        self.sequence.iter().position(|&t| t == s).expect("state in range")
    }
}

/// All of `𝔖(𝑿)` in lexicographic order of their sequences. There are
/// `(2n)!/2^n` of them.
pub fn enumerate_constrained_permutations(n_states: usize) -> Result<Vec<ConstrainedPermutation>> {
    enumerate_with_cap(n_states, DEFAULT_STATE_CAP)
}

/// As [`enumerate_constrained_permutations`] with an explicit state cap.
pub fn enumerate_with_cap(n_states: usize, cap: usize) -> Result<Vec<ConstrainedPermutation>> {
    if n_states == 0 {
        return Err(Error::Dimension("need at least one state".into()));
    }
    if n_states > cap {
        return Err(Error::Resource(format!(
            "enumerating constrained permutations of {n_states} states exceeds the cap of {cap}"
        )));
    }
    fn go(m: usize, used: &mut Vec<bool>, seq: &mut Vec<usize>, out: &mut Vec<ConstrainedPermutation>) {
        if seq.len() == m {
            out.push(ConstrainedPermutation { sequence: seq.clone() });
            return;
        }
        for s in 0..m {
            if used[s] || (s % 2 == 1 && !used[s - 1]) {
                continue;
            }
            used[s] = true;
            seq.push(s);
            go(m, used, seq, out);
            seq.pop();
            used[s] = false;
        }
    }
    let m = 2 * n_states;
    let mut out = Vec::new();
    go(m, &mut vec![false; m], &mut Vec::with_capacity(m), &mut out);
    Ok(out)
}

/// The worst-substate and best-substate rows of `𝑷_σ` at `(x, a)`.
pub fn permutation_rows(
    mdp: &Mdp,
    alpha: f64,
    x: usize,
    a: usize,
    sigma: &ConstrainedPermutation,
) -> (Vec<f64>, Vec<f64>) {
    let m = 2 * mdp.n_states();
    let mut w = vec![0.0; m];
    let mut b = vec![0.0; m];
    let mut cum = 0.0;
    for &s in &sigma.sequence {
        let p = mdp.p(x, a, s / 2);
        let mass = if s % 2 == 0 { alpha * p } else { (1.0 - alpha) * p };
        w[s] = mass.min(alpha - cum).max(0.0) / alpha;
        cum += mass;
        b[s] = mass.min(cum - alpha).max(0.0) / (1.0 - alpha);
    }
    (w, b)
}

/// `𝑷_σ` with the same `σ` at every `(x, a)`.
pub fn permutation_kernel(mdp: &Mdp, alpha: f64, sigma: &ConstrainedPermutation) -> Result<AugmentedKernel> {
    check_level(alpha)?;
    if sigma.sequence.len() != 2 * mdp.n_states() {
        return Err(Error::Dimension("permutation and MDP differ in size".into()));
    }
    let mut kernel = risk_neutral_kernel(mdp, alpha)?;
    for x in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let (w, b) = permutation_rows(mdp, alpha, x, a, sigma);
            kernel.row_mut(worst(x), a).copy_from_slice(&w);
            kernel.row_mut(best(x), a).copy_from_slice(&b);
        }
    }
    Ok(kernel)
}

/// The permutation sorting the particles `r(x,a,x') + γ V1(x')` (at `x̲'`) and
/// `r(x,a,x') + γ V2(x')` (at `x̄'`) in non-decreasing order; ties keep index order.
pub fn sorting_permutation(mdp: &Mdp, x: usize, a: usize, v1: &[f64], v2: &[f64]) -> ConstrainedPermutation {
    let m = 2 * mdp.n_states();
    let value = |s: usize| {
        let y = s / 2;
        let base = mdp.r(x, a, y);
        if s.is_multiple_of(2) {
            base + mdp.gamma() * v1[y]
        } else {
            base + mdp.gamma() * v2[y].max(v1[y])
        }
    };
    let mut sequence: Vec<usize> = (0..m).collect();
    sequence.sort_by(|&s, &t| value(s).total_cmp(&value(t)));
    ConstrainedPermutation { sequence }
}

/// The kernel `𝑷⋆`: sorting-permutation rows of the fixed point on the
/// policy support, risk-neutral rows elsewhere.
pub fn star_kernel(mdp: &Mdp, policy: &Policy, fixed: &DoubleQ) -> Result<AugmentedKernel> {
    let alpha = fixed.alpha();
    let (v1, v2) = fixed.state_values(policy);
    let mut kernel = risk_neutral_kernel(mdp, alpha)?;
    for x in 0..mdp.n_states() {
        for a in policy.support(x) {
            let sigma = sorting_permutation(mdp, x, a, &v1, &v2);
            let (w, b) = permutation_rows(mdp, alpha, x, a, &sigma);
            kernel.row_mut(worst(x), a).copy_from_slice(&w);
            kernel.row_mut(best(x), a).copy_from_slice(&b);
        }
    }
    Ok(kernel)
}

/// Policy evaluation over the augmented states by fixed-point iteration.
pub fn augmented_policy_eval(
    mdp: &Mdp,
    policy: &Policy,
    kernel: &AugmentedKernel,
    tol: f64,
) -> Result<FixedPoint<Vec<f64>>> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    policy.check_compatible(mdp)?;
    if kernel.n_states != mdp.n_states() || kernel.n_actions != mdp.n_actions() {
        return Err(Error::Dimension("kernel and MDP differ in shape".into()));
    }
    let m = 2 * mdp.n_states();
    let max_iter = iterations_for(mdp.gamma(), tol).max(1_000);
    let mut v = vec![0.0; m];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let next: Vec<f64> = (0..m)
            .map(|s| {
                let x = s / 2;
                let mut acc = 0.0;
                for a in 0..mdp.n_actions() {
                    let pi = policy.prob(x, a);
                    if pi == 0.0 {
                        continue;
                    }
                    for (t, &k) in kernel.row(s, a).iter().enumerate() {
                        if k != 0.0 {
                            acc += pi * k * (mdp.r(x, a, t / 2) + mdp.gamma() * v[t]);
                        }
                    }
                }
                acc
            })
            .collect();
        residual = next.iter().zip(&v).fold(0.0f64, |r, (a, b)| r.max((a - b).abs()));
        v = next;
        if residual <= tol {
            return Ok(FixedPoint {
                value: v,
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

/// Result of [`worst_best_case`].
#[derive(Debug, Clone)]
pub struct WorstBest {
    /// `min` over candidates of `V(x̲)`.
    pub worst: Vec<f64>,
    /// `max` over candidates of `V(x̄)`.
    pub best: Vec<f64>,
    /// `(V1^π, V2^π)` from SPE.
    pub spe_v1: Vec<f64>,
    pub spe_v2: Vec<f64>,
    /// `max |worst − V1^π|, |best − V2^π|`.
    pub max_deviation: f64,
    /// First candidate (in enumeration order) attaining every extremum.
    pub kernel: AugmentedKernel,
    /// Number of distinct candidate kernels attaining every extremum.
    pub optimal_kernels: usize,
    pub candidates: usize,
}

impl WorstBest {
    pub fn has_ties(&self) -> bool {
        self.optimal_kernels > 1
    }
}

type RowPair = (Vec<f64>, Vec<f64>);

fn distinct_row_pairs(mdp: &Mdp, alpha: f64, x: usize, a: usize, perms: &[ConstrainedPermutation]) -> Vec<RowPair> {
    let mut out: Vec<RowPair> = Vec::new();
    let close = |u: &[f64], v: &[f64]| u.iter().zip(v).all(|(p, q)| (p - q).abs() <= 1e-14);
    for sigma in perms {
        let (w, b) = permutation_rows(mdp, alpha, x, a, sigma);
        if !out.iter().any(|(w0, b0)| close(w0, &w) && close(b0, &b)) {
            out.push((w, b));
        }
    }
    out
}

/// Brute-force worst and best values over kernels assembled from
/// permutation rows, one permutation per supported `(x, a)`.
pub fn worst_best_case(mdp: &Mdp, policy: &Policy, alpha: f64) -> Result<WorstBest> {
    worst_best_case_with_cap(mdp, policy, alpha, DEFAULT_CANDIDATE_CAP)
}

pub fn worst_best_case_with_cap(mdp: &Mdp, policy: &Policy, alpha: f64, candidate_cap: usize) -> Result<WorstBest> {
    check_level(alpha)?;
    policy.check_compatible(mdp)?;
    let s = mdp.n_states();
    let m = 2 * s;
    let fixed = spe(mdp, policy, alpha, 1e-13, iterations_for(mdp.gamma(), 1e-13))?.value;
    if !is_alpha_coherent(mdp, policy, &fixed, COHERENCE_TOL) {
        return Err(Error::Precondition("policy is not α-coherent".into()));
    }
    let (spe_v1, spe_v2) = fixed.state_values(policy);
    let perms = enumerate_constrained_permutations(s)?;

    let support: Vec<(usize, usize)> = (0..s)
        .flat_map(|x| policy.support(x).into_iter().map(move |a| (x, a)))
        .collect();
    let choices: Vec<Vec<RowPair>> = support
        .iter()
        .map(|&(x, a)| distinct_row_pairs(mdp, alpha, x, a, &perms))
        .collect();
    let mut candidates: usize = 1;
    for c in &choices {
        candidates = candidates
            .checked_mul(c.len())
            .filter(|&n| n <= candidate_cap)
            .ok_or_else(|| Error::Resource(format!("more than {candidate_cap} candidate kernels")))?;
    }

    let assemble = |index: usize| -> Vec<usize> {
        let mut digits = vec![0; choices.len()];
        let mut rest = index;
        for (d, c) in digits.iter_mut().zip(&choices).rev() {
            *d = rest % c.len();
            rest /= c.len();
        }
        digits
    };
    let evaluate = |index: usize| -> Vec<f64> {
        let digits = assemble(index);
        let mut mat = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            mat[i * m + i] = 1.0;
        }
        for (k, &(x, a)) in support.iter().enumerate() {
            let pi = policy.prob(x, a);
            let (w, b) = &choices[k][digits[k]];
            for (sub, row) in [(worst(x), w), (best(x), b)] {
                for (t, &p) in row.iter().enumerate() {
                    if p != 0.0 {
                        mat[sub * m + t] -= mdp.gamma() * pi * p;
                        rhs[sub] += pi * p * mdp.r(x, a, t / 2);
                    }
                }
            }
        }
        solve_dense(m, &mut mat, &mut rhs).expect("I − γP is invertible for γ < 1")
    };

    let values: Vec<Vec<f64>> = (0..candidates).into_par_iter().map(evaluate).collect();
    let mut worst_v = vec![f64::INFINITY; s];
    let mut best_v = vec![f64::NEG_INFINITY; s];
    for v in &values {
        for x in 0..s {
            worst_v[x] = worst_v[x].min(v[worst(x)]);
            best_v[x] = best_v[x].max(v[best(x)]);
        }
    }
    let attains = |v: &Vec<f64>| {
        (0..s).all(|x| {
            let tol = 1e-9 * (1.0 + worst_v[x].abs().max(best_v[x].abs()));
            v[worst(x)] <= worst_v[x] + tol && v[best(x)] >= best_v[x] - tol
        })
    };
    let optimal: Vec<usize> = (0..candidates).filter(|&i| attains(&values[i])).collect();
    let Some(&first) = optimal.first() else {
        return Err(Error::PropertyFailure(
            "worst and best values are not attained by a common kernel".into(),
        ));
    };

    let mut kernel = risk_neutral_kernel(mdp, alpha)?;
    for (k, (&(x, a), d)) in support.iter().zip(assemble(first)).enumerate() {
        let (w, b) = &choices[k][d];
        kernel.row_mut(worst(x), a).copy_from_slice(w);
        kernel.row_mut(best(x), a).copy_from_slice(b);
    }
    let max_deviation = (0..s)
        .map(|x| (worst_v[x] - spe_v1[x]).abs().max((best_v[x] - spe_v2[x]).abs()))
        .fold(0.0, f64::max);
    Ok(WorstBest {
        worst: worst_v,
        best: best_v,
        spe_v1,
        spe_v2,
        max_deviation,
        kernel,
        optimal_kernels: optimal.len(),
        candidates,
    })
}

/// One supported pair of [`bavar_vs_avar_gap`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapRow {
    pub x: usize,
    pub a: usize,
    pub v1: f64,
    pub v2: f64,
    /// Upper bound on the left AVaR of the `k`-step return.
    pub avar_left: f64,
    /// Lower bound on the right AVaR of the `k`-step return.
    pub avar_right: f64,
    /// `V1 − AVaR_left`; at least `−ε_k`.
    pub left_gap: f64,
    /// `AVaR_right − V2`; at least `−ε_k`.
    pub right_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub alpha: f64,
    pub k: usize,
    /// `γ^k max|r| / (1 − γ)`.
    pub epsilon: f64,
    pub rows: Vec<GapRow>,
    pub compressed: bool,
    /// Compression grid of the final check (0 for exact fission).
    pub bins: usize,
}

/// Finest compression grid tried by [`bavar_vs_avar_gap`].
pub const MAX_GAP_BINS: usize = 1 << 17;

/// Compares the BAVaRs with the AVaRs of the `k`-step returns on the policy
/// support: `AVaR_left ≤ V1 + ε_k` and `V2 ≤ AVaR_right + ε_k`. `bins` is the
/// fission compression grid (0 for exact fission). A compressed left AVaR
/// only bounds the exact one from above (and the right one from below), so a
/// failed compressed check is repeated on an 8 times finer grid, up to
/// [`MAX_GAP_BINS`].
pub fn bavar_vs_avar_gap(mdp: &Mdp, policy: &Policy, alpha: f64, k: usize, bins: usize) -> Result<GapReport> {
    check_level(alpha)?;
    let fixed = spe(mdp, policy, alpha, 1e-13, iterations_for(mdp.gamma(), 1e-13))?.value;
    if !is_alpha_coherent(mdp, policy, &fixed, COHERENCE_TOL) {
        return Err(Error::Precondition("policy is not α-coherent".into()));
    }
    let mut bins = bins;
    loop {
        let ra = return_avars(mdp, policy, alpha, k, bins)?;
        let mut rows = Vec::new();
        let mut failure = None;
        for x in 0..mdp.n_states() {
            for a in policy.support(x) {
                let (v1, v2) = (fixed.q1(x, a), fixed.q2(x, a));
                let row = GapRow {
                    x,
                    a,
                    v1,
                    v2,
                    avar_left: ra.left.get(x, a),
                    avar_right: ra.right.get(x, a),
                    left_gap: v1 - ra.left.get(x, a),
                    right_gap: ra.right.get(x, a) - v2,
                };
                if failure.is_none() && (row.left_gap < -ra.tail_bound || row.right_gap < -ra.tail_bound) {
                    failure = Some(row);
                }
                rows.push(row);
            }
        }
        match failure {
            None => {
                return Ok(GapReport {
                    alpha,
                    k,
                    epsilon: ra.tail_bound,
                    rows,
                    compressed: ra.compressed,
                    bins,
                })
            }
            Some(_) if ra.compressed && bins * 8 <= MAX_GAP_BINS => bins *= 8,
            Some(row) => {
                return Err(Error::PropertyFailure(format!(
                    "BAVaR bracketing fails at ({}, {}): gaps {:e}, {:e} below −{:e}{}",
                    row.x,
                    row.a,
                    row.left_gap,
                    row.right_gap,
                    ra.tail_bound,
                    if ra.compressed {
                        format!(" with {bins} bins")
                    } else {
                        String::new()
                    }
                )))
            }
        }
    }
}

/// Largest violation of each coherence axiom over the trials.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct AxiomViolations {
    pub translation: f64,
    pub subadditivity: f64,
    pub homogeneity: f64,
    pub monotonicity: f64,
}

impl AxiomViolations {
    fn max(&self) -> f64 {
        self.translation
            .max(self.subadditivity)
            .max(self.homogeneity)
            .max(self.monotonicity)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoherenceReport {
    pub x: usize,
    pub trials: usize,
    /// `ρ2(r) = (1 − γ) V2^π(x; −r)`.
    pub right: AxiomViolations,
    /// `ρ1(r) = −(1 − γ) V1^π(x; r)`.
    pub left: AxiomViolations,
}

/// Tolerance of [`coherence_axioms_check`].
pub const AXIOM_TOL: f64 = 1e-8;

/// Checks that `ρ2(r) = (1 − γ)V2^π(x; −r)` and `ρ1(r) = −(1 − γ)V1^π(x; r)`,
/// as functions of the reward table `r`, are coherent risk measures:
/// `ρ(r + β) = ρ(r) − β`, `ρ(r1 + r2) ≤ ρ(r1) + ρ(r2)`, `ρ(βr) = βρ(r)` for
/// `β ≥ 0`, and `r1 ≤ r2 ⇒ ρ(r1) ≥ ρ(r2)`. Reward tables are the MDP's
/// rewards plus uniform noise on `[−2, 2]`; SPE is rerun for every table.
pub fn coherence_axioms_check(
    mdp: &Mdp,
    policy: &Policy,
    alpha: f64,
    x: usize,
    n_trials: usize,
    seed: u64,
) -> Result<CoherenceReport> {
    check_level(alpha)?;
    if x >= mdp.n_states() {
        return Err(Error::Dimension(format!("state {x} out of range")));
    }
    let budget = iterations_for(mdp.gamma(), 1e-13);
    let fixed = spe(mdp, policy, alpha, 1e-13, budget)?.value;
    if !is_alpha_coherent(mdp, policy, &fixed, COHERENCE_TOL) {
        return Err(Error::Precondition("policy is not α-coherent".into()));
    }
    let scale = 1.0 - mdp.gamma();
    let values = |r: &[f64]| -> Result<(f64, f64)> {
        let m = mdp.clone().with_rewards(r.to_vec())?;
        let neg = mdp.clone().with_rewards(r.iter().map(|v| -v).collect())?;
        let (v1, _) = spe(&m, policy, alpha, 1e-13, budget)?.value.state_values(policy);
        let (_, v2) = spe(&neg, policy, alpha, 1e-13, budget)?.value.state_values(policy);
        Ok((-scale * v1[x], scale * v2[x]))
    };
    let base_r = mdp.reward_table();
    let n = base_r.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|_| rng.gen_range(lo..hi)).collect() };
    let mut left = AxiomViolations::default();
    let mut right = AxiomViolations::default();
    let add = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(a, b)| a + b).collect() };
    for _ in 0..n_trials {
        let r = add(base_r, &draw(-2.0, 2.0));
        let r2 = add(base_r, &draw(-2.0, 2.0));
        let bump = draw(0.0, 1.0);
        let shift = draw(-2.0, 2.0)[0];
        let factor = draw(0.0, 3.0)[0];

        let base = values(&r)?;
        let shifted = values(&r.iter().map(|v| v + shift).collect::<Vec<_>>())?;
        let other = values(&r2)?;
        let sum = values(&add(&r, &r2))?;
        let scaled = values(&r.iter().map(|v| factor * v).collect::<Vec<_>>())?;
        let larger = values(&add(&r, &bump))?;
        for (viol, pick) in [
            (&mut left, (|p: (f64, f64)| p.0) as fn((f64, f64)) -> f64),
            (&mut right, |p: (f64, f64)| p.1),
        ] {
            let rho = pick(base);
            viol.translation = viol.translation.max((pick(shifted) - (rho - shift)).abs());
            viol.subadditivity = viol.subadditivity.max(pick(sum) - (rho + pick(other)));
            viol.homogeneity = viol.homogeneity.max((pick(scaled) - factor * rho).abs());
            viol.monotonicity = viol.monotonicity.max(pick(larger) - rho);
        }
    }
    let report = CoherenceReport {
        x,
        trials: n_trials,
        right,
        left,
    };
    let worst = report.left.max().max(report.right.max());
    if worst > AXIOM_TOL {
        return Err(Error::PropertyFailure(format!(
            "coherence axiom violated by {worst:e}: {report:?}"
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::mdp::evaluate_policy;
    use approx::assert_abs_diff_eq;

    fn factorial(n: usize) -> usize {
        (1..=n).product()
    }

    #[test]
    fn permutation_counts() {
        for n in 1..=4 {
            let perms = enumerate_constrained_permutations(n).unwrap();
            assert_eq!(perms.len(), factorial(2 * n) >> n);
            let mut seen = std::collections::HashSet::new();
            for p in &perms {
                assert!(seen.insert(p.sequence().to_vec()));
                ConstrainedPermutation::from_sequence(p.sequence().to_vec()).unwrap();
            }
        }
        assert!(matches!(enumerate_constrained_permutations(5), Err(Error::Resource(_))));
        assert!(ConstrainedPermutation::from_sequence(vec![1, 0]).is_err());
    }

    #[test]
    fn example2_star_kernel() {
        let mdp = corpus::fig1();
        let pi = Policy::deterministic(&mdp, &[1, 1]).unwrap();
        let fixed = spe(&mdp, &pi, 0.5, 1e-13, 1_000).unwrap().value;
        let k = star_kernel(&mdp, &pi, &fixed).unwrap();
        let (x1, x2) = (0, 1);
        let half = [
            (worst(x1), worst(x1)),
            (worst(x1), best(x1)),
            (best(x1), worst(x2)),
            (best(x1), best(x2)),
            (worst(x2), worst(x1)),
            (worst(x2), best(x1)),
            (best(x2), worst(x2)),
            (best(x2), best(x2)),
        ];
        for (s, t) in half {
            assert_eq!(k.p(s, 1, t), 0.5, "({s}, {t})");
        }
        assert!(in_uncertainty_set(&mdp, 0.5, &k, 1e-12));
        let v = augmented_policy_eval(&mdp, &pi, &k, 1e-13).unwrap().value;
        for (got, want) in v.iter().zip([1.5, 2.5, 3.5, 4.5]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn permutation_kernels_are_members() {
        for seed in 0..5 {
            let mdp = corpus::random_mdp(seed, 2, 2, 0.6);
            for alpha in [0.2, 0.5, 0.8] {
                for sigma in enumerate_constrained_permutations(2).unwrap() {
                    let k = permutation_kernel(&mdp, alpha, &sigma).unwrap();
                    AugmentedKernel::new(2, 2, k.probs.clone()).unwrap();
                    assert!(uncertainty_violations(&mdp, alpha, &k, 1e-12).unwrap().is_empty());
                    assert!(in_uncertainty_set(&mdp, 1.0 - alpha, &swap_substates(&k), 1e-12));
                }
            }
        }
    }

    #[test]
    fn deterministic_transitions_give_deterministic_rows() {
        let mdp = corpus::fig1();
        for sigma in enumerate_constrained_permutations(2).unwrap() {
            let k = permutation_kernel(&mdp, 0.5, &sigma).unwrap();
            // a1 self-loops: x̲1 → x̲1 and x̄1 → x̄1 with certainty
            assert_eq!(k.p(worst(0), 0, worst(0)), 1.0);
            assert_eq!(k.p(best(0), 0, best(0)), 1.0);
        }
    }

    #[test]
    fn risk_neutral_and_violations() {
        let mdp = corpus::fig1();
        let k = risk_neutral_kernel(&mdp, 0.3).unwrap();
        assert!(in_uncertainty_set(&mdp, 0.3, &k, 1e-12));
        let pi = Policy::uniform(&mdp);
        let v = augmented_policy_eval(&mdp, &pi, &k, 1e-12).unwrap().value;
        let q = evaluate_policy(&mdp, &pi, 1e-12, 10_000).unwrap().value;
        for x in 0..2 {
            let vx = 0.5 * (q.get(x, 0) + q.get(x, 1));
            assert_abs_diff_eq!(v[worst(x)], vx, epsilon = 1e-9);
            assert_abs_diff_eq!(v[best(x)], vx, epsilon = 1e-9);
        }

        let mut bad = k.clone();
        bad.row_mut(worst(0), 1)[worst(0)] += 0.1;
        bad.row_mut(worst(0), 1)[best(0)] -= 0.1;
        let viol = uncertainty_violations(&mdp, 0.3, &bad, 1e-9).unwrap();
        assert!(viol
            .iter()
            .any(|v| v.constraint == Constraint::WorstMarginal && (v.x, v.a, v.next) == (0, 1, 0)));
        assert!(!in_uncertainty_set(&mdp, 0.3, &bad, 1e-9));
    }

    #[test]
    fn worst_best_matches_spe() {
        let mdp = corpus::fig1();
        let pi = Policy::deterministic(&mdp, &[1, 1]).unwrap();
        let wb = worst_best_case(&mdp, &pi, 0.5).unwrap();
        for (got, want) in wb.worst.iter().chain(&wb.best).zip([1.5, 3.5, 2.5, 4.5]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
        assert!(wb.max_deviation <= 1e-9);

        let pi = Policy::deterministic(&mdp, &[0, 0]).unwrap();
        let wb = worst_best_case(&mdp, &pi, 0.5).unwrap();
        for (got, want) in wb.worst.iter().chain(&wb.best).zip([2.0, 4.0, 2.0, 4.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn worst_best_rejects_incoherent_policy() {
        let mdp = corpus::fig1();
        let pi = Policy::uniform(&mdp);
        assert!(matches!(worst_best_case(&mdp, &pi, 0.5), Err(Error::Precondition(_))));
    }

    #[test]
    fn random_member_averaging() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = corpus::random_mdp(5, 3, 2, 0.7);
        let perms = enumerate_constrained_permutations(3).unwrap();
        let pi = Policy::uniform(&mdp);
        let q = evaluate_policy(&mdp, &pi, 1e-12, 10_000).unwrap().value;
        for _ in 0..10 {
            // convex combinations of permutation kernels stay in Υ_α
            let (i, j) = (rng.gen_range(0..perms.len()), rng.gen_range(0..perms.len()));
            let lam = rng.gen_range(0.0..1.0);
            let ki = permutation_kernel(&mdp, 0.4, &perms[i]).unwrap();
            let kj = permutation_kernel(&mdp, 0.4, &perms[j]).unwrap();
            let probs = ki
                .probs
                .iter()
                .zip(&kj.probs)
                .map(|(a, b)| lam * a + (1.0 - lam) * b)
                .collect();
            let k = AugmentedKernel::new(3, 2, probs).unwrap();
            assert!(in_uncertainty_set(&mdp, 0.4, &k, 1e-12));
            for x in 0..3 {
                for a in 0..2 {
                    // implied symmetric inequality
                    for y in 0..3 {
                        assert!(k.p(best(x), a, best(y)) >= 0.6 / 0.4 * k.p(best(x), a, worst(y)) - 1e-12);
                    }
                }
            }
            let v = augmented_policy_eval(&mdp, &pi, &k, 1e-12).unwrap().value;
            for x in 0..3 {
                let vx = 0.5 * (q.get(x, 0) + q.get(x, 1));
                assert_abs_diff_eq!(0.4 * v[worst(x)] + 0.6 * v[best(x)], vx, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn gap_report_fig1() {
        let mdp = corpus::fig1();
        let pi = Policy::deterministic(&mdp, &[0, 0]).unwrap();
        let report = bavar_vs_avar_gap(&mdp, &pi, 0.5, 30, 0).unwrap();
        for row in &report.rows {
            assert!(row.left_gap.abs() <= report.epsilon && row.right_gap.abs() <= report.epsilon);
        }
    }

    #[test]
    fn gap_report_refines_tight_case() {
        // exact left AVaR at (x1, a2) after k steps is 1.5 − 3·2^−k, within ε_k of V1
        let mdp = corpus::fig1();
        let pi = Policy::deterministic(&mdp, &[1, 1]).unwrap();
        let report = bavar_vs_avar_gap(&mdp, &pi, 0.5, 30, 1 << 10).unwrap();
        assert!(report.compressed);
        assert!(report.bins > 1 << 10);
        assert_eq!(report.rows.len(), 2);
    }

    #[test]
    fn coherence_fig1() {
        let mdp = corpus::fig1();
        let pi = Policy::deterministic(&mdp, &[1, 1]).unwrap();
        let report = coherence_axioms_check(&mdp, &pi, 0.5, 0, 5, 7).unwrap();
        assert_eq!(report.trials, 5);
    }
}
