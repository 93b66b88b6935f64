//! The diatomic Bellman operator and sorted policy evaluation (SPE).
//!
//! A pair `𝒬 = (Q1, Q2)` stands for the distribution function
//! `(x, a) ↦ α δ_{Q1(x,a)} + (1 − α) δ_{Q2(x,a)}`. Pushing it through the
//! distributional Bellman operator gives a mixture of `2|X||A|` Dirac masses
//! per pair, and projecting back in W2 keeps its left and right AVaRs.

use rayon::prelude::*;

use crate::dbo::DistFunction;
use crate::dist::{check_level, sort_and_avar_pair, Atom, Diatomic};
use crate::mdp::{Mdp, Policy, QTable};
use crate::{Error, FixedPoint, Result};

/// The left/right value pair at risk level `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleQ {
    alpha: f64,
    q1: QTable,
    q2: QTable,
}

impl DoubleQ {
    pub fn new(alpha: f64, q1: QTable, q2: QTable) -> Result<Self> {
        check_level(alpha)?;
        if q1.n_states() != q2.n_states() || q1.n_actions() != q2.n_actions() {
            return Err(Error::Dimension("Q1 and Q2 differ in shape".into()));
        }
        if q1.as_slice().iter().chain(q2.as_slice()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite value in double Q-table".into()));
        }
        Ok(DoubleQ { alpha, q1, q2 })
    }

    pub fn zeros(mdp: &Mdp, alpha: f64) -> Result<Self> {
        Self::new(alpha, QTable::for_mdp(mdp), QTable::for_mdp(mdp))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn q1(&self, x: usize, a: usize) -> f64 {
        self.q1.get(x, a)
    }

    #[inline]
    pub fn q2(&self, x: usize, a: usize) -> f64 {
        self.q2.get(x, a)
    }

    pub fn q1_table(&self) -> &QTable {
        &self.q1
    }

    pub fn q2_table(&self) -> &QTable {
        &self.q2
    }

    pub fn into_tables(self) -> (QTable, QTable) {
        (self.q1, self.q2)
    }

    /// `max(‖Q1 − Q̃1‖_∞, ‖Q2 − Q̃2‖_∞)`.
    pub fn sup_distance(&self, other: &DoubleQ) -> f64 {
        self.q1.sup_distance(&other.q1).max(self.q2.sup_distance(&other.q2))
    }

    /// `αQ1 + (1 − α)Q2`.
    pub fn average(&self) -> QTable {
        let values = self
            .q1
            .as_slice()
            .iter()
            .zip(self.q2.as_slice())
            .map(|(a, b)| self.alpha * a + (1.0 - self.alpha) * b)
            .collect();
        QTable::from_vec(self.q1.n_states(), self.q1.n_actions(), values).expect("matching shape")
    }

    /// `V_i(x) = Σ_a π(a|x) Q_i(x, a)`.
    pub fn state_values(&self, policy: &Policy) -> (Vec<f64>, Vec<f64>) {
        let reduce = |q: &QTable| {
            (0..q.n_states())
                .map(|x| (0..q.n_actions()).map(|a| policy.prob(x, a) * q.get(x, a)).sum())
                .collect()
        };
        (reduce(&self.q1), reduce(&self.q2))
    }

    pub fn diatomic(&self, x: usize, a: usize) -> Diatomic {
        Diatomic {
            theta1: self.q1(x, a),
            theta2: self.q2(x, a),
            alpha: self.alpha,
        }
    }

    /// The distribution function `D_{α,𝒬}`.
    pub fn to_dist_function(&self) -> DistFunction {
        let (s, na) = (self.q1.n_states(), self.q1.n_actions());
        let entries = (0..s * na).map(|i| self.diatomic(i / na, i % na).to_dist()).collect();
        DistFunction::new(s, na, entries).expect("matching shape")
    }

    fn check_shape(&self, mdp: &Mdp) -> Result<()> {
        if self.q1.n_states() != mdp.n_states() || self.q1.n_actions() != mdp.n_actions() {
            return Err(Error::Dimension(format!(
                "double Q-table is {}x{}, MDP is {}x{}",
                self.q1.n_states(),
                self.q1.n_actions(),
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

/// One application of `𝒯^π_α`.
pub fn diatomic_bellman_apply(mdp: &Mdp, policy: &Policy, dq: &DoubleQ) -> Result<DoubleQ> {
    dq.check_shape(mdp)?;
    policy.check_compatible(mdp)?;
    Ok(apply_unchecked(mdp, policy, dq))
}

fn apply_unchecked(mdp: &Mdp, policy: &Policy, dq: &DoubleQ) -> DoubleQ {
    let (s, na) = (mdp.n_states(), mdp.n_actions());
    let (alpha, gamma) = (dq.alpha, mdp.gamma());
    let pairs: Vec<(f64, f64)> = (0..s * na)
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
                for b in 0..na {
                    let w = p * policy.prob(y, b);
                    if w == 0.0 {
                        continue;
                    }
                    particles.push(Atom::new(r + gamma * dq.q1(y, b), alpha * w));
                    particles.push(Atom::new(r + gamma * dq.q2(y, b), (1.0 - alpha) * w));
                }
            }
            sort_and_avar_pair(particles, alpha)
        })
        .collect();
    let (q1, q2): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    DoubleQ {
        alpha,
        q1: QTable::from_vec(s, na, q1).expect("matching shape"),
        q2: QTable::from_vec(s, na, q2).expect("matching shape"),
    }
}

/// SPE from `𝒬 = (0, 0)`, calling `observer(iteration, 𝒬, residual)` after
/// each step. Stops at `residual ≤ tol` or after `max_iter` steps; the
/// returned [`FixedPoint::converged`] tells which.
pub fn run_spe<F>(
    mdp: &Mdp,
    policy: &Policy,
    alpha: f64,
    tol: f64,
    max_iter: usize,
    mut observer: F,
) -> Result<FixedPoint<DoubleQ>>
where
    F: FnMut(usize, &DoubleQ, f64),
{
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    policy.check_compatible(mdp)?;
    let mut dq = DoubleQ::zeros(mdp, alpha)?;
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let next = apply_unchecked(mdp, policy, &dq);
        residual = next.sup_distance(&dq);
        dq = next;
        observer(iter, &dq, residual);
        if residual <= tol {
            return Ok(FixedPoint {
                value: dq,
                iterations: iter,
                residual,
                converged: true,
            });
        }
    }
    Ok(FixedPoint {
        value: dq,
        iterations: max_iter,
        residual,
        converged: false,
    })
}

/// The BAVaR fixed point `𝒬^π`; fails with [`Error::Convergence`] if `tol`
/// is not reached within `max_iter` steps.
pub fn spe(mdp: &Mdp, policy: &Policy, alpha: f64, tol: f64, max_iter: usize) -> Result<FixedPoint<DoubleQ>> {
    run_spe(mdp, policy, alpha, tol, max_iter, |_, _, _| {})?.require_converged()
}

/// True iff `𝒬^π` is constant (within `tol`, componentwise) over the support
/// of `π(·|x)` in every state.
pub fn is_alpha_coherent(mdp: &Mdp, policy: &Policy, dq_fixed: &DoubleQ, tol: f64) -> bool {
    (0..mdp.n_states()).all(|x| {
        let support = policy.support(x);
        support.iter().all(|&a| {
            (dq_fixed.q1(x, a) - dq_fixed.q1(x, support[0])).abs() <= tol
                && (dq_fixed.q2(x, a) - dq_fixed.q2(x, support[0])).abs() <= tol
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::dbo::dbo_apply;
    use crate::mdp::evaluate_policy;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example2_fixed() -> DoubleQ {
        let q1 = QTable::from_vec(2, 2, vec![0.0, 1.5, 0.0, 3.5]).unwrap();
        let q2 = QTable::from_vec(2, 2, vec![0.0, 2.5, 0.0, 4.5]).unwrap();
        DoubleQ::new(0.5, q1, q2).unwrap()
    }

    #[test]
    fn example2_is_fixed_at_a2() {
        let mdp = corpus::fig1();
        let pi = Policy::deterministic(&mdp, &[1, 1]).unwrap();
        let dq = example2_fixed();
        let next = diatomic_bellman_apply(&mdp, &pi, &dq).unwrap();
        for x in 0..2 {
            assert_abs_diff_eq!(next.q1(x, 1), dq.q1(x, 1), epsilon = 1e-15);
            assert_abs_diff_eq!(next.q2(x, 1), dq.q2(x, 1), epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_particles_from_zero() {
        let mdp = corpus::fig1();
        let pi = Policy::deterministic(&mdp, &[1, 1]).unwrap();
        let next = diatomic_bellman_apply(&mdp, &pi, &DoubleQ::zeros(&mdp, 0.5).unwrap()).unwrap();
        assert_eq!((next.q1(0, 1), next.q2(0, 1)), (0.5, 0.5));
    }

    #[test]
    fn matches_projection_of_dbo() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for seed in 0..20 {
            let mdp = corpus::random_mdp(seed, 3, 2, 0.8);
            let probs: Vec<f64> = (0..3)
                .flat_map(|_| {
                    let p = rng.gen_range(0.0..1.0);
                    [p, 1.0 - p]
                })
                .collect();
            let pi = Policy::new(3, 2, probs).unwrap();
            let alpha = rng.gen_range(0.05..0.95);
            let q1 = QTable::from_vec(3, 2, (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let q2 = QTable::from_vec(3, 2, (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let dq = DoubleQ::new(alpha, q1, q2).unwrap();
            let fast = diatomic_bellman_apply(&mdp, &pi, &dq).unwrap();
            let mu = dbo_apply(&mdp, &pi, &dq.to_dist_function()).unwrap();
            for x in 0..3 {
                for a in 0..2 {
                    let proj = mu.get(x, a).project_w2_diatomic(alpha).unwrap();
                    assert_abs_diff_eq!(fast.q1(x, a), proj.theta1, epsilon = 1e-12);
                    assert_abs_diff_eq!(fast.q2(x, a), proj.theta2, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn spe_example2() {
        let mdp = corpus::fig1();
        let pi = Policy::deterministic(&mdp, &[1, 1]).unwrap();
        let fp = spe(&mdp, &pi, 0.5, 1e-12, 1_000).unwrap();
        assert!(fp.iterations <= 60);
        let dq = fp.value;
        for (x, q1, q2) in [(0, 1.5, 2.5), (1, 3.5, 4.5)] {
            assert_abs_diff_eq!(dq.q1(x, 1), q1, epsilon = 1e-10);
            assert_abs_diff_eq!(dq.q2(x, 1), q2, epsilon = 1e-10);
        }
    }

    #[test]
    fn dirac_returns_give_equal_components() {
        let mdp = corpus::fig1();
        let pi = Policy::deterministic(&mdp, &[0, 0]).unwrap();
        let q = evaluate_policy(&mdp, &pi, 1e-12, 10_000).unwrap().value;
        for alpha in [0.1, 0.5, 0.9] {
            let dq = spe(&mdp, &pi, alpha, 1e-12, 1_000).unwrap().value;
            for x in 0..2 {
                assert_abs_diff_eq!(dq.q1(x, 0), q.get(x, 0), epsilon = 1e-9);
                assert_abs_diff_eq!(dq.q2(x, 0), q.get(x, 0), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn uniform_trace_residuals_contract() {
        let mdp = corpus::fig1();
        let pi = Policy::uniform(&mdp);
        let mut residuals = Vec::new();
        let fp = run_spe(&mdp, &pi, 0.5, 1e-300, 20, |_, _, r| residuals.push(r)).unwrap();
        assert!(!fp.converged);
        assert_eq!(residuals.len(), 20);
        for w in residuals.windows(2) {
            assert!(w[1] <= mdp.gamma() * w[0] + 1e-12, "{residuals:?}");
        }
        assert!(spe(&mdp, &pi, 0.5, 1e-300, 20).is_err());
    }

    #[test]
    fn coherence_of_policies() {
        let mdp = corpus::fig1();
        let det = Policy::deterministic(&mdp, &[1, 0]).unwrap();
        let dq = spe(&mdp, &det, 0.5, 1e-12, 1_000).unwrap().value;
        assert!(is_alpha_coherent(&mdp, &det, &dq, 1e-9));

        // under the uniform policy, a1 (deterministic reward) and a2 (random jump) split apart
        let uni = Policy::uniform(&mdp);
        let dq = spe(&mdp, &uni, 0.5, 1e-12, 1_000).unwrap().value;
        assert!(!is_alpha_coherent(&mdp, &uni, &dq, 1e-9));
    }

    #[test]
    fn bad_inputs() {
        let mdp = corpus::fig1();
        let pi = Policy::uniform(&mdp);
        assert!(matches!(spe(&mdp, &pi, 1.0, 1e-9, 10), Err(Error::Domain(_))));
        assert!(matches!(spe(&mdp, &pi, 0.5, 0.0, 10), Err(Error::Domain(_))));
        let wrong = DoubleQ::new(0.5, QTable::zeros(3, 2), QTable::zeros(3, 2)).unwrap();
        assert!(matches!(
            diatomic_bellman_apply(&mdp, &pi, &wrong),
            Err(Error::Dimension(_))
        ));
    }
}
