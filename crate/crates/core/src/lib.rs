//! Diatomic distributional dynamic programming for finite MDPs.
//!
//! The crate computes the two-atom (left/right) risk-sensitive value functions
//! obtained by projecting the distributional Bellman operator onto diatomic
//! distributions `α δ_{Q1} + (1 − α) δ_{Q2}` in 2-Wasserstein distance. The
//! projection of a discrete distribution is given in closed form by its left
//! and right average value-at-risk, so one operator application is a sort of
//! `2|X||A|` particles followed by two weighted sums.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`mdp`] | MDPs, policies, classic Bellman operators, balanced reduction |
//! | [`dist`] | discrete distributions, quantiles, AVaR, W2 diatomic projection, Wasserstein distances |
//! | [`dbo`] | full distributional Bellman operator ("atomic fission") and return AVaRs |
//! | [`diatomic`] | diatomic Bellman operator and sorted policy evaluation (SPE) |
//! | [`control`] | safe / risky Bellman operators and sorted value iteration on balanced MDPs |
//! | [`robust`] | augmented double state space, dichotomous uncertainty sets, brute-force worst/best-case oracle |
//! | [`lp`] | dense two-phase simplex and the risky-control primal/dual LPs |
//! | [`corpus`] | the bundled two-state example MDP and seeded random (balanced) MDP generators |
//! | [`cli`] | the `diatomic-dp` command-line front end |
//!
//! ```
//! use diatomic_dp::{corpus, diatomic, mdp::Policy};
//!
//! let mdp = corpus::fig1();
//! let always_a2 = Policy::deterministic(&mdp, &[1, 1]).unwrap();
//! let fixed = diatomic::spe(&mdp, &always_a2, 0.5, 1e-12, 1_000).unwrap();
//! assert!((fixed.value.q1(0, 1) - 1.5).abs() < 1e-9);
//! assert!((fixed.value.q2(0, 1) - 2.5).abs() < 1e-9);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod control;
pub mod corpus;
pub mod dbo;
pub mod diatomic;
pub mod dist;
pub mod error;
pub(crate) mod linalg;
pub mod lp;
pub mod mdp;
pub mod robust;

pub use error::{Error, Result};

/// Outcome of a fixed-point iteration.
#[derive(Debug, Clone)]
pub struct FixedPoint<T> {
    pub value: T,
    pub iterations: usize,
    /// Sup-norm distance between the last two iterates.
    pub residual: f64,
    pub converged: bool,
}

impl<T> FixedPoint<T> {
    /// Turns a non-converged run into [`Error::Convergence`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::Convergence {
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }
}
