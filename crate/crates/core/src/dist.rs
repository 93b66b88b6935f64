//! Finite discrete distributions on the real line.
//!
//! A [`DiscreteDist`] is kept canonical: atoms sorted by value, atoms closer
//! than [`MERGE_TOL`] merged, zero-probability atoms dropped and total mass
//! normalised to one. Quantile functions of such distributions are step
//! functions, so every integral of the quantile function used here (AVaR,
//! expectation, Wasserstein distances) is an exact finite sum.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Atoms whose values differ by at most this amount are merged.
pub const MERGE_TOL: f64 = 1e-12;

/// Tolerance on the total mass accepted by [`DiscreteDist::new`] and [`mix`].
pub const MASS_TOL: f64 = 1e-9;

/// One weighted atom `prob · δ_value`. Also the record type of distribution files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

impl Atom {
    pub fn new(value: f64, prob: f64) -> Self {
        Atom { value, prob }
    }
}

/// A probability distribution with finitely many atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    atoms: Vec<Atom>,
}

/// Order of a Wasserstein distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WassersteinOrder {
    /// `p ≥ 1`.
    P(f64),
    Infinity,
}

/// The diatomic distribution `α δ_{θ1} + (1 − α) δ_{θ2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diatomic {
    pub theta1: f64,
    pub theta2: f64,
    pub alpha: f64,
}

impl Diatomic {
    pub fn to_dist(&self) -> DiscreteDist {
        DiscreteDist::from_atoms_unchecked(vec![
            Atom::new(self.theta1, self.alpha),
            Atom::new(self.theta2, 1.0 - self.alpha),
        ])
    }
}

pub(crate) fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("risk level must lie in (0, 1), got {alpha}")))
    }
}

impl DiscreteDist {
    /// Builds a distribution from arbitrary atoms.
    ///
    /// Probabilities must be non-negative and sum to one within [`MASS_TOL`];
    /// the result is canonicalised.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Domain("distribution needs at least one atom".into()));
        }
        let mut total = 0.0;
        for atom in &atoms {
            if !atom.value.is_finite() || !atom.prob.is_finite() {
                return Err(Error::Domain(format!("non-finite atom {atom:?}")));
            }
            if atom.prob < 0.0 {
                return Err(Error::Domain(format!("negative probability {}", atom.prob)));
            }
            total += atom.prob;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Domain(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self::from_atoms_unchecked(atoms))
    }

    /// `δ_c`.
    pub fn dirac(value: f64) -> Self {
        DiscreteDist {
            atoms: vec![Atom::new(value, 1.0)],
        }
    }

    /// Canonicalises without validating the total mass (it is renormalised).
    pub(crate) fn from_atoms_unchecked(mut atoms: Vec<Atom>) -> Self {
        atoms.retain(|a| a.prob > 0.0);
        // stable: equal values keep their input order
        atoms.sort_by(|a, b| a.value.total_cmp(&b.value));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for atom in atoms {
            match merged.last_mut() {
                Some(last) if atom.value - last.value <= MERGE_TOL => last.prob += atom.prob,
                _ => merged.push(atom),
            }
        }
        let total: f64 = merged.iter().map(|a| a.prob).sum();
        if total > 0.0 && total != 1.0 {
            for atom in &mut merged {
                atom.prob /= total;
            }
        }
        DiscreteDist { atoms: merged }
    }

    /// Parses the JSON distribution file format: a list of `{"value": v, "prob": p}`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let atoms: Vec<Atom> = serde_json::from_str(text)?;
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Smallest atom value.
    pub fn min_value(&self) -> f64 {
        self.atoms[0].value
    }

    /// Largest atom value.
    pub fn max_value(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].value
    }

    /// Cumulative probabilities, with the last entry pinned to exactly 1.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut cum: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| {
                acc += a.prob;
                acc
            })
            .collect();
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        cum
    }

    /// Generalised inverse CDF `F^{-1}(τ) = inf{z : F(z) ≥ τ}` for `τ ∈ (0, 1]`.
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1], got {tau}")));
        }
        let mut acc = 0.0;
        for atom in &self.atoms {
            acc += atom.prob;
            if acc >= tau {
                return Ok(atom.value);
            }
        }
        Ok(self.max_value())
    }

    pub fn expectation(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob * a.value).sum()
    }

    /// Pushforward through `z ↦ r0 + γ z`; `γ = 0` collapses to `δ_{r0}`.
    pub fn pushforward_affine(&self, r0: f64, gamma: f64) -> DiscreteDist {
        if gamma == 0.0 {
            return DiscreteDist::dirac(r0);
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom::new(r0 + gamma * a.value, a.prob))
            .collect();
        DiscreteDist::from_atoms_unchecked(atoms)
    }

    /// Left AVaR at level `α`: the mean of the quantile function over `(0, α]`.
    pub fn avar_left(&self, alpha: f64) -> Result<f64> {
        check_level(alpha)?;
        Ok(left_tail_sum(&self.atoms, alpha) / alpha)
    }

    /// Right AVaR at level `β`: the mean of the quantile function over the
    /// upper tail `(1 − β, 1]`. The W2 projection at level `α` uses `β = 1 − α`.
    pub fn avar_right(&self, beta: f64) -> Result<f64> {
        check_level(beta)?;
        Ok(right_tail_sum(&self.atoms, 1.0 - beta) / beta)
    }

    /// Dual form of the left AVaR: `(1/α) min ⟨λ, v⟩` over `0 ≤ λ_i ≤ p_i`,
    /// `Σ λ_i = α`, solved by filling mass greedily from the smallest value.
    /// Returns the value and the minimising weights.
    pub fn avar_left_dual(&self, alpha: f64) -> Result<(f64, Vec<f64>)> {
        check_level(alpha)?;
        let mut remaining = alpha;
        let mut lambda = Vec::with_capacity(self.atoms.len());
        let mut inner = 0.0;
        for atom in &self.atoms {
            let take = atom.prob.min(remaining).max(0.0);
            remaining -= take;
            inner += take * atom.value;
            lambda.push(take);
        }
        Ok((inner / alpha, lambda))
    }

    /// Best diatomic approximation in W2 distance: `θ1` is the left AVaR at
    /// `α`, `θ2` the right AVaR at `1 − α`.
    pub fn project_w2_diatomic(&self, alpha: f64) -> Result<Diatomic> {
        check_level(alpha)?;
        let (theta1, theta2) = avar_pair_sorted(&self.atoms, alpha);
        Ok(Diatomic { theta1, theta2, alpha })
    }

    /// Wasserstein distance computed exactly on the merged breakpoint grid of
    /// the two cumulative vectors.
    pub fn wasserstein(&self, other: &DiscreteDist, order: WassersteinOrder) -> Result<f64> {
        if let WassersteinOrder::P(p) = order {
            if !(p >= 1.0) {
                return Err(Error::Domain(format!("Wasserstein order must be >= 1, got {p}")));
            }
        }
        let c1 = self.cumulative();
        let c2 = other.cumulative();
        let (mut i, mut j) = (0usize, 0usize);
        let mut prev = 0.0;
        let mut acc = 0.0f64;
        loop {
            let t = c1[i].min(c2[j]);
            let width = t - prev;
            if width > 0.0 {
                let diff = (self.atoms[i].value - other.atoms[j].value).abs();
                match order {
                    WassersteinOrder::P(p) => acc += width * diff.powf(p),
                    WassersteinOrder::Infinity => acc = acc.max(diff),
                }
                prev = t;
            }
            let last_i = i + 1 == c1.len();
            let last_j = j + 1 == c2.len();
            if last_i && last_j {
                break;
            }
            // breakpoints within MERGE_TOL coincide
            if c1[i] <= t + MERGE_TOL && !last_i {
                i += 1;
            }
            if c2[j] <= t + MERGE_TOL && !last_j {
                j += 1;
            }
        }
        Ok(match order {
            WassersteinOrder::P(p) => acc.powf(1.0 / p),
            WassersteinOrder::Infinity => acc,
        })
    }

    /// `value,prob` lines in sorted order.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for atom in &self.atoms {
            out.push_str(&format!("{},{}\n", atom.value, atom.prob));
        }
        out
    }
}

/// Mixture `Σ w_i d_i`. Weights must be non-negative and sum to one.
pub fn mix(components: &[(f64, DiscreteDist)]) -> Result<DiscreteDist> {
    if components.is_empty() {
        return Err(Error::Domain("empty mixture".into()));
    }
    let mut total = 0.0;
    for (w, _) in components {
        if !(*w >= 0.0) {
            return Err(Error::Domain(format!("negative mixture weight {w}")));
        }
        total += w;
    }
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::Domain(format!("mixture weights sum to {total}, expected 1")));
    }
    let atoms = components
        .iter()
        .flat_map(|(w, d)| d.atoms.iter().map(move |a| Atom::new(a.value, w * a.prob)))
        .collect();
    Ok(DiscreteDist::from_atoms_unchecked(atoms))
}

/// `Σ_j max(0, min(p_j, α − cum_{j−1})) v_j` over value-sorted atoms.
fn left_tail_sum(atoms: &[Atom], alpha: f64) -> f64 {
    let mut before = 0.0;
    let mut acc = 0.0;
    for atom in atoms {
        let w = atom.prob.min(alpha - before).max(0.0);
        acc += w * atom.value;
        before += atom.prob;
    }
    acc
}

/// `Σ_j max(0, min(p_j, cum_j − α)) v_j` over value-sorted atoms.
fn right_tail_sum(atoms: &[Atom], alpha: f64) -> f64 {
    let mut cum = 0.0;
    let mut acc = 0.0;
    for atom in atoms {
        cum += atom.prob;
        let w = atom.prob.min(cum - alpha).max(0.0);
        acc += w * atom.value;
    }
    acc
}

/// Left AVaR at `α` and right AVaR at `1 − α` of value-sorted atoms.
pub(crate) fn avar_pair_sorted(atoms: &[Atom], alpha: f64) -> (f64, f64) {
    (
        left_tail_sum(atoms, alpha) / alpha,
        right_tail_sum(atoms, alpha) / (1.0 - alpha),
    )
}

/// Sorts probability-particle pairs by value (stable) and returns the left
/// AVaR at `α` and right AVaR at `1 − α`. Zero-probability particles are
/// expected to have been dropped by the caller.
pub(crate) fn sort_and_avar_pair(particles: &mut [Atom], alpha: f64) -> (f64, f64) {
    particles.sort_by(|a, b| a.value.total_cmp(&b.value));
    avar_pair_sorted(particles, alpha)
}

/// Left AVaR only; used by the safe/risky operators.
pub(crate) fn sort_and_avar_left(particles: &mut [Atom], alpha: f64) -> f64 {
    particles.sort_by(|a, b| a.value.total_cmp(&b.value));
    left_tail_sum(particles, alpha) / alpha
}
