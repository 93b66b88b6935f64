//! The distributional Bellman operator on atomic distribution functions.
//!
//! One application replaces every atom of every `μ^{(x',a')}` by its image
//! under `z ↦ r(x,a,x') + γ z` and mixes them with weights `P(x'|x,a) π(a'|x')`,
//! so atom counts grow by up to a factor `|X||A|` per step. [`dbo_iterate`]
//! can prune light atoms or, once an entry gets large, compress it on a fixed
//! grid. The operator preserves both first-order stochastic dominance and the
//! convex order, so the compressed iterates bound the exact one:
//!
//! * rounding every atom down (up) gives a distribution dominated by
//!   (dominating) the exact iterate, so every AVaR is bounded below (above);
//! * merging the atoms of each grid cell into their mean gives a distribution
//!   smaller in convex order, so the left AVaR is bounded above and the right
//!   AVaR below, with an error of second order in the cell width.

use rayon::prelude::*;

use crate::dist::{check_level, Atom, DiscreteDist, WassersteinOrder};
use crate::mdp::{Mdp, Policy, QTable};
use crate::{Error, Result};

/// Default cap on the total number of particles created in one application.
pub const DEFAULT_ATOM_CAP: usize = 2_000_000;

/// A distribution per state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DistFunction {
    n_states: usize,
    n_actions: usize,
    entries: Vec<DiscreteDist>,
}

impl DistFunction {
    pub fn new(n_states: usize, n_actions: usize, entries: Vec<DiscreteDist>) -> Result<Self> {
        if entries.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "distribution function needs {} entries, got {}",
                n_states * n_actions,
                entries.len()
            )));
        }
        Ok(DistFunction {
            n_states,
            n_actions,
            entries,
        })
    }

    /// The same distribution at every pair.
    pub fn constant(mdp: &Mdp, dist: DiscreteDist) -> Self {
        DistFunction {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            entries: vec![dist; mdp.n_states() * mdp.n_actions()],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, x: usize, a: usize) -> &DiscreteDist {
        &self.entries[x * self.n_actions + a]
    }

    pub fn entries(&self) -> &[DiscreteDist] {
        &self.entries
    }

    pub fn total_atoms(&self) -> usize {
        self.entries.iter().map(DiscreteDist::len).sum()
    }

    pub fn expectations(&self) -> QTable {
        let values = self.entries.iter().map(DiscreteDist::expectation).collect();
        QTable::from_vec(self.n_states, self.n_actions, values).expect("matching shape")
    }

    /// Maximal Wasserstein distance `sup_{x,a} W(μ^{(x,a)}, ν^{(x,a)})`.
    pub fn sup_wasserstein(&self, other: &DistFunction, order: WassersteinOrder) -> Result<f64> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Dimension("distribution functions differ in shape".into()));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.entries.iter().zip(&other.entries) {
            worst = worst.max(a.wasserstein(b, order)?);
        }
        Ok(worst)
    }

    /// `x,a,value,prob` lines, pairs in row-major order.
    pub fn to_csv_rows(&self) -> Vec<String> {
        let mut out = Vec::new();
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                for atom in self.get(x, a).atoms() {
                    out.push(format!("{x},{a},{},{}", atom.value, atom.prob));
                }
            }
        }
        out
    }

    fn check_shape(&self, mdp: &Mdp) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::Dimension(format!(
                "distribution function is {}x{}, MDP is {}x{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

/// How the atoms of one grid cell are replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    /// By the left end of the cell.
    Down,
    /// By the right end of the cell.
    Up,
    /// By a single atom at their mean.
    Mean,
}

/// Grid compression for [`dbo_iterate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compression {
    /// Number of grid cells spanning the range of attainable returns.
    pub bins: usize,
    /// Entries with at most this many particles are kept exact.
    pub exact_limit: usize,
    pub rounding: Rounding,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FissionOptions {
    /// Atoms lighter than this are dropped after each step (0 disables).
    pub prune_eps: f64,
    pub atom_cap: usize,
    pub compression: Option<Compression>,
}

impl Default for FissionOptions {
    fn default() -> Self {
        FissionOptions {
            prune_eps: 0.0,
            atom_cap: DEFAULT_ATOM_CAP,
            compression: None,
        }
    }
}

/// Value grid `lo + i h`, `i = 0..=bins`.
#[derive(Debug, Clone, Copy)]
struct Grid {
    lo: f64,
    h: f64,
    bins: usize,
    rounding: Rounding,
    exact_limit: usize,
}

impl Grid {
    fn point(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.h
    }

    fn index(&self, value: f64) -> usize {
        let t = (value - self.lo) / self.h;
        let mut i = match self.rounding {
            Rounding::Down | Rounding::Mean => t.floor(),
            Rounding::Up => t.ceil(),
        }
        .clamp(0.0, self.bins as f64) as usize;
        match self.rounding {
            Rounding::Mean => {}
            Rounding::Down => {
                while i > 0 && self.point(i) > value {
                    i -= 1;
                }
            }
            Rounding::Up => {
                while i < self.bins && self.point(i) < value {
                    i += 1;
                }
            }
        }
        i
    }
}

/// One application of `𝒯^π`.
pub fn dbo_apply(mdp: &Mdp, policy: &Policy, mu: &DistFunction) -> Result<DistFunction> {
    Ok(apply_inner(mdp, policy, mu, &FissionOptions::default(), None)?.0)
}

fn apply_inner(
    mdp: &Mdp,
    policy: &Policy,
    mu: &DistFunction,
    opts: &FissionOptions,
    grid: Option<&Grid>,
) -> Result<(DistFunction, bool)> {
    mu.check_shape(mdp)?;
    policy.check_compatible(mdp)?;
    let (s, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();

    let particle_counts: Vec<usize> = (0..s * na)
        .map(|xa| {
            let (x, a) = (xa / na, xa % na);
            let mut n = 0;
            for y in 0..s {
                if mdp.p(x, a, y) == 0.0 {
                    continue;
                }
                for b in 0..na {
                    if policy.prob(y, b) > 0.0 {
                        n += mu.get(y, b).len();
                    }
                }
            }
            n
        })
        .collect();
    let total: usize = particle_counts.iter().sum();
    if total > opts.atom_cap {
        return Err(Error::Resource(format!(
            "one more step would create {total} particles (cap {}); set prune_eps or enable grid compression",
            opts.atom_cap
        )));
    }

    let compressed = grid.is_some_and(|g| particle_counts.iter().any(|&n| n > g.exact_limit));
    let entries = (0..s * na)
        .into_par_iter()
        .map(|xa| {
            let (x, a) = (xa / na, xa % na);
            let compress = grid.filter(|g| particle_counts[xa] > g.exact_limit);
            let mut bins = compress.map(|g| (vec![0.0f64; g.bins + 1], vec![0.0f64; g.bins + 1]));
            let mut particles = Vec::with_capacity(if compress.is_some() { 0 } else { particle_counts[xa] });
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
                    for atom in mu.get(y, b).atoms() {
                        let value = r + gamma * atom.value;
                        match (&mut bins, compress) {
                            (Some((mass, moment)), Some(g)) => {
                                let i = g.index(value);
                                mass[i] += w * atom.prob;
                                moment[i] += w * atom.prob * value;
                            }
                            _ => particles.push(Atom::new(value, w * atom.prob)),
                        }
                    }
                }
            }
            if let (Some((mass, moment)), Some(g)) = (bins, compress) {
                particles = mass
                    .into_iter()
                    .zip(moment)
                    .enumerate()
                    .filter(|(_, (p, _))| *p > 0.0)
                    .map(|(i, (p, m))| match g.rounding {
                        Rounding::Mean => Atom::new(m / p, p),
                        _ => Atom::new(g.point(i), p),
                    })
                    .collect();
            }
            if opts.prune_eps > 0.0 {
                let total: f64 = particles.iter().map(|a| a.prob).sum();
                let kept: Vec<Atom> = particles
                    .iter()
                    .copied()
                    .filter(|a| a.prob / total >= opts.prune_eps)
                    .collect();
                if !kept.is_empty() {
                    particles = kept;
                }
            }
            DiscreteDist::from_atoms_unchecked(particles)
        })
        .collect();
    Ok((
        DistFunction {
            n_states: s,
            n_actions: na,
            entries,
        },
        compressed,
    ))
}

/// Applies `𝒯^π` `k` times starting from `mu0`.
pub fn dbo_iterate(
    mdp: &Mdp,
    policy: &Policy,
    mu0: &DistFunction,
    k: usize,
    opts: &FissionOptions,
) -> Result<DistFunction> {
    dbo_iterate_with(mdp, policy, mu0, k, opts, |_, _| {})
}

/// As [`dbo_iterate`], calling `observer(step, μ_step)` after every step.
pub fn dbo_iterate_with<F>(
    mdp: &Mdp,
    policy: &Policy,
    mu0: &DistFunction,
    k: usize,
    opts: &FissionOptions,
    mut observer: F,
) -> Result<DistFunction>
where
    F: FnMut(usize, &DistFunction),
{
    iterate_tracked(mdp, policy, mu0, k, opts, |step, mu, _| observer(step, mu))
}

fn iterate_tracked<F>(
    mdp: &Mdp,
    policy: &Policy,
    mu0: &DistFunction,
    k: usize,
    opts: &FissionOptions,
    mut observer: F,
) -> Result<DistFunction>
where
    F: FnMut(usize, &DistFunction, bool),
{
    if !(opts.prune_eps >= 0.0) {
        return Err(Error::Domain(format!("prune_eps must be >= 0, got {}", opts.prune_eps)));
    }
    mu0.check_shape(mdp)?;
    let grid = match opts.compression {
        Some(c) => {
            if c.bins == 0 {
                return Err(Error::Domain("compression grid needs at least one bin".into()));
            }
            // iterates stay inside [min(m0, r_min/(1−γ)), max(M0, r_max/(1−γ))]
            let r_min = mdp.reward_table().iter().copied().fold(f64::INFINITY, f64::min);
            let r_max = mdp.reward_table().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let m0 = mu0
                .entries
                .iter()
                .map(DiscreteDist::min_value)
                .fold(f64::INFINITY, f64::min);
            let m1 = mu0
                .entries
                .iter()
                .map(DiscreteDist::max_value)
                .fold(f64::NEG_INFINITY, f64::max);
            let lo = m0.min(r_min / (1.0 - mdp.gamma()));
            let hi = m1.max(r_max / (1.0 - mdp.gamma()));
            let h = ((hi - lo) / c.bins as f64).max(f64::MIN_POSITIVE);
            Some(Grid {
                lo,
                h,
                bins: c.bins,
                rounding: c.rounding,
                exact_limit: c.exact_limit,
            })
        }
        None => None,
    };
    let mut mu = mu0.clone();
    for step in 1..=k {
        let (next, compressed) = apply_inner(mdp, policy, &mu, opts, grid.as_ref())?;
        mu = next;
        observer(step, &mu, compressed);
    }
    Ok(mu)
}

/// AVaRs of the `k`-step return distributions `μ̂_k` (fission from `δ_0`).
///
/// Without compression the values are exact. With compression `left` is an
/// upper bound on the exact left AVaR and `right` a lower bound on the exact
/// right AVaR. `|AVaR(μ̂_k) − AVaR(μ_π)| ≤ tail_bound` for the true returns.
#[derive(Debug, Clone)]
pub struct ReturnAvars {
    pub alpha: f64,
    pub k: usize,
    pub left: QTable,
    pub right: QTable,
    /// `γ^k max|r| / (1 − γ)`.
    pub tail_bound: f64,
    /// Whether any entry was compressed.
    pub compressed: bool,
    /// Largest per-entry atom count of the final iterate.
    pub max_atoms: usize,
}

/// Left AVaR at `α` and right AVaR at `1 − α` of every entry.
pub fn avar_tables(mu: &DistFunction, alpha: f64) -> Result<(QTable, QTable)> {
    check_level(alpha)?;
    let mut left = QTable::zeros(mu.n_states, mu.n_actions);
    let mut right = QTable::zeros(mu.n_states, mu.n_actions);
    for x in 0..mu.n_states {
        for a in 0..mu.n_actions {
            let d = mu.get(x, a);
            left.set(x, a, d.avar_left(alpha)?);
            right.set(x, a, d.avar_right(1.0 - alpha)?);
        }
    }
    Ok((left, right))
}

/// AVaRs of the return distributions after `k` fission steps from `δ_0`.
/// With `bins = 0` the iteration is exact; otherwise entries that would hold
/// more than `4 · bins` particles are merged cell-wise into cell means.
pub fn return_avars(mdp: &Mdp, policy: &Policy, alpha: f64, k: usize, bins: usize) -> Result<ReturnAvars> {
    check_level(alpha)?;
    let mu0 = DistFunction::constant(mdp, DiscreteDist::dirac(0.0));
    let tail_bound = mdp.gamma().powi(k as i32) * mdp.max_abs_reward() / (1.0 - mdp.gamma());
    let opts = FissionOptions {
        compression: (bins > 0).then_some(Compression {
            bins,
            exact_limit: 4 * bins,
            rounding: Rounding::Mean,
        }),
        ..FissionOptions::default()
    };
    let mut compressed = false;
    let mu = iterate_tracked(mdp, policy, &mu0, k, &opts, |_, _, c| compressed |= c)?;
    let (left, right) = avar_tables(&mu, alpha)?;
    Ok(ReturnAvars {
        alpha,
        k,
        left,
        right,
        tail_bound,
        compressed,
        max_atoms: mu.entries.iter().map(DiscreteDist::len).max().unwrap_or(0),
    })
}
