//! Bundled example MDPs and seeded random generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::DiscreteDist;
use crate::mdp::Mdp;

const FIG1_JSON: &str = include_str!("../data/fig1.json");
const FIG4_JSON: &str = include_str!("../data/fig4_dist.json");

/// Seeds of the two-state balanced MDPs in [`balanced_corpus`].
pub const TWO_STATE_SEEDS: [u64; 20] = [
    101, 102, 103, 104, 105, 106, 107, 108, 109, 110, 111, 112, 113, 114, 115, 116, 117, 118, 119, 120,
];
/// Seeds of the three-state balanced MDPs in [`balanced_corpus`].
pub const THREE_STATE_SEEDS: [u64; 5] = [301, 302, 303, 304, 305];

/// The two-state, two-action MDP with `γ = ½`: `a1` stays put and pays 1 in
/// `x1`, 2 in `x2`; `a2` jumps to either state with probability ½ and pays ½
/// in `x1`, 5/2 in `x2`. Every policy is optimal, with `V* = (2, 4)`.
pub fn fig1() -> Mdp {
    Mdp::from_json_str(FIG1_JSON).expect("bundled fig1.json is valid")
}

/// `0.2 (δ_{−5} + 2 δ_{−1} + δ_4 + δ_8)`.
pub fn fig4_dist() -> DiscreteDist {
    DiscreteDist::from_json_str(FIG4_JSON).expect("bundled fig4_dist.json is valid")
}

fn random_row(rng: &mut ChaCha8Rng, n: usize, sparse: bool) -> Vec<f64> {
    loop {
        let row: Vec<f64> = (0..n)
            .map(|_| {
                if sparse && rng.gen_bool(0.25) {
                    0.0
                } else {
                    rng.gen_range(0.05..1.0)
                }
            })
            .collect();
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            return row.into_iter().map(|p| p / total).collect();
        }
    }
}

/// Random MDP with dense transitions and rewards uniform in `[−1, 1]`.
pub fn random_mdp(seed: u64, n_states: usize, n_actions: usize, gamma: f64) -> Mdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(random_row(&mut rng, n_states, false));
    }
    let reward = (0..transition.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Mdp::new(n_states, n_actions, transition, reward, gamma).expect("generated MDP is valid")
}

/// Random balanced MDP: draws `V*`, random (possibly sparse) transitions and
/// rewards, then shifts each `r(x, a, ·)` so that every action satisfies the
/// Bellman equation of `V*`. Returns the MDP and its `V*`.
pub fn random_balanced_mdp(seed: u64, n_states: usize, n_actions: usize, gamma: f64) -> (Mdp, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v_star: Vec<f64> = (0..n_states).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    let mut reward = Vec::with_capacity(n_states * n_actions * n_states);
    for x in 0..n_states {
        for _ in 0..n_actions {
            let row = random_row(&mut rng, n_states, true);
            let mut r: Vec<f64> = (0..n_states).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let backup: f64 = (0..n_states).map(|y| row[y] * (r[y] + gamma * v_star[y])).sum();
            let shift = v_star[x] - backup;
            r.iter_mut().for_each(|v| *v += shift);
            transition.extend(row);
            reward.extend(r);
        }
    }
    let mdp = Mdp::new(n_states, n_actions, transition, reward, gamma).expect("generated MDP is valid");
    (mdp, v_star)
}

/// Discount drawn from `[0.4, 0.8]` by the corpus seed.
pub fn corpus_gamma(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.gen_range(0.4..0.8)
}

/// One bundled MDP.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub name: String,
    /// Generator seed, `None` for hand-written MDPs.
    pub seed: Option<u64>,
    pub mdp: Mdp,
}

/// `fig1` followed by the seeded two-state and three-state balanced MDPs
/// (two actions each). Matches the JSON files under `data/balanced/`.
pub fn balanced_corpus() -> Vec<CorpusEntry> {
    let mut out = vec![CorpusEntry {
        name: "fig1".into(),
        seed: None,
        mdp: fig1(),
    }];
    for (n_states, seeds) in [(2usize, &TWO_STATE_SEEDS[..]), (3, &THREE_STATE_SEEDS[..])] {
        for &seed in seeds {
            out.push(CorpusEntry {
                name: format!("balanced_s{n_states}_seed{seed}"),
                seed: Some(seed),
                mdp: random_balanced_mdp(seed, n_states, 2, corpus_gamma(seed)).0,
            });
        }
    }
    out
}
