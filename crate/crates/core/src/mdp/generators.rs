//! Small instance families used by tests, examples and the harness.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::instance::{InstanceParts, LinearMdpInstance};
use crate::rng::SeedStream;

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

/// One state, `d` arms, `H = 1`, one-hot features, reward 0.5 everywhere.
pub fn bandit(d: usize) -> LinearMdpInstance {
    LinearMdpInstance::new(InstanceParts {
        d,
        horizon: 1,
        num_actions: d,
        states_per_layer: vec![1],
        phi: vec![vec![(0..d).map(|a| unit(d, a)).collect()]],
        mu: vec![],
        theta: vec![vec![0.5; d]],
        init: vec![1.0],
    })
    .expect("bandit construction is valid")
}

/// One state per layer with a single action, `φ = e₁` and constant reward.
pub fn single_action_chain(d: usize, horizon: usize, reward: f64) -> LinearMdpInstance {
    let e1 = unit(d, 0);
    let mut theta = vec![0.0; d];
    theta[0] = reward;
    LinearMdpInstance::new(InstanceParts {
        d,
        horizon,
        num_actions: 1,
        states_per_layer: vec![1; horizon],
        phi: vec![vec![vec![e1.clone()]]; horizon],
        mu: vec![vec![e1]; horizon - 1],
        theta: vec![theta; horizon],
        init: vec![1.0],
    })
    .expect("chain construction is valid")
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let w: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            return w.into_iter().map(|x| x / total).collect();
        }
    }
}

/// Tabular instance with one-hot features over the `(state, action)` pairs of
/// each layer (`d = states * actions`), random transitions and rewards, and
/// a fixed initial state.
pub fn tabular_random(states: usize, actions: usize, horizon: usize, seed: u64) -> LinearMdpInstance {
    let mut rng = SeedStream::new(seed).aux_rng(0x7AB);
    let d = states * actions;
    let pair = |s: usize, a: usize| s * actions + a;
    let first = |h: usize| if h == 0 { 1 } else { states };
    let phi = (0..horizon)
        .map(|h| (0..first(h)).map(|s| (0..actions).map(|a| unit(d, pair(s, a))).collect()).collect())
        .collect();
    let mu = (0..horizon.saturating_sub(1))
        .map(|h| {
            let mut m = vec![vec![0.0; d]; states];
            for s in 0..first(h) {
                for a in 0..actions {
                    let p = random_distribution(&mut rng, states, 1.0);
                    for (sp, row) in m.iter_mut().enumerate() {
                        row[pair(s, a)] = p[sp];
                    }
                }
            }
            m
        })
        .collect();
    let theta = (0..horizon).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    LinearMdpInstance::new(InstanceParts {
        d,
        horizon,
        num_actions: actions,
        states_per_layer: (0..horizon).map(first).collect(),
        phi,
        mu,
        theta,
        init: vec![1.0],
    })
    .expect("tabular construction is valid")
}

/// Parameters of [`simplex_random`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexParams {
    pub d: usize,
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    /// Dirichlet concentration of the features; small values push features
    /// towards simplex vertices and make every direction easier to reach.
    pub feature_concentration: f64,
    pub seed: u64,
}

/// Low-rank linear MDP: features lie on the probability simplex, each
/// column of `μ_h` is a distribution over next states and `θ_h ∈ [0,1]^d`,
/// so `P = μφ` and `r = ⟨φ, θ⟩` are valid by convexity. Layer 0 holds a
/// single fixed initial state.
pub fn simplex_random(params: SimplexParams) -> Result<LinearMdpInstance> {
    let SimplexParams { d, states, actions, horizon, feature_concentration, seed } = params;
    let mut rng = SeedStream::new(seed).aux_rng(0x51E);
    let first = |h: usize| if h == 0 { 1 } else { states };
    let phi = (0..horizon)
        .map(|h| {
            (0..first(h))
                .map(|_| (0..actions).map(|_| random_distribution(&mut rng, d, feature_concentration)).collect())
                .collect()
        })
        .collect();
    let mu = (0..horizon.saturating_sub(1))
        .map(|_| {
            let cols: Vec<Vec<f64>> = (0..d).map(|_| random_distribution(&mut rng, states, 1.0)).collect();
            (0..states).map(|sp| (0..d).map(|j| cols[j][sp]).collect()).collect()
        })
        .collect();
    let theta = (0..horizon).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    LinearMdpInstance::new(InstanceParts {
        d,
        horizon,
        num_actions: actions,
        states_per_layer: (0..horizon).map(first).collect(),
        phi,
        mu,
        theta,
        init: vec![1.0],
    })
}

/// Random reward vectors `θ_h ∈ [0,1]^d` for an instance whose features lie in
/// the nonnegative orthant with `‖φ‖₁ ≤ 1` (true for both random families).
pub fn random_linear_reward(d: usize, horizon: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SeedStream::new(seed).aux_rng(0x4E3);
    (0..horizon).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}
