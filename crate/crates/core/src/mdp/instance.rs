//! Finite-instantiation linear MDPs.
//!
//! Layers are 0-based: layer `h` runs from `0` to `horizon - 1`. A state is
//! addressed by `(layer, index)`. States may expose different numbers of
//! actions; the feature table is ragged accordingly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DerlError, Result};
use crate::linalg::{Matrix, Vector};

/// Tolerance for a transition vector to count as a distribution before it is
/// clamped and renormalized.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Norm slack for `‖φ‖ ≤ 1`, `‖μ‖ ≤ √d`, `‖θ‖ ≤ √d`.
pub const NORM_TOL: f64 = 1e-9;

/// Raw, unvalidated instance data. This is also the JSON file layout.
///
/// * `phi[h][s][a]` is the feature vector of length `d`.
/// * `mu[h][s'][j]` is the `(s', j)` entry of layer `h`'s measure matrix; there
///   are `H - 1` of them since the final layer has no successor.
/// * `theta[h]` is the reward parameter of layer `h`.
/// * `init` is a distribution over layer-0 states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceParts {
    pub d: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub num_actions: usize,
    pub states_per_layer: Vec<usize>,
    pub phi: Vec<Vec<Vec<Vec<f64>>>>,
    pub mu: Vec<Vec<Vec<f64>>>,
    pub theta: Vec<Vec<f64>>,
    pub init: Vec<f64>,
}

/// Per-`(layer, state, action)` reward values.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    values: Vec<Vec<Vec<f64>>>,
}

impl RewardTable {
    pub fn zeros(instance: &LinearMdpInstance) -> Self {
        Self::from_fn(instance, |_, _, _| 0.0)
    }

    pub fn from_fn(instance: &LinearMdpInstance, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let values = (0..instance.horizon())
            .map(|h| {
                (0..instance.num_states(h))
                    .map(|s| (0..instance.num_actions_at(h, s)).map(|a| f(h, s, a)).collect())
                    .collect()
            })
            .collect();
        Self { values }
    }

    pub(crate) fn from_values(values: Vec<Vec<Vec<f64>>>) -> Self {
        Self { values }
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[h][s][a]
    }

    pub fn layers(&self) -> usize {
        self.values.len()
    }

    pub fn as_nested(&self) -> &Vec<Vec<Vec<f64>>> {
        &self.values
    }
}

/// A validated linear MDP over a finite layered state space.
#[derive(Debug, Clone)]
pub struct LinearMdpInstance {
    parts: InstanceParts,
    phi: Vec<Vec<Vec<Vector>>>,
    mu: Vec<Matrix>,
    theta: Vec<Vector>,
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    cumulative: Vec<Vec<Vec<Vec<f64>>>>,
    rewards: RewardTable,
}

fn invalid(msg: impl Into<String>) -> DerlError {
    DerlError::InvalidInstance(msg.into())
}

impl LinearMdpInstance {
    /// Validates `parts` and precomputes transition and reward tables.
    pub fn new(parts: InstanceParts) -> Result<Self> {
        let d = parts.d;
        let horizon = parts.horizon;
        if d == 0 || horizon == 0 {
            return Err(invalid("d and H must be positive"));
        }
        if parts.num_actions == 0 {
            return Err(invalid("num_actions must be positive"));
        }
        if parts.states_per_layer.len() != horizon || parts.states_per_layer.contains(&0) {
            return Err(invalid("states_per_layer must list a positive count for every layer"));
        }
        if parts.phi.len() != horizon {
            return Err(invalid("phi must have one entry per layer"));
        }
        let mut phi = Vec::with_capacity(horizon);
        for (h, layer) in parts.phi.iter().enumerate() {
            if layer.len() != parts.states_per_layer[h] {
                return Err(invalid(format!("phi layer {h} has {} states, expected {}", layer.len(), parts.states_per_layer[h])));
            }
            let mut states = Vec::with_capacity(layer.len());
            for (s, actions) in layer.iter().enumerate() {
                if actions.is_empty() || actions.len() > parts.num_actions {
                    return Err(invalid(format!("state ({h},{s}) must have between 1 and num_actions actions")));
                }
                let mut row = Vec::with_capacity(actions.len());
                for (a, f) in actions.iter().enumerate() {
                    if f.len() != d {
                        return Err(invalid(format!("phi({h},{s},{a}) has length {}, expected {d}", f.len())));
                    }
                    let v = Vector::from_column_slice(f);
                    if !v.iter().all(|x| x.is_finite()) || v.norm() > 1.0 + NORM_TOL {
                        return Err(invalid(format!("phi({h},{s},{a}) must be finite with norm <= 1")));
                    }
                    row.push(v);
                }
                states.push(row);
            }
            phi.push(states);
        }

        if parts.mu.len() != horizon - 1 {
            return Err(invalid(format!("mu must have H-1 = {} layers", horizon - 1)));
        }
        let sqrt_d = (d as f64).sqrt();
        let mut mu = Vec::with_capacity(horizon - 1);
        for (h, rows) in parts.mu.iter().enumerate() {
            let next = parts.states_per_layer[h + 1];
            if rows.len() != next || rows.iter().any(|r| r.len() != d) {
                return Err(invalid(format!("mu layer {h} must be {next} x {d}")));
            }
            let m = Matrix::from_fn(next, d, |i, j| rows[i][j]);
            if !m.iter().all(|x| x.is_finite()) || m.norm() > sqrt_d + NORM_TOL {
                return Err(invalid(format!("mu layer {h} must be finite with Frobenius norm <= sqrt(d)")));
            }
            mu.push(m);
        }

        if parts.theta.len() != horizon || parts.theta.iter().any(|t| t.len() != d) {
            return Err(invalid("theta must have one length-d vector per layer"));
        }
        let theta: Vec<Vector> = parts.theta.iter().map(|t| Vector::from_column_slice(t)).collect();
        for (h, t) in theta.iter().enumerate() {
            if !t.iter().all(|x| x.is_finite()) || t.norm() > sqrt_d + NORM_TOL {
                return Err(invalid(format!("theta layer {h} must be finite with norm <= sqrt(d)")));
            }
        }

        if parts.init.len() != parts.states_per_layer[0] {
            return Err(invalid("init must cover the layer-0 states"));
        }
        if parts.init.iter().any(|&p| !(p >= 0.0)) || (parts.init.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
            return Err(invalid("init must be a probability distribution"));
        }

        let mut transitions = Vec::with_capacity(horizon - 1);
        for h in 0..horizon - 1 {
            let mut layer = Vec::with_capacity(phi[h].len());
            for (s, actions) in phi[h].iter().enumerate() {
                let mut row = Vec::with_capacity(actions.len());
                for (a, f) in actions.iter().enumerate() {
                    let p = &mu[h] * f;
                    row.push(project_to_simplex(p.as_slice()).ok_or_else(|| {
                        invalid(format!("P_{h}(.|{s},{a}) = mu*phi is not a distribution"))
                    })?);
                }
                layer.push(row);
            }
            transitions.push(layer);
        }
        let cumulative = transitions
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|p| {
                                let mut acc = 0.0;
                                p.iter()
                                    .map(|x| {
                                        acc += x;
                                        acc
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let mut reward_values = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let mut layer = Vec::with_capacity(phi[h].len());
            for (s, actions) in phi[h].iter().enumerate() {
                let mut row = Vec::with_capacity(actions.len());
                for (a, f) in actions.iter().enumerate() {
                    let r = f.dot(&theta[h]);
                    if !(-1e-12..=1.0 + 1e-12).contains(&r) {
                        return Err(invalid(format!("reward r_{h}({s},{a}) = {r} outside [0,1]")));
                    }
                    row.push(r.clamp(0.0, 1.0));
                }
                layer.push(row);
            }
            reward_values.push(layer);
        }

        Ok(Self {
            parts,
            phi,
            mu,
            theta,
            transitions,
            cumulative,
            rewards: RewardTable::from_values(reward_values),
        })
    }

    pub fn d(&self) -> usize {
        self.parts.d
    }

    pub fn horizon(&self) -> usize {
        self.parts.horizon
    }

    pub fn num_actions(&self) -> usize {
        self.parts.num_actions
    }

    pub fn num_states(&self, h: usize) -> usize {
        self.parts.states_per_layer[h]
    }

    pub fn states_per_layer(&self) -> &[usize] {
        &self.parts.states_per_layer
    }

    pub fn num_actions_at(&self, h: usize, s: usize) -> usize {
        self.phi[h][s].len()
    }

    #[inline]
    pub fn phi(&self, h: usize, s: usize, a: usize) -> &Vector {
        &self.phi[h][s][a]
    }

    pub fn mu(&self, h: usize) -> &Matrix {
        &self.mu[h]
    }

    pub fn theta(&self, h: usize) -> &Vector {
        &self.theta[h]
    }

    /// Distribution over layer `h + 1` states. Panics on the final layer.
    #[inline]
    pub fn transition(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.transitions[h][s][a]
    }

    pub(crate) fn cumulative(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.cumulative[h][s][a]
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards.get(h, s, a)
    }

    pub fn rewards(&self) -> &RewardTable {
        &self.rewards
    }

    pub fn init(&self) -> &[f64] {
        &self.parts.init
    }

    /// The initial state when `init` is a point mass.
    pub fn fixed_initial_state(&self) -> Option<usize> {
        let support: Vec<usize> = (0..self.parts.init.len()).filter(|&s| self.parts.init[s] > 0.0).collect();
        match support.as_slice() {
            [s] => Some(*s),
            _ => None,
        }
    }

    /// Total number of `(state, action)` pairs at layer `h`.
    pub fn num_pairs(&self, h: usize) -> usize {
        (0..self.num_states(h)).map(|s| self.num_actions_at(h, s)).sum()
    }

    /// True when every layer shares the same states, features, measures and rewards.
    pub fn is_stationary(&self) -> bool {
        let p = &self.parts;
        p.states_per_layer.windows(2).all(|w| w[0] == w[1])
            && p.phi.windows(2).all(|w| w[0] == w[1])
            && p.mu.windows(2).all(|w| w[0] == w[1])
            && p.theta.windows(2).all(|w| w[0] == w[1])
    }

    pub fn parts(&self) -> &InstanceParts {
        &self.parts
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.parts)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.parts)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Clamps tiny negative entries and renormalizes; `None` if `p` is further
/// than [`SIMPLEX_TOL`] from the probability simplex.
fn project_to_simplex(p: &[f64]) -> Option<Vec<f64>> {
    if p.iter().any(|x| !x.is_finite() || *x < -SIMPLEX_TOL) {
        return None;
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return None;
    }
    let clamped: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    Some(clamped.into_iter().map(|x| x / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_layer_parts() -> InstanceParts {
        InstanceParts {
            d: 2,
            horizon: 2,
            num_actions: 2,
            states_per_layer: vec![1, 2],
            phi: vec![
                vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
                vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
            ],
            mu: vec![vec![vec![0.25, 1.0], vec![0.75, 0.0]]],
            theta: vec![vec![0.2, 0.4], vec![1.0, 0.0]],
            init: vec![1.0],
        }
    }

    #[test]
    fn builds_transitions_and_rewards() {
        let inst = LinearMdpInstance::new(two_layer_parts()).unwrap();
        assert_eq!(inst.transition(0, 0, 0), &[0.25, 0.75]);
        assert_eq!(inst.transition(0, 0, 1), &[1.0, 0.0]);
        assert!((inst.reward(0, 0, 1) - 0.4).abs() < 1e-15);
        assert_eq!(inst.reward(1, 1, 0), 0.0);
        assert_eq!(inst.fixed_initial_state(), Some(0));
        assert_eq!(inst.num_pairs(0), 2);
    }

    #[test]
    fn rejects_oversized_features() {
        let mut p = two_layer_parts();
        p.phi[0][0][0] = vec![1.0, 0.5];
        assert!(matches!(LinearMdpInstance::new(p), Err(DerlError::InvalidInstance(_))));
    }

    #[test]
    fn rejects_non_distribution_transitions() {
        let mut p = two_layer_parts();
        p.mu[0][0][0] = 0.5;
        assert!(LinearMdpInstance::new(p).is_err());
    }

    #[test]
    fn clamps_rounding_noise() {
        let mut p = two_layer_parts();
        p.mu[0][0][1] = 1.0 + 1e-12;
        p.mu[0][1][1] = -1e-12;
        let inst = LinearMdpInstance::new(p).unwrap();
        let t = inst.transition(0, 0, 1);
        assert_eq!(t[1], 0.0);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_rewards_outside_unit_interval() {
        let mut p = two_layer_parts();
        p.theta[0] = vec![1.2, 0.0];
        assert!(LinearMdpInstance::new(p).is_err());
    }

    #[test]
    fn json_uses_documented_field_names() {
        let inst = LinearMdpInstance::new(two_layer_parts()).unwrap();
        let json: serde_json::Value = serde_json::from_str(&inst.to_json().unwrap()).unwrap();
        for key in ["d", "H", "num_actions", "states_per_layer", "phi", "mu", "theta", "init"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        let back = LinearMdpInstance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(back.parts(), inst.parts());
    }
}
