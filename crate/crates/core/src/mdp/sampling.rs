use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::instance::LinearMdpInstance;
use crate::mdp::policy::{DeterministicPolicy, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub layer: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    /// `None` on the final layer.
    pub next_state: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

fn draw_index<R: Rng + ?Sized>(rng: &mut R, cumulative: &[f64]) -> usize {
    let u: f64 = rng.random();
    let last = cumulative.len() - 1;
    cumulative.iter().position(|&c| u < c).unwrap_or(last).min(last)
}

fn draw_initial<R: Rng + ?Sized>(instance: &LinearMdpInstance, rng: &mut R) -> usize {
    match instance.fixed_initial_state() {
        Some(s) => s,
        None => {
            let mut acc = 0.0;
            let cumulative: Vec<f64> = instance
                .init()
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            draw_index(rng, &cumulative)
        }
    }
}

/// Samples one episode; the policy is validated first.
pub fn sample_episode<R: Rng + ?Sized>(instance: &LinearMdpInstance, policy: &Policy, rng: &mut R) -> Result<Trajectory> {
    policy.validate(instance)?;
    Ok(rollout(instance, policy, instance.horizon(), rng))
}

/// Samples the first `layers` steps of an episode without validating the policy.
pub(crate) fn rollout<R: Rng + ?Sized>(instance: &LinearMdpInstance, policy: &Policy, layers: usize, rng: &mut R) -> Trajectory {
    let member: Option<&DeterministicPolicy> = match policy {
        Policy::UniformMixture(members) => Some(&members[rng.random_range(0..members.len())]),
        _ => None,
    };
    let horizon = instance.horizon();
    let mut steps = Vec::with_capacity(layers);
    let mut s = draw_initial(instance, rng);
    for h in 0..layers.min(horizon) {
        let a = match (policy, member) {
            (_, Some(m)) => m.action(h, s),
            (Policy::Deterministic(p), _) => p.action(h, s),
            (Policy::UniformTail { head, from_layer }, _) => {
                if h < *from_layer {
                    head.action(h, s)
                } else {
                    rng.random_range(0..instance.num_actions_at(h, s))
                }
            }
            (Policy::UniformMixture(_), None) => unreachable!("mixture member drawn above"),
        };
        let next_state = (h + 1 < horizon).then(|| draw_index(rng, instance.cumulative(h, s, a)));
        steps.push(Step { layer: h, state: s, action: a, reward: instance.reward(h, s, a), next_state });
        if let Some(sp) = next_state {
            s = sp;
        }
    }
    Trajectory { steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::generators;
    use crate::rng::SeedStream;

    #[test]
    fn zero_reward_chain_yields_zero_rewards() {
        let inst = generators::single_action_chain(2, 5, 0.0);
        let pi = Policy::Deterministic(DeterministicPolicy::first_action(&inst));
        let t = sample_episode(&inst, &pi, &mut SeedStream::new(1).trajectory_rng(0, 0)).unwrap();
        assert_eq!(t.steps.len(), 5);
        assert!(t.steps.iter().all(|s| s.reward == 0.0));
        assert_eq!(t.steps.iter().map(|s| s.layer).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        assert_eq!(t.steps[4].next_state, None);
    }

    #[test]
    fn fixed_seed_reproduces_trajectory() {
        let inst = generators::tabular_random(3, 2, 4, 9);
        let pi = Policy::UniformTail { head: DeterministicPolicy::first_action(&inst), from_layer: 1 };
        let s = SeedStream::new(5);
        let a = sample_episode(&inst, &pi, &mut s.trajectory_rng(2, 3)).unwrap();
        let b = sample_episode(&inst, &pi, &mut s.trajectory_rng(2, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_policy_entries_are_configuration_errors() {
        let inst = generators::tabular_random(3, 2, 4, 9);
        let pi = Policy::Deterministic(DeterministicPolicy::new(vec![vec![0; 3]]));
        assert!(sample_episode(&inst, &pi, &mut SeedStream::new(0).trajectory_rng(0, 0)).is_err());
    }
}
