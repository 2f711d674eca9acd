use serde::{Deserialize, Serialize};

use crate::error::{DerlError, Result};
use crate::mdp::instance::LinearMdpInstance;

/// A deterministic Markov policy: `actions[h][s]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    actions: Vec<Vec<usize>>,
}

impl DeterministicPolicy {
    pub fn new(actions: Vec<Vec<usize>>) -> Self {
        Self { actions }
    }

    /// Always the lowest-indexed action.
    pub fn first_action(instance: &LinearMdpInstance) -> Self {
        Self::from_fn(instance, |_, _| 0)
    }

    pub fn from_fn(instance: &LinearMdpInstance, mut f: impl FnMut(usize, usize) -> usize) -> Self {
        let actions = (0..instance.horizon())
            .map(|h| (0..instance.num_states(h)).map(|s| f(h, s)).collect())
            .collect();
        Self { actions }
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h][s]
    }

    pub fn set_action(&mut self, h: usize, s: usize, a: usize) {
        self.actions[h][s] = a;
    }

    pub fn actions(&self) -> &[Vec<usize>] {
        &self.actions
    }

    /// Checks that every `(layer, state)` has a legal action.
    pub fn validate(&self, instance: &LinearMdpInstance) -> Result<()> {
        if self.actions.len() != instance.horizon() {
            return Err(DerlError::Config(format!(
                "policy covers {} layers, instance has {}",
                self.actions.len(),
                instance.horizon()
            )));
        }
        for (h, layer) in self.actions.iter().enumerate() {
            if layer.len() != instance.num_states(h) {
                return Err(DerlError::Config(format!("policy is missing states at layer {h}")));
            }
            for (s, &a) in layer.iter().enumerate() {
                if a >= instance.num_actions_at(h, s) {
                    return Err(DerlError::Config(format!("policy picks illegal action {a} at ({h},{s})")));
                }
            }
        }
        Ok(())
    }

    /// Resets the action of every state this policy cannot reach to `0`, so
    /// behaviourally identical policies compare equal.
    pub fn canonicalize(&self, instance: &LinearMdpInstance) -> Self {
        let mut out = self.clone();
        let mut reach: Vec<bool> = instance.init().iter().map(|&p| p > 0.0).collect();
        for h in 0..instance.horizon() {
            for s in 0..instance.num_states(h) {
                if !reach[s] {
                    out.actions[h][s] = 0;
                }
            }
            if h + 1 < instance.horizon() {
                let mut next = vec![false; instance.num_states(h + 1)];
                for s in (0..instance.num_states(h)).filter(|&s| reach[s]) {
                    for (sp, &p) in instance.transition(h, s, self.actions[h][s]).iter().enumerate() {
                        if p > 0.0 {
                            next[sp] = true;
                        }
                    }
                }
                reach = next;
            }
        }
        out
    }
}

/// Policies that can be deployed or evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    Deterministic(DeterministicPolicy),
    /// One member is drawn uniformly at the start of each episode and followed
    /// for the whole episode.
    UniformMixture(Vec<DeterministicPolicy>),
    /// Follows `head` on layers `< from_layer`, then picks uniformly random
    /// actions at every later step.
    UniformTail { head: DeterministicPolicy, from_layer: usize },
}

impl From<DeterministicPolicy> for Policy {
    fn from(p: DeterministicPolicy) -> Self {
        Policy::Deterministic(p)
    }
}

impl Policy {
    pub fn validate(&self, instance: &LinearMdpInstance) -> Result<()> {
        match self {
            Policy::Deterministic(p) => p.validate(instance),
            Policy::UniformMixture(members) => {
                if members.is_empty() {
                    return Err(DerlError::Config("uniform mixture must be non-empty".into()));
                }
                members.iter().try_for_each(|p| p.validate(instance))
            }
            Policy::UniformTail { head, .. } => head.validate(instance),
        }
    }

    /// Probability of action `a` at `(h, s)` for Markov variants; `None` for mixtures.
    pub(crate) fn markov_prob(&self, instance: &LinearMdpInstance, h: usize, s: usize, a: usize) -> Option<f64> {
        match self {
            Policy::Deterministic(p) => Some(if p.action(h, s) == a { 1.0 } else { 0.0 }),
            Policy::UniformTail { head, from_layer } => Some(if h < *from_layer {
                if head.action(h, s) == a {
                    1.0
                } else {
                    0.0
                }
            } else {
                1.0 / instance.num_actions_at(h, s) as f64
            }),
            Policy::UniformMixture(_) => None,
        }
    }
}
