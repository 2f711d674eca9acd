use serde::{Deserialize, Serialize};

use crate::error::{DerlError, Result};
use crate::linalg::Vector;
use crate::mdp::instance::{LinearMdpInstance, RewardTable, NORM_TOL};

/// Which reward an evaluation or planner should use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardSpec {
    /// The instance's own `θ_h`.
    #[default]
    Native,
    /// Identically zero.
    Zero,
    /// Per-layer replacement vectors for `θ_h`.
    Linear { theta: Vec<Vec<f64>> },
    /// Explicit `[h][s][a]` values.
    Tabular { values: Vec<Vec<Vec<f64>>> },
}

impl RewardSpec {
    /// Resolves the spec into a table, checking that rewards lie in `[0, 1]`.
    pub fn table(&self, instance: &LinearMdpInstance) -> Result<RewardTable> {
        match self {
            RewardSpec::Native => Ok(instance.rewards().clone()),
            RewardSpec::Zero => Ok(RewardTable::zeros(instance)),
            RewardSpec::Linear { theta } => {
                if theta.len() != instance.horizon() || theta.iter().any(|t| t.len() != instance.d()) {
                    return Err(DerlError::Config("reward theta must have one length-d vector per layer".into()));
                }
                let sqrt_d = (instance.d() as f64).sqrt();
                let theta: Vec<Vector> = theta.iter().map(|t| Vector::from_column_slice(t)).collect();
                if theta.iter().any(|t| t.norm() > sqrt_d + NORM_TOL) {
                    return Err(DerlError::Config("reward theta exceeds norm sqrt(d)".into()));
                }
                let mut bad = None;
                let table = RewardTable::from_fn(instance, |h, s, a| {
                    let r = instance.phi(h, s, a).dot(&theta[h]);
                    if !(-1e-12..=1.0 + 1e-12).contains(&r) {
                        bad = Some((h, s, a, r));
                    }
                    r.clamp(0.0, 1.0)
                });
                match bad {
                    Some((h, s, a, r)) => Err(DerlError::Config(format!("linear reward r_{h}({s},{a}) = {r} outside [0,1]"))),
                    None => Ok(table),
                }
            }
            RewardSpec::Tabular { values } => {
                let shape_ok = values.len() == instance.horizon()
                    && values.iter().enumerate().all(|(h, layer)| {
                        layer.len() == instance.num_states(h)
                            && layer.iter().enumerate().all(|(s, row)| row.len() == instance.num_actions_at(h, s))
                    });
                if !shape_ok {
                    return Err(DerlError::Config("tabular reward shape does not match the instance".into()));
                }
                if values.iter().flatten().flatten().any(|r| !(0.0..=1.0).contains(r)) {
                    return Err(DerlError::Config("tabular rewards must lie in [0,1]".into()));
                }
                Ok(RewardTable::from_values(values.clone()))
            }
        }
    }
}
