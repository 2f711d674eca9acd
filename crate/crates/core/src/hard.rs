//! The lower-bound instance family and the stationary expansion.
//!
//! A spec with template horizon `H` builds an instance with `H + 1` layers.
//! Layer 0 holds only `s0`, whose `d` actions lead to the layer-1 states.
//! Each template layer `t = 1..=H` has `d + 2` states: indices `0..d` are
//! `s_t^i` (the core state sits at `core_indices[t-1]`), index `d` is the
//! absorbing `u¹` and index `d + 1` is `u²`.
//!
//! Features are one-hot over `2d + 1` coordinates: core actions use
//! `0..d`, the `d - 1` normal states use `d..2d-1` in index order, and the
//! absorbing states use `2d - 1` and `2d`.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{DerlError, Result};
use crate::linalg::Matrix;
use crate::mdp::instance::{InstanceParts, LinearMdpInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceSpec {
    pub d: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    /// Template layer of the bumped state, in `1..H`.
    pub h_sharp: usize,
    /// Index of the bumped state within its layer, in `0..d`.
    pub i_sharp: usize,
    /// Core state index for template layers `1..=H`.
    pub core_indices: Vec<usize>,
    /// `0` encodes the null instance.
    pub epsilon: f64,
}

fn bad(msg: impl Into<String>) -> DerlError {
    DerlError::InvalidInstance(msg.into())
}

impl HardInstanceSpec {
    pub fn validate(&self) -> Result<()> {
        let (d, h) = (self.d, self.horizon);
        if d < 4 {
            return Err(bad(format!("d = {d} must be at least 4")));
        }
        if h < 2 {
            return Err(bad(format!("H = {h} must be at least 2")));
        }
        if !(1..h).contains(&self.h_sharp) {
            return Err(bad(format!("h_sharp = {} outside 1..{h}", self.h_sharp)));
        }
        if self.i_sharp >= d {
            return Err(bad(format!("i_sharp = {} outside 0..{d}", self.i_sharp)));
        }
        if self.core_indices.len() != h || self.core_indices.iter().any(|&i| i >= d) {
            return Err(bad(format!("core_indices must list {h} indices in 0..{d}")));
        }
        if self.core_indices[self.h_sharp - 1] == self.i_sharp {
            return Err(bad("the bumped state cannot be the core state of its layer"));
        }
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(bad(format!("epsilon = {} outside [0, 0.5)", self.epsilon)));
        }
        Ok(())
    }

    /// Feature dimension of the built instance.
    pub fn feature_dim(&self) -> usize {
        2 * self.d + 1
    }

    /// Number of layers of the built instance.
    pub fn built_horizon(&self) -> usize {
        self.horizon + 1
    }

    /// Exact optimal value of the built instance.
    pub fn optimal_value(&self) -> f64 {
        (self.horizon + 1) as f64 / 2.0 + self.epsilon
    }

    /// Feature coordinate of the single action of normal state `i` at template layer `t`.
    fn normal_coord(&self, t: usize, i: usize) -> usize {
        let core = self.core_indices[t - 1];
        self.d + if i < core { i } else { i - 1 }
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Builds the instance described by `spec`.
pub fn build_hard_mdp(spec: &HardInstanceSpec) -> Result<LinearMdpInstance> {
    spec.validate()?;
    let d = spec.d;
    let big_h = spec.horizon;
    let dim = spec.feature_dim();
    let (u1, u2) = (d, d + 1);
    let (c1, c2) = (2 * d - 1, 2 * d);

    let mut phi = vec![vec![(0..d).map(|a| unit(dim, a)).collect::<Vec<_>>()]];
    for t in 1..=big_h {
        let core = spec.core_indices[t - 1];
        let mut layer: Vec<Vec<Vec<f64>>> = (0..d)
            .map(|i| {
                if i == core {
                    (0..d).map(|a| unit(dim, a)).collect()
                } else {
                    vec![unit(dim, spec.normal_coord(t, i))]
                }
            })
            .collect();
        layer.push(vec![unit(dim, c1)]);
        layer.push(vec![unit(dim, c2)]);
        phi.push(layer);
    }

    // mu[t][s'][j]: probability of landing in s' at layer t + 1 from the pair with coordinate j.
    let mut mu = Vec::with_capacity(big_h);
    for t in 0..big_h {
        let mut m = vec![vec![0.0; dim]; d + 2];
        for (j, row) in m.iter_mut().enumerate().take(d) {
            row[j] = 1.0;
        }
        if t >= 1 {
            let core = spec.core_indices[t - 1];
            for i in (0..d).filter(|&i| i != core) {
                let j = spec.normal_coord(t, i);
                let bump = if t == spec.h_sharp && i == spec.i_sharp { spec.epsilon } else { 0.0 };
                m[u1][j] = 0.5 - bump;
                m[u2][j] = 0.5 + bump;
            }
            m[u1][c1] = 1.0;
            m[u2][c2] = 1.0;
        }
        mu.push(m);
    }

    let mut theta = vec![vec![0.5; dim]; big_h + 1];
    theta[big_h][c1] = 0.0;
    theta[big_h][c2] = 1.0;

    let mut states_per_layer = vec![d + 2; big_h + 1];
    states_per_layer[0] = 1;
    LinearMdpInstance::new(InstanceParts {
        d: dim,
        horizon: big_h + 1,
        num_actions: d,
        states_per_layer,
        phi,
        mu,
        theta,
        init: vec![1.0],
    })
}

/// The `(d-1)(H-1)` bumped members with core path `s_t^0`, followed by the
/// null instance (`epsilon = 0`).
pub fn enumerate_family_deterministic(d: usize, horizon: usize, epsilon: f64) -> Result<Vec<HardInstanceSpec>> {
    if d < 4 || horizon < 3 {
        return Err(DerlError::Parameter(format!("family needs d >= 4 and H >= 3, got d = {d}, H = {horizon}")));
    }
    let spec = |h_sharp, i_sharp, epsilon| HardInstanceSpec {
        d,
        horizon,
        h_sharp,
        i_sharp,
        core_indices: vec![0; horizon],
        epsilon,
    };
    let mut family: Vec<HardInstanceSpec> =
        (1..horizon).flat_map(|h| (1..d).map(move |i| (h, i))).map(|(h, i)| spec(h, i, epsilon)).collect();
    family.push(spec(1, 1, 0.0));
    for s in &family {
        s.validate()?;
    }
    Ok(family)
}

pub fn save_manifest(specs: &[HardInstanceSpec], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(specs)?)?;
    Ok(())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<HardInstanceSpec>> {
    let specs: Vec<HardInstanceSpec> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

/// Index of `(s, h)` in the expanded state set.
pub fn expanded_state(instance: &LinearMdpInstance, h: usize, s: usize) -> usize {
    instance.states_per_layer()[..h].iter().sum::<usize>() + s
}

/// Re-encodes a layered instance as one with identical dynamics at every step
/// over the state set `S × [H]`, with features `e_h ⊗ φ_h`.
///
/// States of the final layer need some outgoing distribution even though they
/// are only reached at the last step; they return to the initial layer. This
/// needs a vector `c` with `cᵀφ = 1` on every final-layer pair, which fails
/// for features that admit none.
pub fn stationary_expand(instance: &LinearMdpInstance) -> Result<LinearMdpInstance> {
    let d = instance.d();
    let big_h = instance.horizon();
    let dim = d * big_h;
    let total: usize = instance.states_per_layer().iter().sum();
    let offsets: Vec<usize> = (0..big_h).map(|h| expanded_state(instance, h, 0)).collect();

    let embed = |h: usize, f: &[f64]| {
        let mut v = vec![0.0; dim];
        v[h * d..(h + 1) * d].copy_from_slice(f);
        v
    };
    let mut layer_phi = Vec::with_capacity(total);
    for h in 0..big_h {
        for s in 0..instance.num_states(h) {
            layer_phi.push((0..instance.num_actions_at(h, s)).map(|a| embed(h, instance.phi(h, s, a).as_slice())).collect());
        }
    }

    let mut mu_rows = vec![vec![0.0; dim]; total];
    for h in 0..big_h.saturating_sub(1) {
        let m = instance.mu(h);
        for sp in 0..instance.num_states(h + 1) {
            for j in 0..d {
                mu_rows[offsets[h + 1] + sp][h * d + j] = m[(sp, j)];
            }
        }
    }
    if big_h > 1 {
        let last = big_h - 1;
        let feats: Vec<&DVector<f64>> = (0..instance.num_states(last))
            .flat_map(|s| (0..instance.num_actions_at(last, s)).map(move |a| (s, a)))
            .map(|(s, a)| instance.phi(last, s, a))
            .collect();
        let a = Matrix::from_fn(feats.len(), d, |r, j| feats[r][j]);
        let ones = DVector::from_element(feats.len(), 1.0);
        let c = a
            .clone()
            .svd(true, true)
            .solve(&ones, 1e-12)
            .map_err(|e| DerlError::Numeric(format!("least squares failed: {e}")))?;
        if (&a * &c - &ones).amax() > 1e-9 {
            return Err(DerlError::InvalidInstance(
                "final-layer features admit no normalising functional".into(),
            ));
        }
        for (s, &p) in instance.init().iter().enumerate() {
            for j in 0..d {
                mu_rows[offsets[0] + s][last * d + j] = c[j] * p;
            }
        }
    }

    let theta: Vec<f64> = (0..big_h).flat_map(|h| instance.theta(h).iter().copied().collect::<Vec<_>>()).collect();
    let mut init = vec![0.0; total];
    init[..instance.num_states(0)].copy_from_slice(instance.init());

    LinearMdpInstance::new(InstanceParts {
        d: dim,
        horizon: big_h,
        num_actions: instance.num_actions(),
        states_per_layer: vec![total; big_h],
        phi: vec![layer_phi; big_h],
        mu: vec![mu_rows; big_h - 1],
        theta: vec![theta; big_h],
        init,
    })
}
