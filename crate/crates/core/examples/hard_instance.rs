//! Builds one hard instance, brute-forces every deterministic policy and
//! shows that exactly one attains the optimum.

use derl::hard::{build_hard_mdp, HardInstanceSpec};
use derl::mdp::{enumerate_deterministic_policies, evaluate_policy_exact, RewardSpec};

fn main() -> derl::Result<()> {
    let spec = HardInstanceSpec { d: 4, horizon: 4, h_sharp: 2, i_sharp: 3, core_indices: vec![0; 4], epsilon: 0.1 };
    let inst = build_hard_mdp(&spec)?;
    println!("feature dim {}, built horizon {}", inst.d(), inst.horizon());
    let policies = enumerate_deterministic_policies(&inst, inst.horizon(), 1 << 20)?;
    let mut values: Vec<f64> = policies
        .iter()
        .map(|p| evaluate_policy_exact(&inst, &p.clone().into(), &RewardSpec::Native, inst.horizon()))
        .collect::<derl::Result<_>>()?;
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    values.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    println!("{} policies, optimum {:.6} (closed form {:.6})", policies.len(), values[0], spec.optimal_value());
    println!("runner-up {:.6}, gap {:.6}", values[1], values[0] - values[1]);
    Ok(())
}
