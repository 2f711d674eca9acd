//! Embeds a layered instance into a stationary one and compares optimal values.

use derl::hard::{build_hard_mdp, stationary_expand, HardInstanceSpec};
use derl::mdp::{optimal_value_exact, RewardSpec};

fn main() -> derl::Result<()> {
    let spec = HardInstanceSpec { d: 4, horizon: 3, h_sharp: 1, i_sharp: 2, core_indices: vec![0; 3], epsilon: 0.2 };
    let layered = build_hard_mdp(&spec)?;
    let stationary = stationary_expand(&layered)?;
    let h = layered.horizon();
    println!("feature dim {} -> {}", layered.d(), stationary.d());
    println!("stationary: {}", stationary.is_stationary());
    println!("optimal value {:.6} vs {:.6}",
        optimal_value_exact(&layered, &RewardSpec::Native, h)?.0,
        optimal_value_exact(&stationary, &RewardSpec::Native, h)?.0);
    Ok(())
}
