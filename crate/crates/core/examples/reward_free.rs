//! One reward-free exploration dataset, then planning for several rewards.

use derl::det::{plan_from_dataset, run_reward_free_exploration, BetaSchedule, DetParams};
use derl::mdp::generators::{random_linear_reward, simplex_random, SimplexParams};
use derl::mdp::{evaluate_policy_exact, optimal_value_exact, RewardSpec};

fn main() -> derl::Result<()> {
    let inst = simplex_random(SimplexParams {
        d: 3,
        states: 3,
        actions: 3,
        horizon: 3,
        feature_concentration: 0.3,
        seed: 100,
    })?;
    let params = DetParams {
        epsilon: 0.15,
        delta: 0.1,
        c_k: 2.0,
        n: 5000,
        beta: BetaSchedule::Fixed { beta: 0.1 },
        seed: 1,
        record_trajectories: false,
    };
    let (data, log) = run_reward_free_exploration(&inst, &params)?;
    println!("exploration: {} deployments, {:?}", log.deployments(), log.terminal);
    for r in 0..3 {
        let reward = RewardSpec::Linear { theta: random_linear_reward(3, 3, 1000 + r) };
        let (pi, v_hat) = plan_from_dataset(&inst, &data.layers, &reward, 3, 0.1)?;
        let j = evaluate_policy_exact(&inst, &pi, &reward, 3)?;
        let (v, _) = optimal_value_exact(&inst, &reward, 3)?;
        println!("reward {r}: planned value {v_hat:.4}, true {j:.4}, optimum {v:.4}");
    }
    Ok(())
}
