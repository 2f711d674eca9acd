//! Reward-aware layer-by-layer deployment on a hard instance.

use derl::det::{run_deterministic_derl, BetaSchedule, DetParams};
use derl::hard::{build_hard_mdp, enumerate_family_deterministic};
use derl::mdp::{evaluate_policy_exact, optimal_value_exact, RewardSpec};

fn main() -> derl::Result<()> {
    let family = enumerate_family_deterministic(4, 4, 0.1)?;
    let inst = build_hard_mdp(&family[4])?;
    let params = DetParams {
        epsilon: 0.1,
        delta: 0.1,
        c_k: 2.0,
        n: 5000,
        beta: BetaSchedule::Fixed { beta: 0.3 },
        seed: 7,
        record_trajectories: false,
    };
    let (policy, log) = run_deterministic_derl(&inst, &RewardSpec::Native, &params)?;
    for r in &log.records {
        println!("k={:2} h_k={} delta_k={:.4} advanced={}", r.k, r.h_k, r.delta_k, r.frontier_advanced);
    }
    let h = inst.horizon();
    let j = evaluate_policy_exact(&inst, &policy, &RewardSpec::Native, h)?;
    let (v, _) = optimal_value_exact(&inst, &RewardSpec::Native, h)?;
    println!("{:?} after {} of {} deployments, gap {:.4}", log.terminal, log.deployments(), log.budget, v - j);
    log.write_csv(&inst, &RewardSpec::Native, std::io::stdout())?;
    Ok(())
}
