//! Policy-cover exploration with exactly one deployment per layer.

use derl::arb::{reachability_coefficient, run_arbitrary_derl, ArbParams, ReachabilityMethod};
use derl::det::plan_from_dataset;
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
    let nu = reachability_coefficient(&inst, ReachabilityMethod::BruteForce, 10_000)?;
    println!("nu per layer {:?}", nu.nu_per_layer);
    let params = ArbParams { i_max: 30, eps0: None, beta_prime: 0.1, nu_min: nu.nu_min, n: 5000, seed: 3 };
    let run = run_arbitrary_derl(&inst, &params)?;
    for c in &run.covers {
        println!("layer {}: {} policies, {} iterations, converged {}", c.layer, c.policies.len(), c.iterations, c.converged);
    }
    println!("deployments {} (horizon {}), eps0 {:.2e}", run.deployments, inst.horizon(), run.eps0);
    let reward = RewardSpec::Linear { theta: random_linear_reward(3, 3, 1000) };
    let (pi, _) = plan_from_dataset(&inst, &run.dataset.layers, &reward, 3, 0.1)?;
    let gap = optimal_value_exact(&inst, &reward, 3)?.0 - evaluate_policy_exact(&inst, &pi, &reward, 3)?;
    println!("planning gap {gap:.4}");
    Ok(())
}
