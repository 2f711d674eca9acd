//! Reachability coefficients of bandits and a random instance.

use derl::arb::{reachability_coefficient, ReachabilityMethod};
use derl::mdp::generators::{bandit, simplex_random, SimplexParams};

fn main() -> derl::Result<()> {
    for d in 2..=4 {
        let r = reachability_coefficient(&bandit(d), ReachabilityMethod::BruteForce, 1000)?;
        println!("bandit d={d}: nu {:.5}, 1/sqrt(d) {:.5}", r.nu_min, 1.0 / (d as f64).sqrt());
    }
    let inst = simplex_random(SimplexParams {
        d: 3,
        states: 2,
        actions: 3,
        horizon: 2,
        feature_concentration: 0.5,
        seed: 9,
    })?;
    let bf = reachability_coefficient(&inst, ReachabilityMethod::BruteForce, 1000)?;
    let svd = reachability_coefficient(&inst, ReachabilityMethod::SvdLowerBound, 1000)?;
    println!("random instance: brute force {:?}, eigenvalue bound {:?}", bf.nu_per_layer, svd.nu_per_layer);
    Ok(())
}
