//! Mean deployments of reward-aware exploration against d·H on a small grid.

use derl::harness::{lower_bound_scaling, AlgorithmParams, ScalingGrid};

fn main() -> derl::Result<()> {
    let grid = ScalingGrid { d: vec![4, 5], horizon: vec![3, 4], epsilon: 0.1 };
    let params = AlgorithmParams { n: 2000, i_max: 2, ..AlgorithmParams::default() };
    let report = lower_bound_scaling(&grid, &params, &[0, 1, 2, 3], None)?;
    let fit = report.aggregate.scaling.expect("scaling fit");
    for (x, k) in &fit.points {
        println!("dH = {x:3}: mean K {k:.2}");
    }
    println!("slope {:?}, R^2 {:?}", fit.slope, fit.r_squared);
    println!("policy-cover runs use K = H: {}", fit.arb_k_equals_h);
    Ok(())
}
