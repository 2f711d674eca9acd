//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use derl::arb::{estimate_cov_matrix, reachability_coefficient, ReachabilityMethod};
use derl::det::BetaSchedule;
use derl::hard::{build_hard_mdp, enumerate_family_deterministic};
use derl::harness::{
    lower_bound_scaling, run_experiment, AlgorithmParams, ExperimentConfig, ExperimentKind, ExperimentReport,
    InstanceSource, OutputPaths, ScalingGrid, SCHEMA_VERSION,
};
use derl::lemma::{run_fuzz_suite, FuzzConfig};
use derl::linalg::max_abs_entry;
use derl::lsvi::exhaustive_data;
use derl::mdp::dp::{evaluate_with_table, optimal_with_table};
use derl::mdp::generators::{bandit, simplex_random, SimplexParams};
use derl::mdp::{enumerate_deterministic_policies, expected_covariance, DeterministicPolicy};
use derl::Result;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn timed(limit: Duration, f: impl FnOnce() -> Result<Outcome>) -> Outcome {
    let start = Instant::now();
    let mut out = f().unwrap_or_else(|e| Outcome { pass: false, detail: format!("error: {e}") });
    let took = start.elapsed();
    out.detail = format!("{} [{:.1}s, limit {}s]", out.detail, took.as_secs_f64(), limit.as_secs());
    out.pass &= took <= limit;
    out
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

fn hard_exactness() -> Result<Outcome> {
    let family = enumerate_family_deterministic(4, 4, 0.1)?;
    let mut checked = 0;
    let mut worst = 0.0_f64;
    let mut unique = true;
    for spec in family.iter().filter(|s| s.epsilon > 0.0) {
        let inst = build_hard_mdp(spec)?;
        let h = inst.horizon();
        let table = inst.rewards().clone();
        let (v, _) = optimal_with_table(&inst, &table, h)?;
        worst = worst.max((v - spec.optimal_value()).abs());
        let mut optimal = BTreeSet::new();
        for p in enumerate_deterministic_policies(&inst, h, 1 << 16)? {
            let j = evaluate_with_table(&inst, &p.clone().into(), &table, h)?;
            if (v - j).abs() <= 1e-9 {
                optimal.insert(p.canonicalize(&inst));
            } else {
                worst = worst.max((v - j - spec.epsilon).abs());
            }
        }
        unique &= optimal.len() == 1;
        checked += 1;
    }
    Ok(Outcome {
        pass: unique && worst <= 1e-9,
        detail: format!("{checked} instances, unique optimum {unique}, max deviation from gap {worst:.1e}"),
    })
}

fn det_report() -> Result<ExperimentReport> {
    run_experiment(&ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        experiment: ExperimentKind::DetDerl,
        instance: Some(InstanceSource::HardFamily { d: 4, horizon: 4, epsilon: 0.1 }),
        params: AlgorithmParams {
            n: 5000,
            epsilon: 0.1,
            delta: 0.1,
            c_k: 2.0,
            beta: BetaSchedule::Fixed { beta: 0.3 },
            ..AlgorithmParams::default()
        },
        grid: None,
        fuzz: None,
        seeds: seeds(20),
        output: OutputPaths::default(),
    })
}

fn det_guarantee(report: &ExperimentReport) -> Outcome {
    let ok = report.rows.iter().filter(|r| r.success).count();
    let max_k = report.rows.iter().map(|r| r.deployments).max().unwrap_or(0);
    let budget = report.rows.first().and_then(|r| r.budget).unwrap_or(0);
    let template = 2 * 4 * 4 + 1;
    Outcome {
        pass: ok >= 18 && max_k <= budget,
        detail: format!(
            "{ok}/20 eps-optimal, max K {max_k} (budget {budget} on the built instance, {template} on template dims), mean K {:.1}",
            report.aggregate.mean_k
        ),
    }
}

fn frontier(report: &ExperimentReport) -> Outcome {
    let ok: usize = report.rows.iter().map(|r| r.frontier_ok).sum();
    let total: usize = report.rows.iter().map(|r| r.frontier_total).sum();
    let rate = report.aggregate.frontier_rate.unwrap_or(0.0);
    Outcome { pass: rate >= 0.9, detail: format!("{ok}/{total} frontier policies eps-optimal when truncated ({rate:.3})") }
}

fn optimism(report: &ExperimentReport) -> Outcome {
    let ok: usize = report.rows.iter().map(|r| r.optimism_ok).sum();
    let total: usize = report.rows.iter().map(|r| r.optimism_total).sum();
    let rate = report.aggregate.optimism_rate.unwrap_or(0.0);
    Outcome { pass: rate >= 0.95, detail: format!("{ok}/{total} deployments overestimate the truncated optimum ({rate:.3})") }
}

fn random_instance_source() -> InstanceSource {
    InstanceSource::RandomSimplex(SimplexParams {
        d: 3,
        states: 3,
        actions: 3,
        horizon: 3,
        feature_concentration: 0.3,
        seed: 100,
    })
}

fn reward_free() -> Result<Outcome> {
    let report = run_experiment(&ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        experiment: ExperimentKind::RewardFree,
        instance: Some(random_instance_source()),
        params: AlgorithmParams {
            n: 5000,
            epsilon: 0.15,
            beta: BetaSchedule::Fixed { beta: 0.1 },
            plan_beta: 0.1,
            num_rewards: 3,
            ..AlgorithmParams::default()
        },
        grid: None,
        fuzz: None,
        seeds: seeds(20),
        output: OutputPaths::default(),
    })?;
    let ok = report.rows.iter().filter(|r| r.success).count();
    let worst = report.rows.iter().filter_map(|r| r.suboptimality).fold(f64::NEG_INFINITY, f64::max);
    Ok(Outcome {
        pass: ok >= 18,
        detail: format!("{ok}/20 seeds 0.15-optimal for all 3 rewards, worst gap {worst:.4}, mean K {:.1}", report.aggregate.mean_k),
    })
}

fn scaling_report() -> Result<ExperimentReport> {
    let grid = ScalingGrid { d: vec![4, 6], horizon: vec![4, 6, 8], epsilon: 0.1 };
    let params = AlgorithmParams {
        n: 5000,
        beta: BetaSchedule::Fixed { beta: 0.3 },
        i_max: 2,
        nu_min: Some(0.0),
        ..AlgorithmParams::default()
    };
    lower_bound_scaling(&grid, &params, &seeds(10), None)
}

fn arb_count(scaling: &ExperimentReport) -> Result<Outcome> {
    let small = run_experiment(&ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        experiment: ExperimentKind::ArbDerl,
        instance: Some(random_instance_source()),
        params: AlgorithmParams { n: 5000, epsilon: 0.15, i_max: 30, beta_prime: 0.1, ..AlgorithmParams::default() },
        grid: None,
        fuzz: None,
        seeds: seeds(20),
        output: OutputPaths::default(),
    })?;
    let runs: Vec<_> = small.rows.iter().chain(&scaling.rows).collect();
    let exact = runs.iter().filter(|r| r.arb_deployments.is_some() && r.arb_deployments == r.arb_horizon).count();
    let planned = small.rows.iter().filter(|r| r.success).count();
    Ok(Outcome {
        pass: exact == runs.len(),
        detail: format!(
            "{exact}/{} runs used K = H ({} on the random instance, {} on the hard grid); planning 0.15-optimal in {planned}/20",
            runs.len(),
            small.rows.len(),
            scaling.rows.len()
        ),
    })
}

fn covariance_oracle() -> Result<Outcome> {
    let inst = simplex_random(SimplexParams { d: 3, states: 3, actions: 2, horizon: 3, feature_concentration: 1.0, seed: 21 })?;
    let top = inst.horizon() - 1;
    // 10⁴ samples per layer, spread evenly over its state-action pairs.
    let data: Vec<_> = (0..top)
        .map(|h| Ok(exhaustive_data(&inst, 10_000 / inst.num_pairs(h), 77)?.swap_remove(h)))
        .collect::<Result<_>>()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let pi = DeterministicPolicy::from_fn(&inst, |l, s| rng.random_range(0..inst.num_actions_at(l, s)));
        for h in 0..=top {
            let est = estimate_cov_matrix(&inst, h, &data[..h], &pi)?;
            worst = worst.max(max_abs_entry(&(est - expected_covariance(&inst, &pi.clone().into(), h)?)));
        }
    }
    Ok(Outcome { pass: worst <= 0.05, detail: format!("10 policies, every layer, max entry error {worst:.4}") })
}

fn lemma_fuzz() -> Result<Outcome> {
    let suite = run_fuzz_suite(&FuzzConfig::default())?;
    let summary: Vec<String> = suite
        .reports
        .iter()
        .map(|r| format!("{} {}/{} (max ratio {:.4})", r.name, r.failures, r.trials, r.max_slack_ratio))
        .collect();
    Ok(Outcome { pass: suite.failures() == 0, detail: summary.join(", ") })
}

fn scaling(report: &ExperimentReport) -> Outcome {
    let fit = report.aggregate.scaling.as_ref().expect("scaling fit");
    let slope = fit.slope.unwrap_or(f64::NAN);
    let r2 = fit.r_squared.unwrap_or(f64::NAN);
    let points: Vec<String> = fit.points.iter().map(|(x, k)| format!("{x}:{k:.1}")).collect();
    Outcome {
        pass: slope > 0.0 && r2 >= 0.7 && fit.arb_k_equals_h && fit.arb_k_constant_in_d,
        detail: format!(
            "slope {slope:.3}, R^2 {r2:.3}, mean K by dH [{}], policy-cover K = H {} and constant in d {}",
            points.join(" "),
            fit.arb_k_equals_h,
            fit.arb_k_constant_in_d
        ),
    }
}

fn reachability() -> Result<Outcome> {
    let mut worst_rel = 0.0_f64;
    for d in 2..=4 {
        let nu = reachability_coefficient(&bandit(d), ReachabilityMethod::BruteForce, 1000)?.nu_min;
        let target = 1.0 / (d as f64).sqrt();
        worst_rel = worst_rel.max((nu - target).abs() / target);
    }
    let mut dominated = 0;
    for seed in 0..20u64 {
        let inst = simplex_random(SimplexParams {
            d: 2 + (seed % 3) as usize,
            states: 2,
            actions: 3,
            horizon: 2,
            feature_concentration: 0.5,
            seed: 500 + seed,
        })?;
        let bf = reachability_coefficient(&inst, ReachabilityMethod::BruteForce, 1000)?;
        let svd = reachability_coefficient(&inst, ReachabilityMethod::SvdLowerBound, 1000)?;
        if bf.nu_per_layer.iter().zip(&svd.nu_per_layer).all(|(b, s)| *b >= s - 1e-12) {
            dominated += 1;
        }
    }
    Ok(Outcome {
        pass: worst_rel <= 0.02 && dominated == 20,
        detail: format!("bandit max relative error {worst_rel:.2e}, brute force >= eigenvalue bound on {dominated}/20"),
    })
}

fn main() -> ExitCode {
    let min = |m: u64| Duration::from_secs(60 * m);
    let mut results: Vec<(u32, Outcome)> = Vec::new();

    results.push((1, timed(min(1), hard_exactness)));

    let start = Instant::now();
    let det = det_report();
    let det_time = start.elapsed();
    match det {
        Ok(report) => {
            let mut c2 = det_guarantee(&report);
            c2.detail = format!("{} [{:.1}s, limit 600s]", c2.detail, det_time.as_secs_f64());
            c2.pass &= det_time <= min(10);
            results.push((2, c2));
            results.push((3, frontier(&report)));
            results.push((10, optimism(&report)));
        }
        Err(e) => {
            for c in [2, 3, 10] {
                results.push((c, Outcome { pass: false, detail: format!("error: {e}") }));
            }
        }
    }

    results.push((4, timed(min(15), reward_free)));

    let start = Instant::now();
    let scaling_run = scaling_report();
    let scaling_time = start.elapsed().as_secs_f64();
    match &scaling_run {
        Ok(report) => {
            results.push((5, timed(min(15), || arb_count(report))));
            let mut c8 = scaling(report);
            c8.detail = format!("{} [{scaling_time:.1}s]", c8.detail);
            results.push((8, c8));
        }
        Err(e) => {
            for c in [5, 8] {
                results.push((c, Outcome { pass: false, detail: format!("error: {e}") }));
            }
        }
    }

    results.push((6, timed(min(2), covariance_oracle)));
    results.push((7, timed(min(5), lemma_fuzz)));
    results.push((9, timed(min(5), reachability)));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (c, o) in &results {
        println!("criterion {c:2}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
