//! Small fuzzing campaign over the matrix lemmas.

use derl::lemma::{run_fuzz_suite, FuzzConfig};

fn main() -> derl::Result<()> {
    let cfg = FuzzConfig {
        bridge_trials: 10_000,
        perturbation_trials: 10_000,
        elliptical_trials: 10_000,
        batched_trials: 100,
        auxiliary_trials: 1_000,
        ..FuzzConfig::default()
    };
    let suite = run_fuzz_suite(&cfg)?;
    for r in &suite.reports {
        println!("{:22} trials {:6} failures {} max ratio {:.6}", r.name, r.trials, r.failures, r.max_slack_ratio);
    }
    Ok(())
}
