//! Regression-based estimate of a policy's feature covariance against the exact value.

use derl::arb::estimate_cov_matrix;
use derl::linalg::max_abs_entry;
use derl::lsvi::exhaustive_data;
use derl::mdp::generators::{simplex_random, SimplexParams};
use derl::mdp::{expected_covariance, DeterministicPolicy};

fn main() -> derl::Result<()> {
    let inst = simplex_random(SimplexParams {
        d: 3,
        states: 3,
        actions: 2,
        horizon: 3,
        feature_concentration: 1.0,
        seed: 5,
    })?;
    let h = inst.horizon() - 1;
    let pi = DeterministicPolicy::from_fn(&inst, |l, s| (l + s) % 2);
    let exact = expected_covariance(&inst, &pi.clone().into(), h)?;
    for reps in [10, 100, 1000] {
        let data = exhaustive_data(&inst, reps, 1)?;
        let est = estimate_cov_matrix(&inst, h, &data[..h], &pi)?;
        println!("{reps:5} samples per pair: max entry error {:.4}", max_abs_entry(&(est - &exact)));
    }
    Ok(())
}
