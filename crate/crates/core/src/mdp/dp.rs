//! Exact dynamic-programming oracles over the finite state space.
//!
//! `h_trunc` counts layers: the truncated MDP keeps layers `0..h_trunc`, so
//! `h_trunc = H` is the full problem.

use crate::error::{DerlError, Result};
use crate::linalg::{quad_form, spd_inverse, Matrix};
use crate::mdp::instance::{LinearMdpInstance, RewardTable};
use crate::mdp::policy::{DeterministicPolicy, Policy};
use crate::mdp::reward::RewardSpec;

fn check_trunc(instance: &LinearMdpInstance, h_trunc: usize) -> Result<()> {
    if h_trunc == 0 || h_trunc > instance.horizon() {
        return Err(DerlError::Parameter(format!(
            "truncation {h_trunc} outside 1..={}",
            instance.horizon()
        )));
    }
    Ok(())
}

/// `Σ_{s'} P_h(s'|s,a) next[s']`, or 0 past the final layer.
#[inline]
pub(crate) fn expected_next(instance: &LinearMdpInstance, h: usize, s: usize, a: usize, next: &[f64]) -> f64 {
    if h + 1 >= instance.horizon() || next.is_empty() {
        return 0.0;
    }
    instance.transition(h, s, a).iter().zip(next).map(|(p, v)| p * v).sum()
}

/// Value of a Markov (deterministic or uniform-tail) policy under `table`.
fn evaluate_markov(instance: &LinearMdpInstance, policy: &Policy, table: &RewardTable, h_trunc: usize) -> f64 {
    let mut next: Vec<f64> = Vec::new();
    for h in (0..h_trunc).rev() {
        let cur: Vec<f64> = (0..instance.num_states(h))
            .map(|s| {
                (0..instance.num_actions_at(h, s))
                    .filter_map(|a| {
                        let p = policy.markov_prob(instance, h, s, a).expect("markov policy");
                        (p > 0.0).then(|| p * (table.get(h, s, a) + expected_next(instance, h, s, a, &next)))
                    })
                    .sum()
            })
            .collect();
        next = cur;
    }
    instance.init().iter().zip(&next).map(|(p, v)| p * v).sum()
}

/// Exact `J(π)` in the MDP truncated after `h_trunc` layers.
///
/// For a uniform mixture this is the arithmetic mean of the members' values.
pub fn evaluate_policy_exact(
    instance: &LinearMdpInstance,
    policy: &Policy,
    reward: &RewardSpec,
    h_trunc: usize,
) -> Result<f64> {
    let table = reward.table(instance)?;
    evaluate_with_table(instance, policy, &table, h_trunc)
}

pub fn evaluate_with_table(
    instance: &LinearMdpInstance,
    policy: &Policy,
    table: &RewardTable,
    h_trunc: usize,
) -> Result<f64> {
    check_trunc(instance, h_trunc)?;
    policy.validate(instance)?;
    Ok(match policy {
        Policy::UniformMixture(members) => {
            let total: f64 = members
                .iter()
                .map(|m| evaluate_markov(instance, &Policy::Deterministic(m.clone()), table, h_trunc))
                .sum();
            total / members.len() as f64
        }
        _ => evaluate_markov(instance, policy, table, h_trunc),
    })
}

/// Optimal state-action values `Q*[h][s][a]` of the truncated MDP.
pub fn optimal_q(instance: &LinearMdpInstance, table: &RewardTable, h_trunc: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    check_trunc(instance, h_trunc)?;
    let mut q: Vec<Vec<Vec<f64>>> = vec![Vec::new(); h_trunc];
    let mut next: Vec<f64> = Vec::new();
    for h in (0..h_trunc).rev() {
        let layer: Vec<Vec<f64>> = (0..instance.num_states(h))
            .map(|s| {
                (0..instance.num_actions_at(h, s))
                    .map(|a| table.get(h, s, a) + expected_next(instance, h, s, a, &next))
                    .collect()
            })
            .collect();
        next = layer.iter().map(|row| argmax(row).1).collect();
        q[h] = layer;
    }
    Ok(q)
}

/// Index and value of the maximum; ties go to the lowest index.
#[inline]
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// `(V*, greedy policy)` of the truncated MDP. Layers at or beyond `h_trunc`
/// take action 0.
pub fn optimal_value_exact(
    instance: &LinearMdpInstance,
    reward: &RewardSpec,
    h_trunc: usize,
) -> Result<(f64, DeterministicPolicy)> {
    let table = reward.table(instance)?;
    optimal_with_table(instance, &table, h_trunc)
}

pub fn optimal_with_table(
    instance: &LinearMdpInstance,
    table: &RewardTable,
    h_trunc: usize,
) -> Result<(f64, DeterministicPolicy)> {
    let q = optimal_q(instance, table, h_trunc)?;
    let policy = DeterministicPolicy::from_fn(instance, |h, s| if h < h_trunc { argmax(&q[h][s]).0 } else { 0 });
    let value = instance
        .init()
        .iter()
        .enumerate()
        .map(|(s, p)| p * argmax(&q[0][s]).1)
        .sum();
    Ok((value, policy))
}

/// Probability of each `(s, a)` at layer `h` under a Markov policy: `[s][a]`.
fn pair_occupancy_markov(instance: &LinearMdpInstance, policy: &Policy, h: usize) -> Vec<Vec<f64>> {
    let mut states: Vec<f64> = instance.init().to_vec();
    for layer in 0..=h {
        let pairs: Vec<Vec<f64>> = (0..instance.num_states(layer))
            .map(|s| {
                (0..instance.num_actions_at(layer, s))
                    .map(|a| states[s] * policy.markov_prob(instance, layer, s, a).expect("markov policy"))
                    .collect()
            })
            .collect();
        if layer == h {
            return pairs;
        }
        let mut next = vec![0.0; instance.num_states(layer + 1)];
        for (s, row) in pairs.iter().enumerate() {
            for (a, &w) in row.iter().enumerate() {
                if w > 0.0 {
                    for (sp, p) in instance.transition(layer, s, a).iter().enumerate() {
                        next[sp] += w * p;
                    }
                }
            }
        }
        states = next;
    }
    unreachable!("loop returns at layer h")
}

/// Occupancy of `(s, a)` pairs at layer `h`; mixtures average their members.
pub fn pair_occupancy(instance: &LinearMdpInstance, policy: &Policy, h: usize) -> Result<Vec<Vec<f64>>> {
    policy.validate(instance)?;
    if h >= instance.horizon() {
        return Err(DerlError::Parameter(format!("layer {h} out of range")));
    }
    Ok(match policy {
        Policy::UniformMixture(members) => {
            let n = members.len() as f64;
            let mut acc: Option<Vec<Vec<f64>>> = None;
            for m in members {
                let occ = pair_occupancy_markov(instance, &Policy::Deterministic(m.clone()), h);
                acc = Some(match acc {
                    None => occ,
                    Some(mut a) => {
                        a.iter_mut().flatten().zip(occ.iter().flatten()).for_each(|(x, y)| *x += y);
                        a
                    }
                });
            }
            let mut a = acc.expect("non-empty mixture");
            a.iter_mut().flatten().for_each(|x| *x /= n);
            a
        }
        _ => pair_occupancy_markov(instance, policy, h),
    })
}

/// Exact `E_π[φ(s_h,a_h) φ(s_h,a_h)ᵀ]`.
pub fn expected_covariance(instance: &LinearMdpInstance, policy: &Policy, h: usize) -> Result<Matrix> {
    let occ = pair_occupancy(instance, policy, h)?;
    let d = instance.d();
    let mut m = Matrix::zeros(d, d);
    for (s, row) in occ.iter().enumerate() {
        for (a, &w) in row.iter().enumerate() {
            if w > 0.0 {
                let f = instance.phi(h, s, a);
                for i in 0..d {
                    for j in i..d {
                        m[(i, j)] += w * f[i] * f[j];
                    }
                }
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    Ok(m)
}

/// `max_π E_π[Σ_{h < h_max} √(φᵀ Σ_h⁻¹ φ)]`, solved as an optimal-control
/// problem with the bonus as per-step reward.
pub fn uncertainty_diagnostic(instance: &LinearMdpInstance, sigmas: &[Matrix], h_max: usize) -> Result<f64> {
    check_trunc(instance, h_max)?;
    if sigmas.len() < h_max {
        return Err(DerlError::Parameter(format!("need {h_max} matrices, got {}", sigmas.len())));
    }
    let inverses = sigmas[..h_max]
        .iter()
        .map(|s| {
            if s.nrows() != instance.d() || s.ncols() != instance.d() {
                return Err(DerlError::Numeric("sigma has the wrong shape".into()));
            }
            spd_inverse(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let table = RewardTable::from_fn(instance, |h, s, a| {
        if h < h_max {
            quad_form(&inverses[h], instance.phi(h, s, a)).max(0.0).sqrt()
        } else {
            0.0
        }
    });
    Ok(optimal_with_table(instance, &table, h_max)?.0)
}

/// All deterministic policies that differ on layers `< layers` (later layers
/// take action 0). Fails if there are more than `cap`.
pub fn enumerate_deterministic_policies(
    instance: &LinearMdpInstance,
    layers: usize,
    cap: usize,
) -> Result<Vec<DeterministicPolicy>> {
    let slots: Vec<(usize, usize, usize)> = (0..layers.min(instance.horizon()))
        .flat_map(|h| (0..instance.num_states(h)).map(move |s| (h, s)))
        .map(|(h, s)| (h, s, instance.num_actions_at(h, s)))
        .filter(|&(_, _, n)| n > 1)
        .collect();
    let mut count: usize = 1;
    for &(_, _, n) in &slots {
        count = count
            .checked_mul(n)
            .filter(|&c| c <= cap)
            .ok_or_else(|| DerlError::Parameter(format!("more than {cap} deterministic policies")))?;
    }
    let mut out = Vec::with_capacity(count);
    let mut digits = vec![0usize; slots.len()];
    let base = DeterministicPolicy::first_action(instance);
    loop {
        let mut p = base.clone();
        for (&(h, s, _), &a) in slots.iter().zip(&digits) {
            p.set_action(h, s, a);
        }
        out.push(p);
        let mut i = 0;
        loop {
            if i == slots.len() {
                return Ok(out);
            }
            digits[i] += 1;
            if digits[i] < slots[i].2 {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::generators;
    use crate::mdp::sampling::rollout;
    use crate::rng::SeedStream;
    use rand::Rng;

    #[test]
    fn zero_reward_has_zero_value() {
        let inst = generators::tabular_random(3, 2, 3, 3);
        let pi = Policy::Deterministic(DeterministicPolicy::first_action(&inst));
        assert_eq!(evaluate_policy_exact(&inst, &pi, &RewardSpec::Zero, 3).unwrap(), 0.0);
        assert_eq!(optimal_value_exact(&inst, &RewardSpec::Zero, 3).unwrap().0, 0.0);
    }

    #[test]
    fn optimal_policy_attains_optimal_value_exactly() {
        for seed in 0..10 {
            let inst = generators::tabular_random(3, 2, 4, seed);
            for h in 1..=4 {
                let (v, pi) = optimal_value_exact(&inst, &RewardSpec::Native, h).unwrap();
                let j = evaluate_policy_exact(&inst, &pi.into(), &RewardSpec::Native, h).unwrap();
                assert_eq!(v, j);
            }
        }
    }

    #[test]
    fn optimal_value_dominates_random_policies() {
        let inst = generators::tabular_random(3, 3, 4, 21);
        let (v, _) = optimal_value_exact(&inst, &RewardSpec::Native, 4).unwrap();
        let mut rng = SeedStream::new(3).aux_rng(0);
        for _ in 0..100 {
            let pi = DeterministicPolicy::from_fn(&inst, |h, s| rng.random_range(0..inst.num_actions_at(h, s)));
            let j = evaluate_policy_exact(&inst, &pi.into(), &RewardSpec::Native, 4).unwrap();
            assert!(v >= j - 1e-12);
        }
    }

    #[test]
    fn mixture_value_is_mean_of_members() {
        let inst = generators::tabular_random(2, 3, 3, 8);
        let members: Vec<DeterministicPolicy> =
            (0..3).map(|k| DeterministicPolicy::from_fn(&inst, |h, s| (h + s + k) % 3)).collect();
        let vals: Vec<f64> = members
            .iter()
            .map(|m| evaluate_policy_exact(&inst, &m.clone().into(), &RewardSpec::Native, 3).unwrap())
            .collect();
        let mix = evaluate_policy_exact(&inst, &Policy::UniformMixture(members), &RewardSpec::Native, 3).unwrap();
        assert_eq!(mix, vals.iter().sum::<f64>() / 3.0);
    }

    #[test]
    fn covariance_of_single_state_chain() {
        let inst = generators::single_action_chain(3, 2, 0.0);
        let pi = Policy::Deterministic(DeterministicPolicy::first_action(&inst));
        let m = expected_covariance(&inst, &pi, 1).unwrap();
        let mut expected = Matrix::zeros(3, 3);
        expected[(0, 0)] = 1.0;
        assert_eq!(m, expected);
    }

    #[test]
    fn covariance_is_symmetric_with_trace_at_most_one() {
        let inst = generators::simplex_random(generators::SimplexParams {
            d: 4,
            states: 3,
            actions: 2,
            horizon: 3,
            feature_concentration: 0.5,
            seed: 2,
        })
        .unwrap();
        let pi = Policy::UniformTail { head: DeterministicPolicy::first_action(&inst), from_layer: 1 };
        for h in 0..3 {
            let m = expected_covariance(&inst, &pi, h).unwrap();
            assert_eq!(m, m.transpose());
            assert!(m.trace() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn covariance_matches_monte_carlo() {
        let inst = generators::tabular_random(3, 2, 3, 17);
        let pi = Policy::UniformTail { head: DeterministicPolicy::first_action(&inst), from_layer: 1 };
        let exact = expected_covariance(&inst, &pi, 2).unwrap();
        let seeds = SeedStream::new(99);
        let n = 100_000;
        let mut acc = Matrix::zeros(inst.d(), inst.d());
        for t in 0..n {
            let traj = rollout(&inst, &pi, 3, &mut seeds.trajectory_rng(0, t));
            let st = traj.steps[2];
            let f = inst.phi(2, st.state, st.action);
            acc += f * f.transpose();
        }
        acc /= n as f64;
        let err = (acc - exact).abs().max();
        assert!(err <= 0.02, "entrywise error {err}");
    }

    #[test]
    fn monte_carlo_return_within_hoeffding_band() {
        let inst = generators::tabular_random(3, 2, 4, 5);
        let pi = Policy::UniformTail { head: DeterministicPolicy::first_action(&inst), from_layer: 2 };
        let exact = evaluate_policy_exact(&inst, &pi, &RewardSpec::Native, 4).unwrap();
        let seeds = SeedStream::new(12);
        let n = 100_000u64;
        let mean: f64 = (0..n).map(|t| rollout(&inst, &pi, 4, &mut seeds.trajectory_rng(0, t)).total_reward()).sum::<f64>()
            / n as f64;
        let band = 3.0 * (4.0 / (n as f64).sqrt()) * 2.0;
        assert!((mean - exact).abs() <= band);
    }

    #[test]
    fn diagnostic_limits() {
        let chain = generators::single_action_chain(2, 1, 0.0);
        let id = Matrix::identity(2, 2);
        assert!((uncertainty_diagnostic(&chain, std::slice::from_ref(&id), 1).unwrap() - 1.0).abs() < 1e-15);
        let big = Matrix::identity(2, 2) * 1e12;
        assert!(uncertainty_diagnostic(&chain, &[big], 1).unwrap() < 1e-5);
        let indefinite = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(uncertainty_diagnostic(&chain, &[indefinite], 1), Err(DerlError::Numeric(_))));
    }

    #[test]
    fn diagnostic_matches_policy_enumeration() {
        let inst = generators::simplex_random(generators::SimplexParams {
            d: 3,
            states: 3,
            actions: 2,
            horizon: 3,
            feature_concentration: 1.0,
            seed: 6,
        })
        .unwrap();
        let sigmas: Vec<Matrix> = (0..3)
            .map(|h| {
                let v = nalgebra::DVector::from_fn(3, |i, _| (i + h) as f64 * 0.3);
                Matrix::identity(3, 3) + &v * v.transpose()
            })
            .collect();
        let fast = uncertainty_diagnostic(&inst, &sigmas, 3).unwrap();
        let inverses: Vec<Matrix> = sigmas.iter().map(|s| s.clone().try_inverse().unwrap()).collect();
        let bonus = RewardTable::from_fn(&inst, |h, s, a| quad_form(&inverses[h], inst.phi(h, s, a)).sqrt());
        let brute = enumerate_deterministic_policies(&inst, 3, 10_000)
            .unwrap()
            .into_iter()
            .map(|p| evaluate_with_table(&inst, &p.into(), &bonus, 3).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((fast - brute).abs() < 1e-9);
    }

    #[test]
    fn enumeration_respects_cap() {
        let inst = generators::tabular_random(3, 2, 3, 1);
        assert_eq!(enumerate_deterministic_policies(&inst, 3, 10_000).unwrap().len(), 1 << 7);
        assert!(enumerate_deterministic_policies(&inst, 3, 100).is_err());
    }
}
