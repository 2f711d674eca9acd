//! Deterministic-policy deployment: layer-by-layer exploration with a known
//! reward, its reward-free variant, and offline planning on the collected data.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DerlError, Result};
use crate::lsvi::{lsvi_backup, BackupReward, LayerData, Transition};
use crate::mdp::dp::{evaluate_with_table, optimal_with_table};
use crate::mdp::instance::{LinearMdpInstance, RewardTable};
use crate::mdp::policy::{DeterministicPolicy, Policy};
use crate::mdp::reward::RewardSpec;
use crate::mdp::sampling::{rollout, Trajectory};
use crate::rng::SeedStream;

/// How the bonus coefficient is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    /// `c_β · dH · √log(dH/(δε))`.
    Theory { c_beta: f64 },
    Fixed { beta: f64 },
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule::Theory { c_beta: 0.5 }
    }
}

impl BetaSchedule {
    pub fn resolve(&self, d: usize, horizon: usize, delta: f64, epsilon: f64) -> f64 {
        match *self {
            BetaSchedule::Theory { c_beta } => {
                let dh = (d * horizon) as f64;
                c_beta * dh * (dh / (delta * epsilon)).ln().max(0.0).sqrt()
            }
            BetaSchedule::Fixed { beta } => beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetParams {
    pub epsilon: f64,
    pub delta: f64,
    pub c_k: f64,
    /// Trajectories per deployment.
    pub n: usize,
    #[serde(default)]
    pub beta: BetaSchedule,
    pub seed: u64,
    /// Keep every sampled trajectory in the log.
    #[serde(default)]
    pub record_trajectories: bool,
}

impl DetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(DerlError::Parameter(format!("epsilon = {} outside (0, 1)", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(DerlError::Parameter(format!("delta = {} outside (0, 1)", self.delta)));
        }
        if !(self.c_k >= 2.0) {
            return Err(DerlError::Parameter(format!("c_K = {} must be at least 2", self.c_k)));
        }
        if self.n == 0 {
            return Err(DerlError::Parameter("N must be positive".into()));
        }
        if let BetaSchedule::Fixed { beta } = self.beta {
            if !(beta >= 0.0) {
                return Err(DerlError::Parameter("beta must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// `K = ⌊c_K d H⌋ + 1`.
    pub fn budget(&self, d: usize, horizon: usize) -> usize {
        (self.c_k * (d * horizon) as f64).floor() as usize + 1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeploymentRecord {
    /// 1-based deployment index.
    pub k: usize,
    /// 1-based frontier layer.
    pub h_k: usize,
    /// Greedy policy on layers `< h_k`.
    pub greedy: DeterministicPolicy,
    /// The policy actually deployed (uniform after the frontier).
    pub deployed: Policy,
    pub delta_k: f64,
    pub n: usize,
    pub wall_time_secs: f64,
    /// Optimistic value `V₁^k(s₁)` of the backup.
    pub v1_hat: f64,
    /// `Δ_k` fell below the threshold (frontier advanced or the run returned).
    pub frontier_advanced: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<Vec<Trajectory>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    ReturnedPolicy { k: usize },
    BudgetExhausted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeploymentLog {
    pub records: Vec<DeploymentRecord>,
    pub terminal: Terminal,
    pub beta: f64,
    pub budget: usize,
    pub threshold_scale: f64,
}

impl DeploymentLog {
    pub fn deployments(&self) -> usize {
        self.records.len()
    }

    pub fn returned(&self) -> bool {
        matches!(self.terminal, Terminal::ReturnedPolicy { .. })
    }

    /// `Δ_k` threshold at frontier `h_k`.
    pub fn threshold(&self, epsilon: f64, h_k: usize) -> f64 {
        epsilon * h_k as f64 * self.threshold_scale
    }

    /// Records where `Δ_k` fell below the threshold, i.e. the deployments `k_h`.
    pub fn frontier_records(&self) -> impl Iterator<Item = &DeploymentRecord> {
        self.records.iter().filter(|r| r.frontier_advanced)
    }

    /// Checks frontier monotonicity and `Δ_k ≥ 0`.
    pub fn check_invariants(&self) -> Result<()> {
        for w in self.records.windows(2) {
            let step = w[1].h_k as i64 - w[0].h_k as i64;
            if !(step == 0 || step == 1) || (step == 1) != w[0].frontier_advanced {
                return Err(DerlError::Contract(format!("frontier moved from {} to {}", w[0].h_k, w[1].h_k)));
            }
        }
        if let Some(r) = self.records.iter().find(|r| !(r.delta_k >= 0.0)) {
            return Err(DerlError::Contract(format!("negative delta at deployment {}", r.k)));
        }
        Ok(())
    }

    /// Writes `k, h_k, delta_k, frontier_advanced, J_pi_exact, J_opt_exact,
    /// suboptimality`, with values of the MDP truncated at `h_k`.
    pub fn write_csv(&self, instance: &LinearMdpInstance, reward: &RewardSpec, out: impl Write) -> Result<()> {
        let table = reward.table(instance)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "h_k", "delta_k", "frontier_advanced", "J_pi_exact", "J_opt_exact", "suboptimality"])?;
        for r in &self.records {
            let j_pi = evaluate_with_table(instance, &r.greedy.clone().into(), &table, r.h_k)?;
            let j_opt = optimal_with_table(instance, &table, r.h_k)?.0;
            w.write_record([
                r.k.to_string(),
                r.h_k.to_string(),
                format!("{:.12e}", r.delta_k),
                r.frontier_advanced.to_string(),
                format!("{j_pi:.12}"),
                format!("{j_opt:.12}"),
                format!("{:.12}", j_opt - j_pi),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, instance: &LinearMdpInstance, reward: &RewardSpec, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(instance, reward, std::fs::File::create(path)?)
    }
}

/// Per-layer data from every deployment so far; every layer is logged on
/// every deployment.
#[derive(Debug, Clone)]
pub struct RewardFreeDataset {
    pub layers: Vec<LayerData>,
    pub deployments: usize,
    pub n: usize,
}

impl RewardFreeDataset {
    pub fn new(instance: &LinearMdpInstance, n: usize) -> Self {
        Self {
            layers: (0..instance.horizon()).map(|h| LayerData::new(h, instance.d())).collect(),
            deployments: 0,
            n,
        }
    }

    /// Appends the steps of `trajectories` at layers `< upto`.
    pub fn absorb(&mut self, instance: &LinearMdpInstance, trajectories: &[Trajectory], upto: usize) -> Result<()> {
        for (h, layer) in self.layers.iter_mut().enumerate().take(upto) {
            let batch = trajectories.iter().filter_map(|t| t.steps.get(h)).map(|st| Transition {
                state: st.state,
                action: st.action,
                next_state: st.next_state,
            });
            layer.extend(instance, batch)?;
        }
        Ok(())
    }

    pub fn layer_len(&self, h: usize) -> u64 {
        self.layers[h].len()
    }
}

/// Samples `n` trajectories of deployment `k` in parallel, in index order.
pub(crate) fn deploy(
    instance: &LinearMdpInstance,
    policy: &Policy,
    seeds: &SeedStream,
    k: usize,
    n: usize,
) -> Vec<Trajectory> {
    (0..n)
        .into_par_iter()
        .map(|i| rollout(instance, policy, instance.horizon(), &mut seeds.trajectory_rng(k as u64, i as u64)))
        .collect()
}

#[derive(Clone, Copy)]
enum Mode<'a> {
    Known(&'a RewardTable),
    RewardFree,
}

fn explore(
    instance: &LinearMdpInstance,
    mode: Mode<'_>,
    params: &DetParams,
) -> Result<(DeterministicPolicy, RewardFreeDataset, DeploymentLog)> {
    params.validate()?;
    let big_h = instance.horizon();
    let hf = big_h as f64;
    let beta = params.beta.resolve(instance.d(), big_h, params.delta, params.epsilon);
    let budget = params.budget(instance.d(), big_h);
    let threshold_scale = match mode {
        Mode::Known(_) => 1.0 / (2.0 * hf),
        Mode::RewardFree => 1.0 / ((4.0 * hf + 2.0) * hf),
    };
    let seeds = SeedStream::new(params.seed);
    let mut data = RewardFreeDataset::new(instance, params.n);
    let mut records = Vec::new();
    let mut h_k = 1;
    let mut last = DeterministicPolicy::first_action(instance);
    let mut terminal = Terminal::BudgetExhausted;

    for k in 1..=budget {
        let started = Instant::now();
        let reward = match mode {
            Mode::Known(t) => BackupReward::Known(t),
            Mode::RewardFree => BackupReward::ScaledBonus(hf),
        };
        let (q, greedy) = lsvi_backup(instance, &data.layers, reward, h_k, beta, hf)?;
        let deployed = if h_k == big_h {
            Policy::Deterministic(greedy.clone())
        } else {
            Policy::UniformTail { head: greedy.clone(), from_layer: h_k }
        };
        let trajectories = deploy(instance, &deployed, &seeds, k, params.n);
        let total: f64 = trajectories
            .par_iter()
            .map(|t| {
                t.steps[..h_k]
                    .iter()
                    .map(|st| data.layers[st.layer].accumulator().quad(instance.phi(st.layer, st.state, st.action)).sqrt())
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        let delta_k = 2.0 * beta * total / params.n as f64;
        data.absorb(instance, &trajectories, big_h)?;
        data.deployments += 1;
        let small = delta_k < epsilon_threshold(params.epsilon, h_k, threshold_scale);
        records.push(DeploymentRecord {
            k,
            h_k,
            greedy: greedy.clone(),
            deployed,
            delta_k,
            n: params.n,
            wall_time_secs: started.elapsed().as_secs_f64(),
            v1_hat: q.initial_value(instance),
            frontier_advanced: small,
            trajectories: params.record_trajectories.then_some(trajectories),
        });
        last = greedy;
        if small {
            if h_k == big_h {
                terminal = Terminal::ReturnedPolicy { k };
                break;
            }
            h_k += 1;
        }
    }
    Ok((last, data, DeploymentLog { records, terminal, beta, budget, threshold_scale }))
}

fn epsilon_threshold(epsilon: f64, h_k: usize, scale: f64) -> f64 {
    epsilon * h_k as f64 * scale
}

/// Layer-by-layer batch exploration with a known reward.
///
/// Returns the last greedy policy; `log.terminal` says whether it was
/// returned by the stopping rule or the budget ran out.
pub fn run_deterministic_derl(
    instance: &LinearMdpInstance,
    reward: &RewardSpec,
    params: &DetParams,
) -> Result<(Policy, DeploymentLog)> {
    let table = reward.table(instance)?;
    let (policy, _, log) = explore(instance, Mode::Known(&table), params)?;
    Ok((policy.into(), log))
}

/// Reward-free exploration: the bonus divided by `H` replaces the reward.
pub fn run_reward_free_exploration(
    instance: &LinearMdpInstance,
    params: &DetParams,
) -> Result<(RewardFreeDataset, DeploymentLog)> {
    let (_, data, log) = explore(instance, Mode::RewardFree, params)?;
    Ok((data, log))
}

/// Backward LSVI on a fixed dataset with bonus and values clipped at `h̃`.
/// Returns the greedy policy on layers `< h_tilde` and `V̂₁`.
pub fn plan_from_dataset(
    instance: &LinearMdpInstance,
    dataset: &[LayerData],
    reward: &RewardSpec,
    h_tilde: usize,
    beta: f64,
) -> Result<(Policy, f64)> {
    if h_tilde == 0 || h_tilde > instance.horizon() || dataset.len() < h_tilde {
        return Err(DerlError::Parameter(format!("cannot plan over {h_tilde} layers")));
    }
    if let Some(h) = (0..h_tilde).find(|&h| dataset[h].is_empty()) {
        return Err(DerlError::MissingData(format!("no data at layer {h}")));
    }
    let table = reward.table(instance)?;
    let (q, pi) = lsvi_backup(instance, dataset, BackupReward::Known(&table), h_tilde, beta, h_tilde as f64)?;
    Ok((pi.into(), q.initial_value(instance)))
}
