//! JSON-configured experiments over instance families and seeds.
//!
//! Jobs are `(grid point, seed)` pairs run on the rayon pool. Each job writes
//! its own output shard; rows are merged by sorting on `(point, seed)` so
//! artifacts do not depend on scheduling.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arb::{reachability_coefficient, run_arbitrary_derl, save_covers, ArbParams, ReachabilityMethod};
use crate::det::{
    plan_from_dataset, run_deterministic_derl, run_reward_free_exploration, BetaSchedule, DetParams, DeploymentLog,
};
use crate::error::{DerlError, Result};
use crate::hard::{build_hard_mdp, enumerate_family_deterministic, HardInstanceSpec};
use crate::lemma::{run_fuzz_suite, FuzzConfig, FuzzSuite};
use crate::lsvi::LayerData;
use crate::mdp::dp::{evaluate_with_table, optimal_with_table};
use crate::mdp::generators::{random_linear_reward, simplex_random, SimplexParams};
use crate::mdp::{LinearMdpInstance, RewardSpec, RewardTable};

pub const SCHEMA_VERSION: u32 = 1;

/// Values compared against `ε` are allowed this much rounding slack.
const GAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    DetDerl,
    RewardFree,
    ArbDerl,
    LowerBoundScaling,
    LemmaFuzz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    /// The hard family for `(d, H, ε)`; seed `s` runs member `s mod |family|`.
    HardFamily {
        d: usize,
        #[serde(rename = "H")]
        horizon: usize,
        epsilon: f64,
    },
    /// A single hard instance.
    Hard { spec: HardInstanceSpec },
    /// A serialized [`LinearMdpInstance`].
    File { path: PathBuf },
    RandomSimplex(SimplexParams),
}

/// Algorithm constants shared by all experiment kinds. Unused fields are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgorithmParams {
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub c_k: f64,
    pub beta: BetaSchedule,
    /// Bonus used when planning on a collected dataset.
    pub plan_beta: f64,
    pub i_max: usize,
    pub eps0: Option<f64>,
    pub beta_prime: f64,
    /// Overrides the brute-force reachability oracle.
    pub nu_min: Option<f64>,
    pub reachability_cap: usize,
    /// Number of random linear rewards checked after reward-free exploration.
    pub num_rewards: usize,
    pub reward_seed: u64,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            n: 5000,
            epsilon: 0.1,
            delta: 0.1,
            c_k: 2.0,
            beta: BetaSchedule::Fixed { beta: 0.3 },
            plan_beta: 0.1,
            i_max: 30,
            eps0: None,
            beta_prime: 0.1,
            nu_min: None,
            reachability_cap: 10_000,
            num_rewards: 3,
            reward_seed: 1000,
        }
    }
}

impl AlgorithmParams {
    pub fn det_params(&self, seed: u64) -> DetParams {
        DetParams {
            epsilon: self.epsilon,
            delta: self.delta,
            c_k: self.c_k,
            n: self.n,
            beta: self.beta,
            seed,
            record_trajectories: false,
        }
    }

    pub fn arb_params(&self, seed: u64, nu_min: f64) -> ArbParams {
        ArbParams {
            i_max: self.i_max,
            eps0: self.eps0,
            beta_prime: self.beta_prime,
            nu_min,
            n: self.n,
            seed,
        }
    }
}

/// Template `(d, H)` grid of the hard family for scaling studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingGrid {
    pub d: Vec<usize>,
    #[serde(rename = "H")]
    pub horizon: Vec<usize>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    /// Directory for `rows.csv`, `report.json` and per-run shards; nothing is
    /// written when absent.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub instance: Option<InstanceSource>,
    #[serde(default)]
    pub params: AlgorithmParams,
    #[serde(default)]
    pub grid: Option<ScalingGrid>,
    #[serde(default)]
    pub fuzz: Option<FuzzConfig>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| DerlError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| DerlError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| DerlError::Config(format!("config: {e}")))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(InstanceSource::File { path }) = &mut cfg.instance {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if let Some(dir) = &mut cfg.output.dir {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(DerlError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(DerlError::Config("seed list is empty".into()));
        }
        match self.experiment {
            ExperimentKind::LowerBoundScaling => {
                let g = self.grid.as_ref().ok_or_else(|| DerlError::Config("scaling needs a grid".into()))?;
                if g.d.is_empty() || g.horizon.is_empty() {
                    return Err(DerlError::Config("scaling grid axes must be non-empty".into()));
                }
            }
            ExperimentKind::LemmaFuzz => {}
            _ => {
                if self.instance.is_none() {
                    return Err(DerlError::Config("an instance source is required".into()));
                }
            }
        }
        if let Some(InstanceSource::File { path }) = &self.instance {
            if !path.exists() {
                return Err(DerlError::Config(format!("instance file {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

/// One `(grid point, seed)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub point: usize,
    /// Template dimension and horizon of the grid point (instance dims otherwise).
    pub d: usize,
    pub horizon: usize,
    pub seed: u64,
    pub deployments: usize,
    pub budget: Option<usize>,
    pub returned: bool,
    /// Largest gap to the optimum over the evaluated rewards.
    pub suboptimality: Option<f64>,
    pub success: bool,
    /// Deployments used by arbitrary-policy exploration on the same instance.
    pub arb_deployments: Option<usize>,
    pub arb_horizon: Option<usize>,
    /// Frontier deployments whose greedy policy is ε-optimal when truncated.
    pub frontier_ok: usize,
    pub frontier_total: usize,
    /// Deployments with `V̂₁ ≥ V*₁(·|h_k)`.
    pub optimism_ok: usize,
    pub optimism_total: usize,
    pub invariant_violation: Option<String>,
    pub runtime_secs: f64,
}

impl ReportRow {
    fn new(point: usize, d: usize, horizon: usize, seed: u64) -> Self {
        Self {
            point,
            d,
            horizon,
            seed,
            deployments: 0,
            budget: None,
            returned: false,
            suboptimality: None,
            success: false,
            arb_deployments: None,
            arb_horizon: None,
            frontier_ok: 0,
            frontier_total: 0,
            optimism_ok: 0,
            optimism_total: 0,
            invariant_violation: None,
            runtime_secs: 0.0,
        }
    }
}

/// Least-squares fit of mean `K` against `d·H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// `(d·H, mean K)` per grid point.
    pub points: Vec<(f64, f64)>,
    /// Absent with fewer than two distinct `d·H` values.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    /// Every arbitrary-policy run used exactly as many deployments as layers.
    pub arb_k_equals_h: bool,
    /// Arbitrary-policy `K` is the same for every `d` at each horizon.
    pub arb_k_constant_in_d: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub success_rate: f64,
    pub mean_k: f64,
    pub frontier_rate: Option<f64>,
    pub optimism_rate: Option<f64>,
    pub budget_exhausted: usize,
    pub invariant_violations: usize,
    pub scaling: Option<ScalingFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub rows: Vec<ReportRow>,
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fuzz: Vec<FuzzSuite>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Process exit codes of the CLI.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const BUDGET: i32 = 3;
    pub const INVARIANT: i32 = 4;
}

/// Exit code for an error that aborted a run.
pub fn error_exit_code(err: &DerlError) -> i32 {
    match err {
        DerlError::Config(_)
        | DerlError::Parameter(_)
        | DerlError::InvalidInstance(_)
        | DerlError::Io(_)
        | DerlError::Json(_) => exit_code::CONFIG,
        _ => exit_code::INVARIANT,
    }
}

impl ExperimentReport {
    /// 4 on any invariant violation, else 3 if some run exhausted its budget, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.aggregate.invariant_violations > 0 {
            exit_code::INVARIANT
        } else if self.aggregate.budget_exhausted > 0 {
            exit_code::BUDGET
        } else {
            exit_code::SUCCESS
        }
    }

    /// Rows as CSV. Wall-clock time is left out so reruns are byte-identical.
    pub fn rows_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "point",
            "d",
            "H",
            "seed",
            "deployments",
            "budget",
            "returned",
            "suboptimality",
            "success",
            "arb_deployments",
            "arb_horizon",
            "frontier_ok",
            "frontier_total",
            "optimism_ok",
            "optimism_total",
            "invariant_violation",
        ])?;
        let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.point.to_string(),
                r.d.to_string(),
                r.horizon.to_string(),
                r.seed.to_string(),
                r.deployments.to_string(),
                opt(r.budget),
                r.returned.to_string(),
                r.suboptimality.map(|g| format!("{g:.12}")).unwrap_or_default(),
                r.success.to_string(),
                opt(r.arb_deployments),
                opt(r.arb_horizon),
                r.frontier_ok.to_string(),
                r.frontier_total.to_string(),
                r.optimism_ok.to_string(),
                r.optimism_total.to_string(),
                r.invariant_violation.clone().unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| DerlError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("rows.csv"), self.rows_csv()?)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn ratio(ok: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| ok as f64 / total as f64)
}

fn aggregate(rows: &[ReportRow], scaling: Option<ScalingFit>) -> Aggregate {
    let n = rows.len().max(1) as f64;
    let sum = |f: fn(&ReportRow) -> usize| rows.iter().map(f).sum::<usize>();
    Aggregate {
        runs: rows.len(),
        success_rate: rows.iter().filter(|r| r.success).count() as f64 / n,
        mean_k: sum(|r| r.deployments) as f64 / n,
        frontier_rate: ratio(sum(|r| r.frontier_ok), sum(|r| r.frontier_total)),
        optimism_rate: ratio(sum(|r| r.optimism_ok), sum(|r| r.optimism_total)),
        budget_exhausted: rows.iter().filter(|r| r.budget.is_some() && !r.returned).count(),
        invariant_violations: rows.iter().filter(|r| r.invariant_violation.is_some()).count(),
        scaling,
    }
}

/// Ordinary least squares `y ≈ a + b x`; `None` with fewer than two distinct `x`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if points.is_empty() || sxx <= 1e-12 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy <= 1e-12 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, my - slope * mx, r2))
}

/// Exact optima of the truncated MDPs, indexed by truncation `1..=H`.
struct Oracle {
    table: RewardTable,
    optimum: Vec<f64>,
}

impl Oracle {
    fn new(instance: &LinearMdpInstance, reward: &RewardSpec) -> Result<Self> {
        let table = reward.table(instance)?;
        let mut optimum = vec![0.0];
        for h in 1..=instance.horizon() {
            optimum.push(optimal_with_table(instance, &table, h)?.0);
        }
        Ok(Self { table, optimum })
    }

    fn gap(&self, instance: &LinearMdpInstance, policy: &crate::mdp::Policy, h: usize) -> Result<f64> {
        Ok(self.optimum[h] - evaluate_with_table(instance, policy, &self.table, h)?)
    }
}

/// Runs reward-aware deterministic deployment and fills the per-seed metrics.
fn det_row(
    instance: &LinearMdpInstance,
    params: &AlgorithmParams,
    row: &mut ReportRow,
) -> Result<DeploymentLog> {
    let reward = RewardSpec::Native;
    let (policy, log) = run_deterministic_derl(instance, &reward, &params.det_params(row.seed))?;
    let oracle = Oracle::new(instance, &reward)?;
    let eps = params.epsilon;
    row.deployments = log.deployments();
    row.budget = Some(log.budget);
    row.returned = log.returned();
    let gap = oracle.gap(instance, &policy, instance.horizon())?;
    row.suboptimality = Some(gap);
    row.success = row.returned && gap <= eps + GAP_TOL;
    for r in &log.records {
        row.optimism_total += 1;
        if r.v1_hat >= oracle.optimum[r.h_k] - GAP_TOL {
            row.optimism_ok += 1;
        }
        if r.frontier_advanced {
            row.frontier_total += 1;
            if oracle.gap(instance, &r.greedy.clone().into(), r.h_k)? <= eps + GAP_TOL {
                row.frontier_ok += 1;
            }
        }
    }
    if let Err(e) = log.check_invariants() {
        row.invariant_violation = Some(e.to_string());
    }
    Ok(log)
}

/// Largest planning gap over the configured random linear rewards.
fn planning_gap(instance: &LinearMdpInstance, layers: &[LayerData], params: &AlgorithmParams) -> Result<f64> {
    let horizon = instance.horizon();
    let mut worst = f64::NEG_INFINITY;
    for r in 0..params.num_rewards as u64 {
        let reward = RewardSpec::Linear {
            theta: random_linear_reward(instance.d(), horizon, params.reward_seed + r),
        };
        let (policy, _) = plan_from_dataset(instance, layers, &reward, horizon, params.plan_beta)?;
        worst = worst.max(Oracle::new(instance, &reward)?.gap(instance, &policy, horizon)?);
    }
    Ok(worst)
}

fn reward_free_row(
    instance: &LinearMdpInstance,
    params: &AlgorithmParams,
    row: &mut ReportRow,
) -> Result<DeploymentLog> {
    let (data, log) = run_reward_free_exploration(instance, &params.det_params(row.seed))?;
    row.deployments = log.deployments();
    row.budget = Some(log.budget);
    row.returned = log.returned();
    let gap = planning_gap(instance, &data.layers, params)?;
    row.suboptimality = Some(gap);
    row.success = row.returned && gap <= params.epsilon + GAP_TOL;
    if let Err(e) = log.check_invariants() {
        row.invariant_violation = Some(e.to_string());
    }
    Ok(log)
}

fn nu_for(instance: &LinearMdpInstance, params: &AlgorithmParams) -> Result<f64> {
    match params.nu_min {
        Some(nu) => Ok(nu),
        None => Ok(reachability_coefficient(instance, ReachabilityMethod::BruteForce, params.reachability_cap)?.nu_min),
    }
}

/// Arbitrary-policy exploration followed by planning; `K ≠ H` is an invariant violation.
fn arb_row(
    instance: &LinearMdpInstance,
    params: &AlgorithmParams,
    nu: f64,
    row: &mut ReportRow,
    evaluate: bool,
) -> Result<crate::arb::ArbRun> {
    let run = run_arbitrary_derl(instance, &params.arb_params(row.seed, nu))?;
    row.arb_deployments = Some(run.deployments);
    row.arb_horizon = Some(instance.horizon());
    if run.deployments != instance.horizon() {
        row.invariant_violation = Some(format!(
            "arbitrary-policy run used {} deployments on horizon {}",
            run.deployments,
            instance.horizon()
        ));
    }
    if evaluate {
        row.deployments = run.deployments;
        row.returned = true;
        let gap = planning_gap(instance, &run.dataset.layers, params)?;
        row.suboptimality = Some(gap);
        row.success = gap <= params.epsilon + GAP_TOL && row.invariant_violation.is_none();
    }
    Ok(run)
}

enum Shard {
    Log(DeploymentLog),
    Covers(Box<crate::arb::ArbRun>),
}

fn write_shard(dir: &Path, point: usize, seed: u64, instance: &LinearMdpInstance, shard: &Shard) -> Result<()> {
    let name = format!("point{point}_seed{seed}");
    match shard {
        Shard::Log(log) => {
            let sub = dir.join("deployments");
            fs::create_dir_all(&sub)?;
            log.save_csv(instance, &RewardSpec::Native, sub.join(format!("{name}.csv")))
        }
        Shard::Covers(run) => {
            let sub = dir.join("covers");
            fs::create_dir_all(&sub)?;
            save_covers(&run.covers, sub.join(format!("{name}.json")))
        }
    }
}

/// Instance for a given seed; hard families rotate through their members.
fn resolve_instance(source: &InstanceSource, seed: u64) -> Result<LinearMdpInstance> {
    match source {
        InstanceSource::HardFamily { d, horizon, epsilon } => {
            let fam = enumerate_family_deterministic(*d, *horizon, *epsilon)?;
            build_hard_mdp(&fam[(seed % fam.len() as u64) as usize])
        }
        InstanceSource::Hard { spec } => build_hard_mdp(spec),
        InstanceSource::File { path } => LinearMdpInstance::load_json(path),
        InstanceSource::RandomSimplex(p) => simplex_random(*p),
    }
}

fn source_dims(source: &InstanceSource, instance: &LinearMdpInstance) -> (usize, usize) {
    match source {
        InstanceSource::HardFamily { d, horizon, .. } => (*d, *horizon),
        InstanceSource::Hard { spec } => (spec.d, spec.horizon),
        _ => (instance.d(), instance.horizon()),
    }
}

/// Dispatches `config` to the named module and writes its artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let report = match config.experiment {
        ExperimentKind::LemmaFuzz => run_fuzz(config)?,
        ExperimentKind::LowerBoundScaling => {
            let grid = config.grid.as_ref().expect("validated");
            lower_bound_scaling(grid, &config.params, &config.seeds, config.output.dir.as_deref())?
        }
        kind => run_single(config, kind)?,
    };
    if let Some(dir) = &config.output.dir {
        report.write(dir)?;
    }
    Ok(report)
}

fn run_fuzz(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let base = config.fuzz.clone().unwrap_or_default();
    let mut rows = Vec::new();
    let mut suites = Vec::new();
    for &seed in &config.seeds {
        let start = Instant::now();
        let suite = run_fuzz_suite(&FuzzConfig { seed, ..base.clone() })?;
        let mut row = ReportRow::new(0, 0, 0, seed);
        row.success = suite.failures() == 0;
        row.returned = true;
        if !row.success {
            row.invariant_violation = Some(format!("{} lemma violations", suite.failures()));
        }
        row.runtime_secs = start.elapsed().as_secs_f64();
        rows.push(row);
        suites.push(suite);
    }
    Ok(ExperimentReport {
        experiment: ExperimentKind::LemmaFuzz,
        aggregate: aggregate(&rows, None),
        rows,
        fuzz: suites,
        warnings: Vec::new(),
    })
}

fn run_single(config: &ExperimentConfig, kind: ExperimentKind) -> Result<ExperimentReport> {
    let source = config.instance.as_ref().expect("validated");
    let params = &config.params;
    let dir = config.output.dir.as_deref();
    // ν depends only on the instance, so compute it once unless the family rotates.
    let shared_nu = match (kind, source) {
        (ExperimentKind::ArbDerl, InstanceSource::HardFamily { .. }) => None,
        (ExperimentKind::ArbDerl, _) => Some(nu_for(&resolve_instance(source, 0)?, params)?),
        _ => None,
    };
    let results: Vec<(ReportRow, Vec<String>)> = config
        .seeds
        .par_iter()
        .map(|&seed| -> Result<(ReportRow, Vec<String>)> {
            let start = Instant::now();
            let instance = resolve_instance(source, seed)?;
            let (d, h) = source_dims(source, &instance);
            let mut row = ReportRow::new(0, d, h, seed);
            let mut warnings = Vec::new();
            let shard = match kind {
                ExperimentKind::DetDerl => Shard::Log(det_row(&instance, params, &mut row)?),
                ExperimentKind::RewardFree => Shard::Log(reward_free_row(&instance, params, &mut row)?),
                _ => {
                    let nu = match shared_nu {
                        Some(nu) => nu,
                        None => nu_for(&instance, params)?,
                    };
                    let run = arb_row(&instance, params, nu, &mut row, true)?;
                    warnings.extend(run.warnings.iter().map(|w| format!("seed {seed}: {w}")));
                    Shard::Covers(Box::new(run))
                }
            };
            if let Some(dir) = dir {
                write_shard(dir, 0, seed, &instance, &shard)?;
            }
            row.runtime_secs = start.elapsed().as_secs_f64();
            Ok((row, warnings))
        })
        .collect::<Result<_>>()?;
    let (mut rows, warnings): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    rows.sort_by_key(|r| (r.point, r.seed));
    Ok(ExperimentReport {
        experiment: kind,
        aggregate: aggregate(&rows, None),
        rows,
        fuzz: Vec::new(),
        warnings: warnings.concat(),
    })
}

/// Deterministic deployment over the hard family at every `(d, H)` grid point,
/// with mean `K` regressed on `d·H`. Each job also runs arbitrary-policy
/// exploration on the same instance to check `K = H`.
pub fn lower_bound_scaling(
    grid: &ScalingGrid,
    params: &AlgorithmParams,
    seeds: &[u64],
    out_dir: Option<&Path>,
) -> Result<ExperimentReport> {
    if seeds.is_empty() {
        return Err(DerlError::Config("seed list is empty".into()));
    }
    let points: Vec<(usize, usize)> = grid
        .d
        .iter()
        .flat_map(|&d| grid.horizon.iter().map(move |&h| (d, h)))
        .collect();
    let families: Vec<Vec<HardInstanceSpec>> = points
        .iter()
        .map(|&(d, h)| enumerate_family_deterministic(d, h, grid.epsilon))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, u64)> = (0..points.len()).flat_map(|p| seeds.iter().map(move |&s| (p, s))).collect();
    // ν is zero on the hard family unless overridden: some one-hot directions are never reachable.
    let nu = params.nu_min.unwrap_or(0.0);
    let mut rows: Vec<ReportRow> = jobs
        .par_iter()
        .map(|&(p, seed)| -> Result<ReportRow> {
            let start = Instant::now();
            let (d, h) = points[p];
            let fam = &families[p];
            let instance = build_hard_mdp(&fam[(seed % fam.len() as u64) as usize])?;
            let mut row = ReportRow::new(p, d, h, seed);
            let log = det_row(&instance, params, &mut row)?;
            arb_row(&instance, params, nu, &mut row, false)?;
            if let Some(dir) = out_dir {
                write_shard(dir, p, seed, &instance, &Shard::Log(log))?;
            }
            row.runtime_secs = start.elapsed().as_secs_f64();
            Ok(row)
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| (r.point, r.seed));

    let fit_points: Vec<(f64, f64)> = points
        .iter()
        .enumerate()
        .map(|(p, &(d, h))| {
            let ks: Vec<f64> = rows.iter().filter(|r| r.point == p).map(|r| r.deployments as f64).collect();
            ((d * h) as f64, ks.iter().sum::<f64>() / ks.len() as f64)
        })
        .collect();
    let fit = linear_fit(&fit_points);
    let arb_k_equals_h = rows.iter().all(|r| r.arb_deployments.is_some() && r.arb_deployments == r.arb_horizon);
    let arb_k_constant_in_d = grid.horizon.iter().all(|&h| {
        let mut ks = rows.iter().filter(|r| r.horizon == h).map(|r| r.arb_deployments);
        let first = ks.next().flatten();
        ks.all(|k| k == first)
    });
    let scaling = ScalingFit {
        points: fit_points,
        slope: fit.map(|f| f.0),
        intercept: fit.map(|f| f.1),
        r_squared: fit.map(|f| f.2),
        arb_k_equals_h,
        arb_k_constant_in_d,
    };
    Ok(ExperimentReport {
        experiment: ExperimentKind::LowerBoundScaling,
        aggregate: aggregate(&rows, Some(scaling)),
        rows,
        fuzz: Vec::new(),
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det_config(seeds: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            experiment: ExperimentKind::DetDerl,
            instance: Some(InstanceSource::HardFamily { d: 4, horizon: 3, epsilon: 0.1 }),
            params: AlgorithmParams { n: 800, ..AlgorithmParams::default() },
            grid: None,
            fuzz: None,
            seeds,
            output: OutputPaths::default(),
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = det_config(vec![1, 2]);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        assert!(ExperimentConfig::from_json(&serde_json::to_string(&det_config(vec![])).unwrap()).is_err());
        let mut bad = det_config(vec![1]);
        bad.schema_version = 99;
        assert!(bad.validate().is_err());
        bad = det_config(vec![1]);
        bad.instance = Some(InstanceSource::File { path: "/no/such/file.json".into() });
        assert!(matches!(bad.validate(), Err(DerlError::Config(_))));
        assert!(matches!(ExperimentConfig::from_json("{\"schema_version\": 1"), Err(DerlError::Config(_))));
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"schema_version": 1, "experiment": "DetDerl",
                "instance": {"kind": "hard_family", "d": 4, "H": 3, "epsilon": 0.1},
                "seeds": [0]}"#,
        )
        .unwrap();
        assert_eq!(cfg.params, AlgorithmParams::default());
    }

    #[test]
    fn fit_handles_degenerate_and_exact_lines() {
        assert!(linear_fit(&[(16.0, 10.0)]).is_none());
        assert!(linear_fit(&[(16.0, 10.0), (16.0, 12.0)]).is_none());
        let (b, a, r2) = linear_fit(&[(1.0, 3.0), (2.0, 5.0), (3.0, 7.0)]).unwrap();
        assert!((b - 2.0).abs() < 1e-12 && (a - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rows_are_sorted_and_deterministic() {
        let cfg = det_config(vec![3, 1, 2]);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(a.rows_csv().unwrap(), b.rows_csv().unwrap());
        assert_eq!(a.aggregate.runs, 3);
        assert!((0.0..=1.0).contains(&a.aggregate.success_rate));
    }

    #[test]
    fn single_point_scaling_has_no_slope() {
        let grid = ScalingGrid { d: vec![4], horizon: vec![3], epsilon: 0.1 };
        let params = AlgorithmParams { n: 500, i_max: 1, ..AlgorithmParams::default() };
        let rep = lower_bound_scaling(&grid, &params, &[0, 1], None).unwrap();
        let fit = rep.aggregate.scaling.unwrap();
        assert!(fit.slope.is_none() && fit.r_squared.is_none());
        assert!(fit.arb_k_equals_h);
        assert_eq!(rep.rows.len(), 2);
    }

    #[test]
    fn exit_codes() {
        let mut rep = ExperimentReport {
            experiment: ExperimentKind::DetDerl,
            rows: vec![],
            aggregate: aggregate(&[], None),
            fuzz: vec![],
            warnings: vec![],
        };
        assert_eq!(rep.exit_code(), exit_code::SUCCESS);
        rep.aggregate.budget_exhausted = 1;
        assert_eq!(rep.exit_code(), exit_code::BUDGET);
        rep.aggregate.invariant_violations = 1;
        assert_eq!(rep.exit_code(), exit_code::INVARIANT);
        assert_eq!(error_exit_code(&DerlError::Config("x".into())), exit_code::CONFIG);
        assert_eq!(error_exit_code(&DerlError::Contract("x".into())), exit_code::INVARIANT);
    }
}
