//! Arbitrary-policy deployment: policy covers built from estimated
//! covariance matrices, one deployment per layer.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::det::{deploy, RewardFreeDataset};
use crate::error::{DerlError, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue, psd_projection, quad_form, spd_inverse, Matrix, Vector};
use crate::lsvi::{LayerData, Transition};
use crate::mdp::dp::{argmax, enumerate_deterministic_policies, expected_covariance};
use crate::mdp::instance::LinearMdpInstance;
use crate::mdp::policy::{DeterministicPolicy, Policy};
use crate::rng::SeedStream;

const PSD_TOL: f64 = 1e-12;
const PROJECTION_WARN: f64 = 1e-9;

/// `ε₀ ⌈x / ε₀⌉`, where quotients within rounding error of an integer count
/// as that integer (so `-0.3` stays on the `0.1` grid).
fn grid_ceil(x: f64, eps0: f64) -> f64 {
    let q = x / eps0;
    let r = q.round();
    eps0 * if (q - r).abs() <= 1e-9 * r.abs().max(1.0) { r } else { q.ceil() }
}

/// Entrywise `ε₀ ⌈x / ε₀⌉`.
pub fn discretize_vector(w: &Vector, eps0: f64) -> Result<Vector> {
    check_grid(eps0)?;
    Ok(w.map(|x| grid_ceil(x, eps0)))
}

pub fn discretize_matrix(m: &Matrix, eps0: f64) -> Result<Matrix> {
    check_grid(eps0)?;
    Ok(m.map(|x| grid_ceil(x, eps0)))
}

fn check_grid(eps0: f64) -> Result<()> {
    if !(eps0 > 0.0 && eps0.is_finite()) {
        return Err(DerlError::Parameter(format!("grid resolution {eps0} must be positive")));
    }
    Ok(())
}

/// True when every entry is an integer multiple of `grid`.
pub fn on_grid<'a>(values: impl IntoIterator<Item = &'a f64>, grid: f64) -> bool {
    values.into_iter().all(|&x| {
        let m = x / grid;
        (m - m.round()).abs() <= 1e-9 * m.abs().max(1.0)
    })
}

fn fixed_start(instance: &LinearMdpInstance) -> Result<usize> {
    instance
        .fixed_initial_state()
        .ok_or_else(|| DerlError::InvalidInstance("a fixed initial state is required".into()))
}

fn check_prior(data: &[LayerData], h: usize) -> Result<()> {
    if data.len() < h {
        return Err(DerlError::MissingData(format!("need data for layers 0..{h}, got {}", data.len())));
    }
    if let Some(l) = (0..h).find(|&l| data[l].is_empty()) {
        return Err(DerlError::MissingData(format!("no data at layer {l}")));
    }
    Ok(())
}

/// Estimates `E_π̄[φ_h φ_hᵀ]` by evaluating `π̄` under the rewards
/// `(1 + φ_iφ_j)/2` at layer `h` with clipped regressions on earlier layers.
pub fn estimate_cov_matrix(
    instance: &LinearMdpInstance,
    h: usize,
    data: &[LayerData],
    pi_bar: &DeterministicPolicy,
) -> Result<Matrix> {
    let s1 = fixed_start(instance)?;
    check_prior(data, h)?;
    pi_bar.validate(instance)?;
    let d = instance.d();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut v: Vec<f64> = (0..instance.num_states(h))
                .map(|s| {
                    let f = instance.phi(h, s, pi_bar.action(h, s));
                    (1.0 + f[i] * f[j]) / 2.0
                })
                .collect();
            for l in (0..h).rev() {
                let w = data[l].regress(instance, &v);
                v = (0..instance.num_states(l))
                    .map(|s| w.dot(instance.phi(l, s, pi_bar.action(l, s))).clamp(0.0, 1.0))
                    .collect();
            }
            v[s1]
        })
        .collect();
    let mut out = Matrix::zeros(d, d);
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        out[(i, j)] = 2.0 * v - 1.0;
        out[(j, i)] = out[(i, j)];
    }
    Ok(out)
}

/// Grid-valued weights and bonus matrices that determine a deployed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedQ {
    /// Target layer; `w_bar` has `h` entries and `z_bar` has `h + 1`.
    pub h: usize,
    pub eps0: f64,
    pub w_bar: Vec<Vector>,
    pub z_bar: Vec<Matrix>,
}

impl DiscretizedQ {
    pub fn weight_grid(&self, d: usize) -> f64 {
        self.eps0 / (2 * d) as f64
    }

    pub fn matrix_grid(&self, d: usize) -> f64 {
        self.eps0 * self.eps0 / (4 * d) as f64
    }

    /// `Q̄` at `(l, s, a)`: `√(φᵀZφ)` at the top layer, `min(w̄ᵀφ + √(φᵀZφ), 1)` below.
    pub fn q(&self, instance: &LinearMdpInstance, l: usize, s: usize, a: usize) -> f64 {
        let f = instance.phi(l, s, a);
        let u = quad_form(&self.z_bar[l], f).max(0.0).sqrt();
        if l == self.h {
            u
        } else {
            (self.w_bar[l].dot(f) + u).min(1.0)
        }
    }

    /// The greedy policy on layers `0..=h`; later layers take action 0.
    pub fn policy(&self, instance: &LinearMdpInstance) -> DeterministicPolicy {
        DeterministicPolicy::from_fn(instance, |l, s| {
            if l > self.h {
                return 0;
            }
            let q: Vec<f64> = (0..instance.num_actions_at(l, s)).map(|a| self.q(instance, l, s, a)).collect();
            argmax(&q).0
        })
    }
}

#[derive(Debug, Clone)]
pub struct OptQSolution {
    /// `V₁(s₁)` of the undiscretized chain.
    pub v1: f64,
    pub policy: DeterministicPolicy,
    pub discretized: DiscretizedQ,
}

/// Optimistic planning towards the reward `√(φᵀ(2I + Σ_R)⁻¹φ)` at layer `h`.
///
/// Runs the undiscretized chain for the returned value and the grid chain for
/// the returned policy.
pub fn solve_opt_q(
    instance: &LinearMdpInstance,
    h: usize,
    data: &[LayerData],
    beta_prime: f64,
    sigma_r: &Matrix,
    eps0: f64,
) -> Result<OptQSolution> {
    let s1 = fixed_start(instance)?;
    check_prior(data, h)?;
    check_grid(eps0)?;
    let d = instance.d();
    if sigma_r.nrows() != d || sigma_r.ncols() != d {
        return Err(DerlError::Parameter("sigma_R has the wrong shape".into()));
    }
    if min_eigenvalue(sigma_r) < -0.5 - 1e-9 {
        return Err(DerlError::Parameter("sigma_R must satisfy sigma_R >= -I/2".into()));
    }
    let weight_grid = eps0 / (2 * d) as f64;
    let matrix_grid = eps0 * eps0 / (4 * d) as f64;

    let m = spd_inverse(&(Matrix::identity(d, d) * 2.0 + sigma_r))?;
    let z_top = discretize_matrix(&m, matrix_grid)?;
    let (lo, hi) = (min_eigenvalue(&z_top), max_eigenvalue(&z_top));
    if lo < -PSD_TOL || hi > 1.0 + PSD_TOL {
        return Err(DerlError::Constraint(format!("top-layer Z has spectrum [{lo}, {hi}], outside [0, 1]")));
    }
    let mut v: Vec<f64> = (0..instance.num_states(h))
        .map(|s| {
            (0..instance.num_actions_at(h, s))
                .map(|a| quad_form(&m, instance.phi(h, s, a)).max(0.0).sqrt())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    let mut w_bar = vec![Vector::zeros(d); h];
    let mut z_bar = vec![Matrix::zeros(d, d); h + 1];
    z_bar[h] = z_top;
    for l in (0..h).rev() {
        let w = data[l].regress(instance, &v);
        let inv = data[l].accumulator().inverse();
        v = (0..instance.num_states(l))
            .map(|s| {
                (0..instance.num_actions_at(l, s))
                    .map(|a| {
                        let f = instance.phi(l, s, a);
                        (w.dot(f) + beta_prime * quad_form(inv, f).max(0.0).sqrt()).clamp(0.0, 1.0)
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let z = discretize_matrix(&(inv * (beta_prime * beta_prime)), matrix_grid)?;
        let lo = min_eigenvalue(&z);
        if lo < -PSD_TOL {
            return Err(DerlError::Constraint(format!("Z at layer {l} has eigenvalue {lo} < 0")));
        }
        w_bar[l] = discretize_vector(&w, weight_grid)?;
        z_bar[l] = z;
    }
    let discretized = DiscretizedQ { h, eps0, w_bar, z_bar };
    Ok(OptQSolution { v1: v[s1], policy: discretized.policy(instance), discretized })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbParams {
    pub i_max: usize,
    /// Defaults to the stricter of `1/N` and `1/(2d(N+1))`.
    #[serde(default)]
    pub eps0: Option<f64>,
    pub beta_prime: f64,
    /// Break threshold is `3ν²/8`.
    pub nu_min: f64,
    pub n: usize,
    pub seed: u64,
}

impl ArbParams {
    pub fn resolved_eps0(&self, d: usize) -> f64 {
        let cap = (1.0 / self.n as f64).min(1.0 / (2.0 * d as f64 * (self.n as f64 + 1.0)));
        self.eps0.map_or(cap, |e| e.min(cap))
    }

    pub fn validate(&self) -> Result<()> {
        if self.i_max == 0 || self.n == 0 {
            return Err(DerlError::Parameter("i_max and N must be positive".into()));
        }
        if !(self.beta_prime >= 0.0) || !(self.nu_min >= 0.0 && self.nu_min <= 1.0) {
            return Err(DerlError::Parameter("need beta' >= 0 and nu_min in [0, 1]".into()));
        }
        if let Some(e) = self.eps0 {
            check_grid(e)?;
        }
        Ok(())
    }
}

/// The policies collected for one layer and the bookkeeping behind them.
#[derive(Debug, Clone)]
pub struct PolicyCover {
    pub layer: usize,
    /// Distinct members of `Π_h`, in insertion order.
    pub policies: Vec<DeterministicPolicy>,
    /// Grid values that reproduce each member.
    pub discretized: Vec<DiscretizedQ>,
    /// `Σ̃` after every iteration, starting with `2I`.
    pub sigma_tilde: Vec<Matrix>,
    /// Estimated covariance of each iteration's candidate.
    pub estimates: Vec<Matrix>,
    /// `V_{h,i+1}` per iteration.
    pub values: Vec<f64>,
    pub iterations: usize,
    /// The break rule fired.
    pub converged: bool,
    /// `Π_h` was empty and the initial policy was deployed alone.
    pub fallback: bool,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverSnapshot {
    pub layer: usize,
    pub policies: Vec<DeterministicPolicy>,
    pub sigma_tilde: Vec<Vec<Vec<f64>>>,
    pub estimates: Vec<Vec<Vec<f64>>>,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub fallback: bool,
}

impl PolicyCover {
    pub fn snapshot(&self) -> CoverSnapshot {
        CoverSnapshot {
            layer: self.layer,
            policies: self.policies.clone(),
            sigma_tilde: self.sigma_tilde.iter().map(rows).collect(),
            estimates: self.estimates.iter().map(rows).collect(),
            values: self.values.clone(),
            iterations: self.iterations,
            converged: self.converged,
            fallback: self.fallback,
        }
    }
}

pub fn save_covers(covers: &[PolicyCover], path: impl AsRef<Path>) -> Result<()> {
    let snaps: Vec<CoverSnapshot> = covers.iter().map(PolicyCover::snapshot).collect();
    std::fs::write(path, serde_json::to_string_pretty(&snaps)?)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ArbRun {
    /// Layer `h` holds only the data of deployment `h`.
    pub dataset: RewardFreeDataset,
    pub covers: Vec<PolicyCover>,
    pub deployments: usize,
    pub eps0: f64,
    pub warnings: Vec<String>,
}

/// Builds a policy cover per layer and deploys its uniform mixture once,
/// for exactly `H` deployments.
pub fn run_arbitrary_derl(instance: &LinearMdpInstance, params: &ArbParams) -> Result<ArbRun> {
    params.validate()?;
    fixed_start(instance)?;
    let d = instance.d();
    let eps0 = params.resolved_eps0(d);
    let stop = 3.0 * params.nu_min * params.nu_min / 8.0;
    let seeds = SeedStream::new(params.seed);
    let mut dataset = RewardFreeDataset::new(instance, params.n);
    let mut covers = Vec::with_capacity(instance.horizon());
    let mut warnings = Vec::new();
    let mut deployments = 0;

    for h in 0..instance.horizon() {
        let initial = DeterministicPolicy::first_action(instance);
        let mut current = initial.clone();
        let mut sigma = Matrix::identity(d, d) * 2.0;
        let mut cover = PolicyCover {
            layer: h,
            policies: Vec::new(),
            discretized: Vec::new(),
            sigma_tilde: vec![sigma.clone()],
            estimates: Vec::new(),
            values: Vec::new(),
            iterations: 0,
            converged: false,
            fallback: false,
        };
        let prior = &dataset.layers[..h];
        let mut projected = 0;
        for i in 1..=params.i_max {
            let raw = estimate_cov_matrix(instance, h, prior, &current)?;
            // Directions the data never reached come back strongly negative.
            let est = psd_projection(&raw);
            if (&est - &raw).amax() > PROJECTION_WARN {
                projected += 1;
            }
            sigma += &est;
            cover.estimates.push(est);
            cover.sigma_tilde.push(sigma.clone());
            let sigma_r = &sigma - Matrix::identity(d, d) * 2.0;
            let sol = solve_opt_q(instance, h, prior, params.beta_prime, &sigma_r, eps0)?;
            cover.values.push(sol.v1);
            cover.iterations = i;
            if sol.v1 <= stop {
                cover.converged = true;
                break;
            }
            if !cover.policies.contains(&sol.policy) {
                cover.policies.push(sol.policy.clone());
                cover.discretized.push(sol.discretized);
            }
            current = sol.policy;
        }
        if projected > 0 {
            warnings.push(format!("layer {h}: {projected} covariance estimates projected onto the PSD cone"));
        }
        if !cover.converged {
            warnings.push(format!("layer {h}: no break after {} iterations", params.i_max));
        }
        if cover.policies.is_empty() {
            cover.fallback = true;
            cover.policies.push(initial);
        }
        deployments += 1;
        let trajectories = deploy(instance, &Policy::UniformMixture(cover.policies.clone()), &seeds, deployments, params.n);
        let batch = trajectories.iter().map(|t| {
            let st = t.steps[h];
            Transition { state: st.state, action: st.action, next_state: st.next_state }
        });
        dataset.layers[h].extend(instance, batch)?;
        dataset.deployments += 1;
        covers.push(cover);
    }
    Ok(ArbRun { dataset, covers, deployments, eps0, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReachabilityMethod {
    BruteForce,
    SvdLowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityReport {
    pub nu_per_layer: Vec<f64>,
    pub nu_min: f64,
    pub method: ReachabilityMethod,
}

/// Distinct `E_π[φ_h φ_hᵀ]` over deterministic policies. Past `cap` policies,
/// a seeded sample of `cap` random policies is used instead and the flag is set.
fn covariance_set(instance: &LinearMdpInstance, h: usize, cap: usize) -> Result<(Vec<Matrix>, bool)> {
    let (policies, sampled) = match enumerate_deterministic_policies(instance, h + 1, cap) {
        Ok(p) => (p, false),
        Err(_) => {
            let mut rng = SeedStream::new(h as u64).aux_rng(0x5A);
            let p = (0..cap)
                .map(|_| DeterministicPolicy::from_fn(instance, |l, s| rng.random_range(0..instance.num_actions_at(l, s))))
                .collect();
            (p, true)
        }
    };
    let mut mats: Vec<Matrix> = policies
        .par_iter()
        .map(|p| expected_covariance(instance, &p.clone().into(), h))
        .collect::<Result<_>>()?;
    mats.sort_by(|a, b| a.as_slice().partial_cmp(b.as_slice()).unwrap_or(std::cmp::Ordering::Equal));
    mats.dedup_by(|a, b| (&*a - &*b).amax() < 1e-14);
    Ok((mats, sampled))
}

fn worst_case(mats: &[Matrix], theta: &Vector) -> f64 {
    mats.iter().map(|m| quad_form(m, theta)).fold(0.0, f64::max)
}

fn sphere_points(d: usize) -> Vec<Vector> {
    match d {
        1 => vec![Vector::from_element(1, 1.0)],
        2 => (0..4096)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / 4096.0;
                Vector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..4096)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / 4096.0;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * k as f64;
                    Vector::from_vec(vec![r * t.cos(), r * t.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut rng = SeedStream::new(d as u64).aux_rng(0x5F);
            (0..32768)
                .map(|_| {
                    let v = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let n = v.norm();
                    v / n
                })
                .collect()
        }
    }
}

/// Shrinking-step pattern search on the sphere.
fn refine(mats: &[Matrix], start: &Vector) -> (Vector, f64) {
    let d = start.len();
    let mut theta = start.clone();
    let mut best = worst_case(mats, &theta);
    let mut step = 0.05;
    while step > 1e-7 {
        let mut improved = false;
        for j in 0..d {
            for sign in [1.0, -1.0] {
                let mut cand = theta.clone();
                cand[j] += sign * step;
                let n = cand.norm();
                if n == 0.0 {
                    continue;
                }
                cand /= n;
                let v = worst_case(mats, &cand);
                if v < best {
                    best = v;
                    theta = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (theta, best)
}

fn brute_force_nu(mats: &[Matrix], d: usize) -> f64 {
    let points = sphere_points(d);
    let mut scored: Vec<(f64, usize)> =
        points.par_iter().enumerate().map(|(i, p)| (worst_case(mats, p), i)).collect();
    scored.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let best = scored
        .iter()
        .take(8)
        .map(|&(_, i)| refine(mats, &points[i]).1)
        .fold(f64::INFINITY, f64::min);
    best.max(0.0).sqrt()
}

fn svd_bound(mats: &[Matrix]) -> f64 {
    mats.iter().map(|m| min_eigenvalue(m).max(0.0).sqrt()).fold(0.0, f64::max)
}

/// `ν_h = min_{‖θ‖=1} max_π √(θᵀ E_π[φφᵀ] θ)` per layer.
///
/// `BruteForce` searches the sphere (grid for `d ≤ 3`, 32768 seeded random
/// directions otherwise) and refines the best candidates; `SvdLowerBound`
/// returns `max_π √λ_min(E_π[φφᵀ])`. With more than `cap` policies only the
/// lower bound over a random policy sample is available.
pub fn reachability_coefficient(
    instance: &LinearMdpInstance,
    method: ReachabilityMethod,
    cap: usize,
) -> Result<ReachabilityReport> {
    let mut used = method;
    let mut nu = Vec::with_capacity(instance.horizon());
    for h in 0..instance.horizon() {
        let (mats, sampled) = covariance_set(instance, h, cap)?;
        if sampled {
            used = ReachabilityMethod::SvdLowerBound;
        }
        nu.push(match used {
            ReachabilityMethod::BruteForce => brute_force_nu(&mats, instance.d()),
            ReachabilityMethod::SvdLowerBound => svd_bound(&mats),
        });
    }
    if used != method {
        nu = (0..instance.horizon())
            .map(|h| covariance_set(instance, h, cap).map(|(m, _)| svd_bound(&m)))
            .collect::<Result<_>>()?;
    }
    let nu_min = nu.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ReachabilityReport { nu_per_layer: nu, nu_min, method: used })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_entry;
    use crate::lsvi::exhaustive_data;
    use crate::mdp::dp::uncertainty_diagnostic;
    use crate::mdp::generators::{self, SimplexParams};
    use proptest::prelude::*;

    fn small(seed: u64) -> LinearMdpInstance {
        generators::simplex_random(SimplexParams {
            d: 3,
            states: 3,
            actions: 3,
            horizon: 3,
            feature_concentration: 0.3,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn discretization_examples() {
        let z = discretize_vector(&Vector::zeros(3), 0.37).unwrap();
        assert_eq!(z, Vector::zeros(3));
        let w = discretize_vector(&Vector::from_vec(vec![0.25, -0.30]), 0.1).unwrap();
        assert!((w[0] - 0.3).abs() < 1e-15 && (w[1] + 0.3).abs() < 1e-15);
        assert!(on_grid(w.iter(), 0.1));
        assert!(discretize_vector(&w, 0.0).is_err());
        assert!(discretize_matrix(&Matrix::identity(2, 2), -1.0).is_err());
    }

    proptest! {
        #[test]
        fn discretization_error_and_grid(xs in proptest::collection::vec(-3.0f64..3.0, 1..10), e in 1e-6f64..0.5) {
            let v = Vector::from_vec(xs.clone());
            let out = discretize_vector(&v, e).unwrap();
            prop_assert!(on_grid(out.iter(), e));
            prop_assert!((&out - &v).norm() <= xs.len() as f64 * e + 1e-12);
            prop_assert!(out.iter().zip(v.iter()).all(|(o, x)| o - x >= -1e-9 * e.max(x.abs()) && o - x < e + 1e-12));
            let n = xs.len();
            let m = Matrix::from_fn(n, n, |i, j| xs[(i + j) % n]);
            let mo = discretize_matrix(&m, e).unwrap();
            prop_assert!(on_grid(mo.iter(), e));
            prop_assert!((&mo - &m).norm() <= n as f64 * e + 1e-12);
        }
    }

    #[test]
    fn covariance_estimate_is_symmetric_and_bounded() {
        let inst = small(1);
        let data = exhaustive_data(&inst, 2000, 3).unwrap();
        let pi = DeterministicPolicy::from_fn(&inst, |h, s| (h + s) % 3);
        let est = estimate_cov_matrix(&inst, 2, &data, &pi).unwrap();
        assert_eq!(est, est.transpose());
        assert!(est.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn covariance_estimate_matches_exact() {
        let inst = small(2);
        let data = exhaustive_data(&inst, 10_000 / 9, 7).unwrap();
        for k in 0..5 {
            let pi = DeterministicPolicy::from_fn(&inst, |h, s| (h * 5 + s * 3 + k) % 3);
            let est = estimate_cov_matrix(&inst, 2, &data, &pi).unwrap();
            let exact = expected_covariance(&inst, &pi.into(), 2).unwrap();
            assert!(max_abs_entry(&(est - exact)) <= 0.05);
        }
    }

    #[test]
    fn layer_zero_needs_no_data() {
        let inst = small(3);
        let pi = DeterministicPolicy::first_action(&inst);
        let est = estimate_cov_matrix(&inst, 0, &[], &pi).unwrap();
        let exact = expected_covariance(&inst, &pi.clone().into(), 0).unwrap();
        assert!(max_abs_entry(&(est - exact)) < 1e-12);
        assert!(matches!(estimate_cov_matrix(&inst, 1, &[], &pi), Err(DerlError::MissingData(_))));
    }

    #[test]
    fn opt_q_top_layer_only() {
        let inst = small(4);
        let sigma_r = Matrix::identity(3, 3) * 0.7;
        let sol = solve_opt_q(&inst, 0, &[], 1.0, &sigma_r, 1e-3).unwrap();
        let m = (Matrix::identity(3, 3) * 2.7).try_inverse().unwrap();
        let best = (0..3).map(|a| quad_form(&m, inst.phi(0, 0, a)).sqrt()).fold(0.0, f64::max);
        assert!((sol.v1 - best).abs() < 1e-12);
        let huge = Matrix::identity(3, 3) * 1e6;
        assert!(solve_opt_q(&inst, 0, &[], 1.0, &huge, 1e-3).unwrap().v1 < 1e-3);
        let bad = Matrix::identity(3, 3) * -0.9;
        assert!(solve_opt_q(&inst, 0, &[], 1.0, &bad, 1e-3).is_err());
    }

    #[test]
    fn opt_q_value_tracks_uncertainty_oracle() {
        let inst = small(5);
        let data = exhaustive_data(&inst, 5000, 2).unwrap();
        let sigma_r = Matrix::from_row_slice(3, 3, &[3.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 0.5]);
        let sol = solve_opt_q(&inst, 2, &data, 0.05, &sigma_r, 1e-5).unwrap();
        let target = Matrix::identity(3, 3) * 2.0 + &sigma_r;
        let mut sigmas = vec![Matrix::identity(3, 3) * 1e300; 3];
        sigmas[2] = target;
        let oracle = uncertainty_diagnostic(&inst, &sigmas, 3).unwrap();
        assert!((sol.v1 - oracle).abs() <= 0.1, "{} vs {oracle}", sol.v1);
    }

    #[test]
    fn discretized_values_are_on_grid_and_reproduce_policy() {
        let inst = small(6);
        let data = exhaustive_data(&inst, 500, 1).unwrap();
        let eps0 = 1e-3;
        let sol = solve_opt_q(&inst, 2, &data, 0.3, &Matrix::identity(3, 3), eps0).unwrap();
        let dq = &sol.discretized;
        for w in &dq.w_bar {
            assert!(on_grid(w.iter(), dq.weight_grid(3)));
        }
        for z in &dq.z_bar {
            assert!(on_grid(z.iter(), dq.matrix_grid(3)));
        }
        assert_eq!(dq.clone().policy(&inst), sol.policy);
    }

    #[test]
    fn single_action_chain_has_one_member_and_h_deployments() {
        let inst = generators::single_action_chain(1, 3, 0.5);
        let run = run_arbitrary_derl(
            &inst,
            &ArbParams { i_max: 20, eps0: None, beta_prime: 0.1, nu_min: 1.0, n: 50, seed: 0 },
        )
        .unwrap();
        assert_eq!(run.deployments, 3);
        for c in &run.covers {
            assert_eq!(c.policies.len(), 1);
            assert!(c.converged);
            for (i, est) in c.estimates.iter().enumerate() {
                let diff = &c.sigma_tilde[i + 1] - &c.sigma_tilde[i] - est;
                assert!(max_abs_entry(&diff) <= 1e-12);
            }
        }
        assert!(run.warnings.is_empty());
        for h in 0..3 {
            assert_eq!(run.dataset.layer_len(h), 50);
        }
    }

    #[test]
    fn eps0_takes_the_stricter_bound() {
        let p = ArbParams { i_max: 1, eps0: Some(0.5), beta_prime: 0.1, nu_min: 0.5, n: 10, seed: 0 };
        assert!((p.resolved_eps0(3) - 1.0 / 66.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_random_initial_state() {
        let mut parts = generators::tabular_random(2, 2, 2, 0).parts().clone();
        parts.states_per_layer[0] = 2;
        let first = parts.phi[0][0].clone();
        parts.phi[0].push(first);
        parts.init = vec![0.5, 0.5];
        let inst = LinearMdpInstance::new(parts).unwrap();
        let p = ArbParams { i_max: 1, eps0: None, beta_prime: 0.1, nu_min: 0.5, n: 10, seed: 0 };
        assert!(matches!(run_arbitrary_derl(&inst, &p), Err(DerlError::InvalidInstance(_))));
    }

    #[test]
    fn bandit_reachability_is_inverse_sqrt_d() {
        for d in 2..=4 {
            let r = reachability_coefficient(&generators::bandit(d), ReachabilityMethod::BruteForce, 10_000).unwrap();
            let target = 1.0 / (d as f64).sqrt();
            assert!((r.nu_min - target).abs() <= 0.02 * target, "d={d}: {}", r.nu_min);
        }
        let chain = generators::single_action_chain(1, 3, 0.2);
        let r = reachability_coefficient(&chain, ReachabilityMethod::BruteForce, 10).unwrap();
        assert!((r.nu_min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brute_force_dominates_svd_bound() {
        for seed in 0..3 {
            let inst = small(seed);
            let bf = reachability_coefficient(&inst, ReachabilityMethod::BruteForce, 10_000).unwrap();
            let sv = reachability_coefficient(&inst, ReachabilityMethod::SvdLowerBound, 10_000).unwrap();
            for (a, b) in bf.nu_per_layer.iter().zip(&sv.nu_per_layer) {
                assert!(a >= &(b - 1e-9));
            }
        }
    }
}
