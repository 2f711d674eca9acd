//! Numeric checkers and seeded fuzzers for the matrix inequalities behind the
//! deployment bounds.
//!
//! Every checker evaluates both sides of one inequality with dense `O(d³)`
//! linear algebra. The fuzzers sweep `d ∈ {2, 4, 8}`, run trials in parallel,
//! and derive each trial's generator from `(seed, trial index)` so reports do
//! not depend on the worker count.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DerlError, Result};
use crate::linalg::{max_abs_entry, min_eigenvalue, quad_form, spd_inverse, spd_logdet, Matrix, Vector};
use crate::rng::SeedStream;

const NORM_TOL: f64 = 1e-9;
const HOLD_TOL: f64 = 1e-9;

/// Dimensions swept by every fuzzer.
pub const FUZZ_DIMS: [usize; 3] = [2, 4, 8];

/// `K` batches of `N` feature vectors each, stored as `(vector, multiplicity)`
/// pairs so that large `N` stays cheap.
#[derive(Debug, Clone)]
pub struct BatchSequence {
    d: usize,
    n: u64,
    batches: Vec<Vec<(Vector, u64)>>,
}

impl BatchSequence {
    /// Validates dimensions, `‖φ‖ ≤ 1` and that every batch holds exactly `n` vectors.
    pub fn new(d: usize, n: u64, batches: Vec<Vec<(Vector, u64)>>) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(DerlError::Parameter("d and N must be positive".into()));
        }
        for (k, batch) in batches.iter().enumerate() {
            let mut total = 0u64;
            for (phi, m) in batch {
                if phi.len() != d {
                    return Err(DerlError::Parameter(format!(
                        "batch {}: vector of length {} in dimension {d}",
                        k + 1,
                        phi.len()
                    )));
                }
                if phi.norm() > 1.0 + NORM_TOL {
                    return Err(DerlError::Parameter(format!(
                        "batch {}: feature norm {} exceeds 1",
                        k + 1,
                        phi.norm()
                    )));
                }
                total += m;
            }
            if total != n {
                return Err(DerlError::Parameter(format!(
                    "batch {} holds {total} vectors, expected {n}",
                    k + 1
                )));
            }
        }
        Ok(Self { d, n, batches })
    }

    /// Builds a sequence from plain lists, one entry per vector.
    pub fn from_vectors(d: usize, batches: Vec<Vec<Vector>>) -> Result<Self> {
        let n = batches.first().map_or(0, |b| b.len() as u64);
        let batches = batches
            .into_iter()
            .map(|b| b.into_iter().map(|v| (v, 1)).collect())
            .collect();
        Self::new(d, n, batches)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn batch_size(&self) -> u64 {
        self.n
    }

    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn batches(&self) -> &[Vec<(Vector, u64)>] {
        &self.batches
    }

    /// `Φ_{k−1}` for the 1-based batch index `k`.
    pub fn batch_gram(&self, k: usize) -> Matrix {
        let mut phi = Matrix::zeros(self.d, self.d);
        for (v, m) in &self.batches[k - 1] {
            phi += (v * v.transpose()) * (*m as f64);
        }
        phi
    }

    /// `A_0, A_N, …, A_{KN}` with `A_0 = I`.
    pub fn a_matrices(&self) -> Vec<Matrix> {
        let mut out = Vec::with_capacity(self.batches.len() + 1);
        let mut a = Matrix::identity(self.d, self.d);
        out.push(a.clone());
        for k in 1..=self.batches.len() {
            a += self.batch_gram(k);
            out.push(a.clone());
        }
        out
    }

    /// `Tr(A⁻¹_{(k−1)N} Φ_{k−1})` for every batch, in order.
    pub fn batch_traces(&self) -> Vec<f64> {
        let mut a = Matrix::identity(self.d, self.d);
        let mut out = Vec::with_capacity(self.batches.len());
        for k in 1..=self.batches.len() {
            let phi = self.batch_gram(k);
            let inv = a.clone().try_inverse().expect("A ⪰ I is invertible");
            out.push((inv * &phi).trace());
            a += phi;
        }
        out
    }

    /// `log det A_{kN} − log det A_{(k−1)N}` for every batch.
    pub fn logdet_increments(&self) -> Vec<f64> {
        let logdets: Vec<f64> = self
            .a_matrices()
            .iter()
            .map(|a| spd_logdet(a).expect("A ⪰ I is positive definite"))
            .collect();
        logdets.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// 1-based indices `k` with `Tr(A⁻¹_{(k−1)N} Φ_{k−1}) ≥ Nε`.
pub fn violation_set(seq: &BatchSequence, eps: f64) -> BTreeSet<usize> {
    let threshold = seq.n as f64 * eps;
    seq.batch_traces()
        .into_iter()
        .enumerate()
        .filter(|(_, t)| *t >= threshold)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Smallest `N` with `Nε ≥ d·L` and `(Nε / (d·L))^{c_K} ≥ 1 + KN/d`, where
/// `L = log(1 + KN/d)` and `K = c_K·d·H + 1`. Under these two conditions the
/// violation set has at most `c_K·d` members.
pub fn required_batch_size(d: usize, horizon: usize, c_k: u32, eps: f64) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(DerlError::Parameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    if c_k < 2 || d == 0 || horizon == 0 {
        return Err(DerlError::Parameter("need c_K ≥ 2, d ≥ 1, H ≥ 1".into()));
    }
    let k = (c_k as usize * d * horizon + 1) as f64;
    let df = d as f64;
    let ok = |n: u64| {
        let nf = n as f64;
        let l = (1.0 + k * nf / df).ln();
        let ratio = nf * eps / (df * l);
        ratio >= 1.0 && ratio.powi(c_k as i32) >= 1.0 + k * nf / df
    };
    let mut hi = 1u64;
    while !ok(hi) {
        hi = hi
            .checked_mul(2)
            .ok_or_else(|| DerlError::Numeric("batch size search overflowed".into()))?;
    }
    let mut lo = hi / 2;
    // The ratio grows like N / log N, so the feasible set is an upper ray.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Both sides of one inequality plus the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs <= rhs + HOLD_TOL * (1.0 + rhs.abs()),
        }
    }

    /// `lhs / rhs`, or `None` when the bound is zero.
    pub fn ratio(&self) -> Option<f64> {
        (self.rhs > 0.0).then(|| self.lhs / self.rhs)
    }
}

fn require_square(name: &str, m: &Matrix, d: usize) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(DerlError::Parameter(format!(
            "{name} is {}x{}, expected {d}x{d}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn require_dominates_identity(a: &Matrix) -> Result<()> {
    let lo = min_eigenvalue(a);
    if lo < 1.0 - 1e-9 {
        return Err(DerlError::Parameter(format!(
            "A must dominate the identity, smallest eigenvalue {lo}"
        )));
    }
    Ok(())
}

/// `Tr(A⁻¹Φ) ≤ ρ·log ρ` with `ρ = det(A+Φ)/det(A)`.
pub fn trace_det_bridge_check(a: &Matrix, phi: &Matrix) -> Result<InequalityCheck> {
    let d = a.nrows();
    require_square("A", a, d)?;
    require_square("Phi", phi, d)?;
    require_dominates_identity(a)?;
    let lhs = (spd_inverse(a)? * phi).trace();
    let log_ratio = spd_logdet(&(a + phi))? - spd_logdet(a)?;
    let rhs = log_ratio.exp() * log_ratio;
    Ok(InequalityCheck::new(lhs, rhs))
}

/// Measured gaps and bounds for a perturbation `A₊ = A + Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    /// Smallest eigenvalue of the symmetric part of `A₊`.
    pub a_plus_min_eig: f64,
    pub quadratic: InequalityCheck,
    pub inverse_quadratic: InequalityCheck,
    pub inverse_norm: InequalityCheck,
}

impl PerturbationReport {
    pub fn holds(&self) -> bool {
        self.a_plus_min_eig > 0.0
            && self.quadratic.holds
            && self.inverse_quadratic.holds
            && self.inverse_norm.holds
    }

    /// Largest `lhs/rhs` over the three bounds.
    pub fn max_ratio(&self) -> Option<f64> {
        [self.quadratic, self.inverse_quadratic, self.inverse_norm]
            .iter()
            .filter_map(|c| c.ratio())
            .reduce(f64::max)
    }
}

/// Checks the three perturbation bounds for `A ⪰ I`, `|Δ_ij| ≤ eps < 1/d` and `‖φ‖ ≤ 1`.
pub fn matrix_perturbation_check(
    a: &Matrix,
    delta: &Matrix,
    eps: f64,
    phi: &Vector,
) -> Result<PerturbationReport> {
    let d = a.nrows();
    require_square("A", a, d)?;
    require_square("Delta", delta, d)?;
    require_dominates_identity(a)?;
    if phi.len() != d || phi.norm() > 1.0 + NORM_TOL {
        return Err(DerlError::Parameter("phi must be a vector of length d with norm ≤ 1".into()));
    }
    if !(eps >= 0.0 && eps * (d as f64) < 1.0) {
        return Err(DerlError::Parameter(format!("eps = {eps} must satisfy 0 ≤ eps < 1/d")));
    }
    if max_abs_entry(delta) > eps * (1.0 + 1e-12) {
        return Err(DerlError::Parameter(format!(
            "|Δ_ij| reaches {} above eps = {eps}",
            max_abs_entry(delta)
        )));
    }
    let de = d as f64 * eps;
    let a_plus = a + delta;
    let a_inv = a.clone().try_inverse().ok_or_else(|| DerlError::Numeric("A is singular".into()))?;
    let a_plus_inv = a_plus
        .clone()
        .try_inverse()
        .ok_or_else(|| DerlError::Numeric("A + Δ is singular".into()))?;
    let quad_gap = quad_form(delta, phi).abs();
    let n_plus = quad_form(&a_plus_inv, phi);
    let n_base = quad_form(&a_inv, phi);
    let inv_bound = de / (1.0 - de);
    Ok(PerturbationReport {
        a_plus_min_eig: min_eigenvalue(&a_plus),
        quadratic: InequalityCheck::new(quad_gap, de),
        inverse_quadratic: InequalityCheck::new((n_plus - n_base).abs(), inv_bound),
        inverse_norm: InequalityCheck::new(
            (n_plus.max(0.0).sqrt() - n_base.max(0.0).sqrt()).abs(),
            inv_bound.sqrt(),
        ),
    })
}

/// `Σ_t Tr(X_t M⁻¹_{t−1}) ≤ (1 + 1/λ)·d·log(1 + T/d)` with `M_0 = λI`.
pub fn elliptical_potential_check(xs: &[Matrix], lambda: f64) -> Result<InequalityCheck> {
    let d = xs
        .first()
        .map(|x| x.nrows())
        .ok_or_else(|| DerlError::Parameter("empty sequence".into()))?;
    if lambda <= 0.0 {
        return Err(DerlError::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    let mut m = Matrix::identity(d, d) * lambda;
    let mut lhs = 0.0;
    for x in xs {
        require_square("X_t", x, d)?;
        if x.trace() > 1.0 + NORM_TOL || min_eigenvalue(x) < -1e-12 {
            return Err(DerlError::Parameter("each X_t must be PSD with trace ≤ 1".into()));
        }
        lhs += (spd_inverse(&m)? * x).trace();
        m += x;
    }
    let df = d as f64;
    let rhs = (1.0 + 1.0 / lambda) * df * (1.0 + xs.len() as f64 / df).ln();
    Ok(InequalityCheck::new(lhs, rhs))
}

/// `det A ≤ (Tr A / d)^d` for PSD `A`, compared in log space.
pub fn amgm_det_check(a: &Matrix) -> Result<InequalityCheck> {
    let d = a.nrows() as f64;
    let lhs = spd_logdet(a)?;
    let rhs = d * (a.trace() / d).ln();
    Ok(InequalityCheck::new(lhs, rhs))
}

/// `|Σ_k log(det A_{kN}/det A_{(k−1)N}) − log det A_{KN}|`.
pub fn logdet_telescoping_gap(seq: &BatchSequence) -> f64 {
    let total: f64 = seq.logdet_increments().iter().sum();
    let last = seq.a_matrices().pop().expect("A_0 is always present");
    (total - spd_logdet(&last).expect("A ⪰ I")).abs()
}

/// Outcome of one fuzzing campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub name: String,
    pub trials: u64,
    pub failures: u64,
    /// Largest observed `lhs/rhs`; values near 1 witness tightness.
    pub max_slack_ratio: f64,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Trial counts and seed for [`run_fuzz_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuzzConfig {
    pub seed: u64,
    pub bridge_trials: u64,
    pub perturbation_trials: u64,
    pub elliptical_trials: u64,
    pub batched_trials: u64,
    pub auxiliary_trials: u64,
    pub c_k: u32,
    pub horizon: usize,
    pub eps: f64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            bridge_trials: 100_000,
            perturbation_trials: 100_000,
            elliptical_trials: 100_000,
            batched_trials: 1_000,
            auxiliary_trials: 10_000,
            c_k: 2,
            horizon: 2,
            eps: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzSuite {
    pub config: FuzzConfig,
    pub reports: Vec<FuzzReport>,
}

impl FuzzSuite {
    pub fn failures(&self) -> u64 {
        self.reports.iter().map(|r| r.failures).sum()
    }
}

/// Runs every fuzzer in `config`.
pub fn run_fuzz_suite(config: &FuzzConfig) -> Result<FuzzSuite> {
    let s = config.seed;
    let reports = vec![
        fuzz_trace_det_bridge(config.bridge_trials, s),
        fuzz_matrix_perturbation(config.perturbation_trials, s),
        fuzz_elliptical_potential(config.elliptical_trials, s),
        fuzz_batched_violations(config.batched_trials, s, config.c_k, config.horizon, config.eps)?,
        fuzz_logdet_telescoping(config.auxiliary_trials, s),
        fuzz_amgm(config.auxiliary_trials, s),
    ];
    Ok(FuzzSuite {
        config: config.clone(),
        reports,
    })
}

struct TrialOutcome {
    failed: bool,
    ratio: Option<f64>,
}

fn campaign<F>(name: &str, trials: u64, seed: u64, tag: u64, trial: F) -> FuzzReport
where
    F: Fn(usize, &mut ChaCha8Rng) -> TrialOutcome + Sync,
{
    let stream = SeedStream::new(seed).child(tag);
    let (failures, max_ratio) = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream.aux_rng(t);
            let d = FUZZ_DIMS[(t % FUZZ_DIMS.len() as u64) as usize];
            trial(d, &mut rng)
        })
        .map(|o| (o.failed as u64, o.ratio.unwrap_or(0.0)))
        .reduce(|| (0, 0.0), |a, b| (a.0 + b.0, a.1.max(b.1)));
    FuzzReport {
        name: name.to_string(),
        trials,
        failures,
        max_slack_ratio: max_ratio,
    }
}

fn outcome(check: Result<InequalityCheck>) -> TrialOutcome {
    match check {
        Ok(c) => TrialOutcome {
            failed: !c.holds,
            ratio: c.ratio(),
        },
        Err(_) => TrialOutcome {
            failed: true,
            ratio: None,
        },
    }
}

/// Uniform direction scaled to a random norm in `[0, 1]`, biased towards 1.
fn random_feature(d: usize, rng: &mut ChaCha8Rng) -> Vector {
    let g = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let r: f64 = if rng.random_bool(0.5) { 1.0 } else { rng.random::<f64>().sqrt() };
    let n = g.norm();
    if n == 0.0 {
        Vector::zeros(d)
    } else {
        g * (r / n)
    }
}

/// Log-uniform scale in `[10^lo, 10^hi]`.
fn log_scale(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo..=hi))
}

/// `I + Σ_j s·g_j g_jᵀ` with a random rank and scale.
fn random_dominating(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut a = Matrix::identity(d, d);
    let rank = rng.random_range(0..=d);
    let scale = log_scale(rng, -2.0, 2.0);
    for _ in 0..rank {
        let g = random_feature(d, rng);
        a += (&g * g.transpose()) * scale;
    }
    a
}

/// Sum of `m` outer products of unit-ball features, sometimes one repeated direction.
fn random_update(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut phi = Matrix::zeros(d, d);
    if rng.random_bool(0.25) {
        let v = random_feature(d, rng);
        let m = log_scale(rng, -3.0, 2.0);
        return (&v * v.transpose()) * m;
    }
    let m = rng.random_range(1..=20);
    for _ in 0..m {
        let v = random_feature(d, rng);
        phi += &v * v.transpose();
    }
    phi
}

pub fn fuzz_trace_det_bridge(trials: u64, seed: u64) -> FuzzReport {
    campaign("trace_det_bridge", trials, seed, 1, |d, rng| {
        let a = random_dominating(d, rng);
        let phi = random_update(d, rng);
        outcome(trace_det_bridge_check(&a, &phi))
    })
}

pub fn fuzz_matrix_perturbation(trials: u64, seed: u64) -> FuzzReport {
    campaign("matrix_perturbation", trials, seed, 2, |d, rng| {
        let df = d as f64;
        // Push eps close to 1/d in some trials to probe the blow-up of the inverse bound.
        let frac = if rng.random_bool(0.2) {
            1.0 - log_scale(rng, -6.0, -1.0)
        } else {
            rng.random::<f64>()
        };
        let eps = frac / df;
        let adversarial = rng.random_bool(0.1);
        let (a, delta, phi) = if adversarial {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (
                Matrix::identity(d, d),
                Matrix::from_element(d, d, sign * eps),
                Vector::from_element(d, 1.0 / df.sqrt()),
            )
        } else {
            let a = random_dominating(d, rng);
            let mut delta = Matrix::zeros(d, d);
            for i in 0..d {
                for j in 0..=i {
                    let v = if rng.random_bool(0.3) {
                        if rng.random_bool(0.5) { eps } else { -eps }
                    } else {
                        rng.random_range(-eps..=eps)
                    };
                    delta[(i, j)] = v;
                    delta[(j, i)] = v;
                }
            }
            (a, delta, random_feature(d, rng))
        };
        match matrix_perturbation_check(&a, &delta, eps, &phi) {
            Ok(r) => TrialOutcome {
                failed: !r.holds(),
                ratio: r.max_ratio(),
            },
            Err(_) => TrialOutcome {
                failed: true,
                ratio: None,
            },
        }
    })
}

pub fn fuzz_elliptical_potential(trials: u64, seed: u64) -> FuzzReport {
    campaign("elliptical_potential", trials, seed, 3, |d, rng| {
        let lambda = rng.random_range(1.0..=3.0);
        let t_len = rng.random_range(1..=60);
        let xs: Vec<Matrix> = (0..t_len)
            .map(|_| {
                let v = random_feature(d, rng);
                if rng.random_bool(0.5) {
                    &v * v.transpose()
                } else {
                    let w = random_feature(d, rng);
                    let split: f64 = rng.random();
                    (&v * v.transpose()) * split + (&w * w.transpose()) * (1.0 - split)
                }
            })
            .collect();
        outcome(elliptical_potential_check(&xs, lambda))
    })
}

/// One batch of `n` vectors drawn from a few structured patterns.
fn structured_batch(
    d: usize,
    n: u64,
    next_axis: &mut usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(Vector, u64)> {
    match rng.random_range(0..5) {
        0 => {
            let mut e = Vector::zeros(d);
            e[*next_axis % d] = 1.0;
            *next_axis += 1;
            vec![(e, n)]
        }
        1 => vec![(Vector::zeros(d), n)],
        2 => vec![(random_feature(d, rng), n)],
        _ => {
            let parts = rng.random_range(1..=4).min(n as usize);
            let mut cuts: Vec<u64> = (1..parts).map(|_| rng.random_range(0..=n)).collect();
            cuts.push(0);
            cuts.push(n);
            cuts.sort_unstable();
            cuts.windows(2)
                .map(|w| (random_feature(d, rng), w[1] - w[0]))
                .filter(|(_, m)| *m > 0)
                .collect()
        }
    }
}

/// Checks `|𝒦⁺| ≤ c_K·d` over structured sequences with `K = c_K·d·H + 1`
/// and the smallest admissible batch size from [`required_batch_size`].
pub fn fuzz_batched_violations(
    trials: u64,
    seed: u64,
    c_k: u32,
    horizon: usize,
    eps: f64,
) -> Result<FuzzReport> {
    let sizes: Vec<u64> = FUZZ_DIMS
        .iter()
        .map(|&d| required_batch_size(d, horizon, c_k, eps))
        .collect::<Result<_>>()?;
    Ok(campaign("batched_violations", trials, seed, 4, |d, rng| {
        let slot = FUZZ_DIMS.iter().position(|&x| x == d).expect("swept dimension");
        let n = sizes[slot];
        let k = c_k as usize * d * horizon + 1;
        let mut axis = 0;
        let batches = (0..k).map(|_| structured_batch(d, n, &mut axis, rng)).collect();
        match BatchSequence::new(d, n, batches) {
            Ok(seq) => {
                let size = violation_set(&seq, eps).len() as f64;
                let bound = (c_k as usize * d) as f64;
                TrialOutcome {
                    failed: size > bound,
                    ratio: Some(size / bound),
                }
            }
            Err(_) => TrialOutcome {
                failed: true,
                ratio: None,
            },
        }
    }))
}

pub fn fuzz_logdet_telescoping(trials: u64, seed: u64) -> FuzzReport {
    campaign("logdet_telescoping", trials, seed, 5, |d, rng| {
        let n = rng.random_range(1..=50);
        let k = rng.random_range(1..=12);
        let mut axis = 0;
        let batches = (0..k).map(|_| structured_batch(d, n, &mut axis, rng)).collect();
        match BatchSequence::new(d, n, batches) {
            Ok(seq) => {
                let gap = logdet_telescoping_gap(&seq);
                TrialOutcome {
                    failed: gap > 1e-6,
                    ratio: Some(gap / 1e-6),
                }
            }
            Err(_) => TrialOutcome {
                failed: true,
                ratio: None,
            },
        }
    })
}

pub fn fuzz_amgm(trials: u64, seed: u64) -> FuzzReport {
    campaign("amgm_det", trials, seed, 6, |d, rng| {
        let a = random_dominating(d, rng) + random_update(d, rng);
        match amgm_det_check(&a) {
            // Log space: report exp(lhs − rhs) = det / bound.
            Ok(c) => TrialOutcome {
                failed: !c.holds,
                ratio: Some((c.lhs - c.rhs).exp()),
            },
            Err(_) => TrialOutcome {
                failed: true,
                ratio: None,
            },
        }
    })
}
