//! Least-squares value iteration: Gram accumulators, ridge regression,
//! optimism bonuses and clipped linear Q-functions.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DerlError, Result};
use crate::linalg::{quad_form, spd_inverse, spd_logdet, symmetrize, Matrix, Vector};
use crate::mdp::dp::argmax;
use crate::mdp::instance::{LinearMdpInstance, RewardTable};
use crate::mdp::policy::DeterministicPolicy;
use crate::rng::SeedStream;

const NORM_TOL: f64 = 1e-9;
const REFRESH_EVERY: u64 = 4096;

/// `Λ = λI + Σ φφᵀ` together with its inverse and log-determinant.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    lambda_reg: f64,
    gram: Matrix,
    inverse: Matrix,
    logdet: f64,
    count: u64,
    since_refresh: u64,
}

impl CovarianceAccumulator {
    pub fn new(d: usize, lambda_reg: f64) -> Self {
        assert!(lambda_reg > 0.0, "regulariser must be positive");
        Self {
            lambda_reg,
            gram: Matrix::identity(d, d) * lambda_reg,
            inverse: Matrix::identity(d, d) / lambda_reg,
            logdet: d as f64 * lambda_reg.ln(),
            count: 0,
            since_refresh: 0,
        }
    }

    pub fn identity(d: usize) -> Self {
        Self::new(d, 1.0)
    }

    pub fn d(&self) -> usize {
        self.gram.nrows()
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn inverse(&self) -> &Matrix {
        &self.inverse
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Number of absorbed vectors, counting multiplicity.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn absorb(&mut self, phi: &Vector) -> Result<()> {
        self.absorb_repeated(phi, 1)
    }

    /// Absorbs `m` copies of `φ` in one rank-1 update.
    pub fn absorb_repeated(&mut self, phi: &Vector, m: u64) -> Result<()> {
        if phi.len() != self.d() {
            return Err(DerlError::Parameter(format!("expected a {}-vector, got {}", self.d(), phi.len())));
        }
        if !(phi.norm() <= 1.0 + NORM_TOL) {
            return Err(DerlError::Parameter("absorbed features must have norm <= 1".into()));
        }
        if m == 0 {
            return Ok(());
        }
        let mf = m as f64;
        let v = &self.inverse * phi;
        let q = phi.dot(&v);
        let denom = 1.0 + mf * q;
        if !(denom > 0.0) {
            return Err(DerlError::Numeric(format!("rank-1 denominator {denom} is not positive")));
        }
        self.gram.ger(mf, phi, phi, 1.0);
        self.inverse.ger(-mf / denom, &v, &v, 1.0);
        self.logdet += denom.ln();
        self.count += m;
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_EVERY {
            self.refresh()?;
        }
        Ok(())
    }

    /// Recomputes the inverse and log-determinant from the Gram matrix.
    pub fn refresh(&mut self) -> Result<()> {
        self.gram = symmetrize(&self.gram);
        self.inverse = spd_inverse(&self.gram)?;
        self.logdet = spd_logdet(&self.gram)?;
        self.since_refresh = 0;
        Ok(())
    }

    /// Adds the data of `other` (its regulariser is not double counted).
    pub fn merge(&mut self, other: &CovarianceAccumulator) -> Result<()> {
        if other.d() != self.d() {
            return Err(DerlError::Parameter("cannot merge accumulators of different dimension".into()));
        }
        self.gram += &other.gram - Matrix::identity(self.d(), self.d()) * other.lambda_reg;
        self.count += other.count;
        self.refresh()
    }

    /// `φᵀΛ⁻¹φ`, floored at zero.
    #[inline]
    pub fn quad(&self, phi: &Vector) -> f64 {
        quad_form(&self.inverse, phi).max(0.0)
    }
}

/// `min(β √(φᵀΛ⁻¹φ), ceiling)`.
#[inline]
pub fn bonus(acc: &CovarianceAccumulator, phi: &Vector, beta: f64, ceiling: f64) -> f64 {
    (beta * acc.quad(phi).sqrt()).min(ceiling).max(0.0)
}

/// `w = Λ⁻¹ Σ φ·target`. The accumulator must hold exactly the dataset's features.
pub fn ridge_fit(acc: &CovarianceAccumulator, dataset: &[(Vector, f64)]) -> Result<Vector> {
    if acc.count() != dataset.len() as u64 {
        return Err(DerlError::Contract(format!(
            "accumulator holds {} vectors but the dataset has {}",
            acc.count(),
            dataset.len()
        )));
    }
    let mut rhs = Vector::zeros(acc.d());
    for (phi, y) in dataset {
        rhs.axpy(*y, phi, 1.0);
    }
    Ok(acc.inverse() * rhs)
}

/// One logged transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    /// `None` on the final layer.
    pub next_state: Option<usize>,
}

/// The data of one layer, kept as a multiset of transitions plus its Gram matrix.
#[derive(Debug, Clone)]
pub struct LayerData {
    layer: usize,
    counts: BTreeMap<Transition, u64>,
    acc: CovarianceAccumulator,
}

impl LayerData {
    pub fn new(layer: usize, d: usize) -> Self {
        Self { layer, counts: BTreeMap::new(), acc: CovarianceAccumulator::identity(d) }
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn accumulator(&self) -> &CovarianceAccumulator {
        &self.acc
    }

    pub fn len(&self) -> u64 {
        self.acc.count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> &BTreeMap<Transition, u64> {
        &self.counts
    }

    /// Adds a batch, absorbing each distinct `(s, a)` once with its multiplicity.
    pub fn extend(&mut self, instance: &LinearMdpInstance, batch: impl IntoIterator<Item = Transition>) -> Result<()> {
        let mut pairs: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for t in batch {
            *self.counts.entry(t).or_insert(0) += 1;
            *pairs.entry((t.state, t.action)).or_insert(0) += 1;
        }
        for ((s, a), m) in pairs {
            self.acc.absorb_repeated(instance.phi(self.layer, s, a), m)?;
        }
        Ok(())
    }

    /// `Λ⁻¹ Σ φ(s,a)·next_value(s')`; final-layer transitions contribute zero.
    pub fn regress(&self, instance: &LinearMdpInstance, next_value: &[f64]) -> Vector {
        let mut rhs = Vector::zeros(self.acc.d());
        for (t, &m) in &self.counts {
            if let Some(sp) = t.next_state {
                let y = next_value.get(sp).copied().unwrap_or(0.0);
                if y != 0.0 {
                    rhs.axpy(m as f64 * y, instance.phi(self.layer, t.state, t.action), 1.0);
                }
            }
        }
        self.acc.inverse() * rhs
    }

    /// The expanded `(φ, V(s'))` list, for use with [`ridge_fit`].
    pub fn regression_dataset(&self, instance: &LinearMdpInstance, next_value: &[f64]) -> Vec<(Vector, f64)> {
        let mut out = Vec::with_capacity(self.len() as usize);
        for (t, &m) in &self.counts {
            let y = t.next_state.and_then(|sp| next_value.get(sp).copied()).unwrap_or(0.0);
            for _ in 0..m {
                out.push((instance.phi(self.layer, t.state, t.action).clone(), y));
            }
        }
        out
    }
}

/// Data with `reps` transitions from every `(s, a)` of every layer, reachable
/// or not, drawn from the true kernel.
pub fn exhaustive_data(instance: &LinearMdpInstance, reps: usize, seed: u64) -> Result<Vec<LayerData>> {
    let seeds = SeedStream::new(seed);
    (0..instance.horizon())
        .map(|h| {
            let mut rng = seeds.aux_rng(h as u64);
            let mut batch = Vec::new();
            for s in 0..instance.num_states(h) {
                for a in 0..instance.num_actions_at(h, s) {
                    for _ in 0..reps {
                        let next_state = (h + 1 < instance.horizon()).then(|| {
                            let u: f64 = rng.random();
                            let c = instance.cumulative(h, s, a);
                            c.iter().position(|&x| u < x).unwrap_or(c.len() - 1)
                        });
                        batch.push(Transition { state: s, action: a, next_state });
                    }
                }
            }
            let mut layer = LayerData::new(h, instance.d());
            layer.extend(instance, batch)?;
            Ok(layer)
        })
        .collect()
}

/// Per-step reward used by [`lsvi_backup`].
#[derive(Debug, Clone, Copy)]
pub enum BackupReward<'a> {
    Known(&'a RewardTable),
    /// `r = u / scale`, with `u` the clipped bonus.
    ScaledBonus(f64),
    Zero,
}

/// Clipped linear Q-functions over layers `0..h_top`.
#[derive(Debug, Clone)]
pub struct LinearQ {
    pub w: Vec<Vector>,
    /// `Λ_h⁻¹` per layer; the bonus is `β √(φᵀ Λ_h⁻¹ φ)`.
    pub bonus_matrix: Vec<Matrix>,
    pub beta: f64,
    pub clip_ceiling: f64,
    /// `q[h][s][a]`, each in `[0, clip_ceiling]`.
    pub q: Vec<Vec<Vec<f64>>>,
}

impl LinearQ {
    pub fn layers(&self) -> usize {
        self.q.len()
    }

    pub fn value(&self, h: usize, s: usize) -> f64 {
        argmax(&self.q[h][s]).1
    }

    /// `Σ_s d₁(s) V₁(s)`.
    pub fn initial_value(&self, instance: &LinearMdpInstance) -> f64 {
        instance.init().iter().enumerate().map(|(s, p)| p * self.value(0, s)).sum()
    }
}

/// Backward LSVI over layers `h_top-1, …, 0` with `V_{h_top} ≡ 0`:
/// `u = min(β√(φᵀΛ⁻¹φ), c)`, `Q = clip(wᵀφ + r + u, 0, c)`, greedy with
/// lowest-index ties. Layers at or beyond `h_top` take action 0.
pub fn lsvi_backup(
    instance: &LinearMdpInstance,
    data: &[LayerData],
    reward: BackupReward<'_>,
    h_top: usize,
    beta: f64,
    ceiling: f64,
) -> Result<(LinearQ, DeterministicPolicy)> {
    if h_top == 0 || h_top > instance.horizon() || data.len() < h_top {
        return Err(DerlError::Parameter(format!(
            "h_top = {h_top} needs 1..={} layers of data, got {}",
            instance.horizon(),
            data.len()
        )));
    }
    let mut w = vec![Vector::zeros(instance.d()); h_top];
    let mut bonus_matrix = Vec::with_capacity(h_top);
    let mut q = vec![Vec::new(); h_top];
    let mut next: Vec<f64> = Vec::new();
    for h in (0..h_top).rev() {
        let acc = data[h].accumulator();
        w[h] = if next.is_empty() { Vector::zeros(instance.d()) } else { data[h].regress(instance, &next) };
        let layer: Vec<Vec<f64>> = (0..instance.num_states(h))
            .map(|s| {
                (0..instance.num_actions_at(h, s))
                    .map(|a| {
                        let f = instance.phi(h, s, a);
                        let u = bonus(acc, f, beta, ceiling);
                        let r = match reward {
                            BackupReward::Known(t) => t.get(h, s, a),
                            BackupReward::ScaledBonus(scale) => u / scale,
                            BackupReward::Zero => 0.0,
                        };
                        (w[h].dot(f) + r + u).clamp(0.0, ceiling)
                    })
                    .collect()
            })
            .collect();
        next = layer.iter().map(|row| argmax(row).1).collect();
        q[h] = layer;
        bonus_matrix.push(acc.inverse().clone());
    }
    bonus_matrix.reverse();
    let policy = DeterministicPolicy::from_fn(instance, |h, s| if h < h_top { argmax(&q[h][s]).0 } else { 0 });
    Ok((LinearQ { w, bonus_matrix, beta, clip_ceiling: ceiling, q }, policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_entry;
    use crate::mdp::dp::optimal_q;
    use crate::mdp::generators;
    use crate::rng::SeedStream;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_unit_ball(rng: &mut impl Rng, d: usize) -> Vector {
        let v = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1.0 {
            v / n
        } else {
            v
        }
    }

    #[test]
    fn absorb_basis_vector() {
        let mut acc = CovarianceAccumulator::identity(3);
        acc.absorb(&Vector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        assert_eq!(acc.gram().diagonal(), Vector::from_vec(vec![2.0, 1.0, 1.0]));
        assert!((acc.logdet() - 2f64.ln()).abs() < 1e-15);
        let before = acc.clone();
        acc.absorb(&Vector::zeros(3)).unwrap();
        assert_eq!(acc.gram(), before.gram());
        assert_eq!(acc.inverse(), before.inverse());
        assert_eq!(acc.logdet(), before.logdet());
    }

    #[test]
    fn rejects_long_features() {
        let mut acc = CovarianceAccumulator::identity(2);
        assert!(matches!(acc.absorb(&Vector::from_vec(vec![1.0, 0.5])), Err(DerlError::Parameter(_))));
    }

    #[test]
    fn incremental_inverse_matches_dense() {
        let mut rng = SeedStream::new(1).aux_rng(0);
        let mut acc = CovarianceAccumulator::identity(6);
        for _ in 0..1000 {
            acc.absorb(&random_unit_ball(&mut rng, 6)).unwrap();
        }
        let dense = acc.gram().clone().try_inverse().unwrap();
        assert!(max_abs_entry(&(acc.inverse() - dense)) <= 1e-6);
        let prod = acc.inverse() * acc.gram();
        assert!(max_abs_entry(&(prod - Matrix::identity(6, 6))) <= 1e-8);
        assert!((acc.logdet() - acc.gram().determinant().ln()).abs() < 1e-8);
    }

    #[test]
    fn repeated_absorb_equals_single_absorbs() {
        let f = Vector::from_vec(vec![0.6, 0.0, 0.8]);
        let mut a = CovarianceAccumulator::identity(3);
        let mut b = CovarianceAccumulator::identity(3);
        a.absorb_repeated(&f, 50).unwrap();
        for _ in 0..50 {
            b.absorb(&f).unwrap();
        }
        assert_eq!(a.count(), b.count());
        assert!(max_abs_entry(&(a.gram() - b.gram())) < 1e-12);
        assert!(max_abs_entry(&(a.inverse() - b.inverse())) < 1e-12);
        assert!((a.logdet() - b.logdet()).abs() < 1e-10);
    }

    #[test]
    fn merge_matches_sequential() {
        let mut rng = SeedStream::new(3).aux_rng(0);
        let xs: Vec<Vector> = (0..200).map(|_| random_unit_ball(&mut rng, 4)).collect();
        let mut all = CovarianceAccumulator::identity(4);
        let mut left = CovarianceAccumulator::identity(4);
        let mut right = CovarianceAccumulator::identity(4);
        for (i, x) in xs.iter().enumerate() {
            all.absorb(x).unwrap();
            if i % 2 == 0 { left.absorb(x) } else { right.absorb(x) }.unwrap();
        }
        left.merge(&right).unwrap();
        assert_eq!(left.count(), 200);
        assert!(max_abs_entry(&(left.gram() - all.gram())) < 1e-10);
        assert!(max_abs_entry(&(left.inverse() - all.inverse())) < 1e-10);
    }

    #[test]
    fn bonus_examples() {
        let acc = CovarianceAccumulator::identity(3);
        let e1 = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(bonus(&acc, &Vector::zeros(3), 5.0, 10.0), 0.0);
        assert_eq!(bonus(&acc, &e1, 2.0, 10.0), 2.0);
        assert_eq!(bonus(&acc, &e1, 20.0, 10.0), 10.0);
    }

    #[test]
    fn ridge_examples() {
        let mut acc = CovarianceAccumulator::identity(3);
        assert_eq!(ridge_fit(&acc, &[]).unwrap(), Vector::zeros(3));
        let e1 = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        acc.absorb(&e1).unwrap();
        assert_eq!(ridge_fit(&acc, &[(e1.clone(), 1.0)]).unwrap(), Vector::from_vec(vec![0.5, 0.0, 0.0]));
        assert!(matches!(ridge_fit(&acc, &[]), Err(DerlError::Contract(_))));
    }

    #[test]
    fn ridge_recovers_planted_target() {
        let mut rng = SeedStream::new(8).aux_rng(0);
        let truth = Vector::from_vec(vec![0.3, -0.7, 0.2, 0.5]);
        let mut acc = CovarianceAccumulator::identity(4);
        let mut data = Vec::new();
        for _ in 0..10_000 {
            let x = random_unit_ball(&mut rng, 4);
            acc.absorb(&x).unwrap();
            let y = truth.dot(&x);
            data.push((x, y));
        }
        let w = ridge_fit(&acc, &data).unwrap();
        assert!((w - truth).norm() <= 0.01);
    }

    #[test]
    fn layer_regression_matches_ridge_fit() {
        let inst = generators::tabular_random(3, 2, 3, 4);
        let seeds = SeedStream::new(2);
        let mut layer = LayerData::new(1, inst.d());
        let mut rng = seeds.aux_rng(1);
        let batch: Vec<Transition> = (0..500)
            .map(|_| Transition { state: rng.random_range(0..3), action: rng.random_range(0..2), next_state: Some(rng.random_range(0..3)) })
            .collect();
        layer.extend(&inst, batch).unwrap();
        let v = vec![0.2, 1.5, 0.9];
        let fast = layer.regress(&inst, &v);
        let slow = ridge_fit(layer.accumulator(), &layer.regression_dataset(&inst, &v)).unwrap();
        assert!((fast - slow).amax() < 1e-10);
    }

    fn empty_layers(inst: &LinearMdpInstance) -> Vec<LayerData> {
        (0..inst.horizon()).map(|h| LayerData::new(h, inst.d())).collect()
    }

    #[test]
    fn empty_data_gives_pure_bonus() {
        let inst = generators::simplex_random(generators::SimplexParams {
            d: 3,
            states: 2,
            actions: 2,
            horizon: 3,
            feature_concentration: 0.5,
            seed: 1,
        })
        .unwrap();
        let data = empty_layers(&inst);
        let (lq, _) = lsvi_backup(&inst, &data, BackupReward::Zero, 3, 0.7, 5.0).unwrap();
        for h in 0..3 {
            for s in 0..inst.num_states(h) {
                for a in 0..2 {
                    let expected = (0.7 * inst.phi(h, s, a).norm()).min(5.0);
                    assert!((lq.q[h][s][a] - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn exhaustive_data_recovers_optimal_q() {
        let inst = generators::tabular_random(3, 2, 3, 6);
        let data = exhaustive_data(&inst, 10_000, 5).unwrap();
        let (lq, _) = lsvi_backup(&inst, &data, BackupReward::Known(inst.rewards()), 3, 0.0, 3.0).unwrap();
        let qstar = optimal_q(&inst, inst.rewards(), 3).unwrap();
        for h in 0..3 {
            for s in 0..inst.num_states(h) {
                for a in 0..2 {
                    assert!((lq.q[h][s][a] - qstar[h][s][a]).abs() <= 0.02, "h={h} s={s} a={a}");
                }
            }
        }
    }

    #[test]
    fn q_values_stay_in_range_and_ties_break_low() {
        let inst = generators::bandit(3);
        let data = empty_layers(&inst);
        let (lq, pi) = lsvi_backup(&inst, &data, BackupReward::Known(inst.rewards()), 1, 1.0, 1.0).unwrap();
        assert!(lq.q[0][0].iter().all(|&q| q == 1.0));
        assert_eq!(pi.action(0, 0), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gram_is_order_independent(seed in 0u64..1000, n in 1usize..60) {
            let mut rng = SeedStream::new(seed).aux_rng(0);
            let xs: Vec<Vector> = (0..n).map(|_| random_unit_ball(&mut rng, 3)).collect();
            let mut fwd = CovarianceAccumulator::identity(3);
            let mut bwd = CovarianceAccumulator::identity(3);
            xs.iter().for_each(|x| fwd.absorb(x).unwrap());
            xs.iter().rev().for_each(|x| bwd.absorb(x).unwrap());
            prop_assert!(max_abs_entry(&(fwd.gram() - bwd.gram())) < 1e-12);
            prop_assert!(max_abs_entry(&(fwd.inverse() - bwd.inverse())) < 1e-6);
        }

        #[test]
        fn bonus_and_logdet_are_monotone(seed in 0u64..1000, n in 1usize..60) {
            let mut rng = SeedStream::new(seed).aux_rng(1);
            let probe = random_unit_ball(&mut rng, 4);
            let mut acc = CovarianceAccumulator::identity(4);
            for _ in 0..n {
                let before_bonus = bonus(&acc, &probe, 1.0, f64::INFINITY);
                let before_logdet = acc.logdet();
                acc.absorb(&random_unit_ball(&mut rng, 4)).unwrap();
                prop_assert!(bonus(&acc, &probe, 1.0, f64::INFINITY) <= before_bonus + 1e-12);
                prop_assert!(acc.logdet() >= before_logdet);
                prop_assert!(crate::linalg::min_eigenvalue(acc.gram()) >= 1.0 - 1e-8);
            }
            let bound = 4.0 * (1.0 + n as f64 / 4.0).ln();
            prop_assert!(acc.logdet() <= bound + 1e-6);
        }
    }
}
