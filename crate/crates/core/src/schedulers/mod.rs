//! Schedulers: the SMDP Q-learning agent and the RAND / TBO baselines.

mod agent;
mod baselines;
mod checkpoint;

pub use agent::{LearningSample, SmdpAgent};
pub use baselines::{rand_select, tbo_select, RandScheduler, TboScheduler};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ir_dimension, DistanceScaling, FeatureOptions, FeatureVector, RbfBank};

/// Which learner is being configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerMode {
    /// Core and V-F level, temperature-grid features in per-action blocks.
    DvfsEnabled,
    /// Core only, per-core quadruple features.
    Ir,
    /// Core only, temperature-grid features in per-core blocks, event-driven.
    Lct,
    /// As `Lct` but deciding on quota ticks.
    Ldt,
    /// One-hot features over an explicit state-action index.
    Tabular,
}

impl LearnerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LearnerMode::DvfsEnabled => "dvfs",
            LearnerMode::Ir => "ir",
            LearnerMode::Lct => "lct",
            LearnerMode::Ldt => "ldt",
            LearnerMode::Tabular => "tabular",
        }
    }
}

/// `ε_k = max(floor, 1 / (1 + k / scale))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub floor: f64,
    pub scale: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { floor: 0.05, scale: 500.0 }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, k: u64) -> f64 {
        (1.0 / (1.0 + k as f64 / self.scale)).max(self.floor).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub a: f64,
    pub b: f64,
    pub epsilon: EpsilonSchedule,
    pub mode: LearnerMode,
    /// Level used by every mode except `DvfsEnabled`.
    pub fixed_level: usize,
    /// Per-dimension bank of the temperature-grid features.
    pub temp_bank: RbfBank,
    /// Banks of the IR quadruple, in element order.
    pub ir_banks: [RbfBank; 4],
    pub features: FeatureOptions,
}

impl LearnerConfig {
    pub fn new(mode: LearnerMode) -> Self {
        let bank = RbfBank::standard(2).expect("standard bank");
        Self {
            a: 50.0,
            b: 1000.0,
            epsilon: EpsilonSchedule::default(),
            mode,
            fixed_level: 2,
            temp_bank: bank.clone(),
            ir_banks: [bank.clone(), bank.clone(), bank.clone(), bank],
            features: FeatureOptions { normalize: true, scaling: DistanceScaling::PerDimMean },
        }
    }

    pub fn with_centers(mut self, x: usize) -> Result<Self> {
        let bank = RbfBank::standard(x)?;
        self.temp_bank = bank.clone();
        self.ir_banks = [bank.clone(), bank.clone(), bank.clone(), bank];
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::Config(format!("learning-rate constant A must be positive, got {}", self.a)));
        }
        if !(self.b >= 1.0) {
            return Err(Error::Config(format!("learning-rate constant B must be at least 1, got {}", self.b)));
        }
        let e = self.epsilon;
        if !(0.0..=1.0).contains(&e.floor) || !(e.scale > 0.0) {
            return Err(Error::Config(format!("invalid epsilon schedule {e:?}")));
        }
        if self.a / self.b > 1.0 {
            return Err(Error::Config("initial learning rate A/B exceeds 1".into()));
        }
        Ok(())
    }

    /// Number of learnable parameters on a chip with `cores` cores and
    /// `levels` V-F levels.
    pub fn parameter_count(&self, cores: usize, levels: usize) -> usize {
        let g = self.temp_bank.grid_size(9);
        match self.mode {
            LearnerMode::DvfsEnabled => g * cores * levels,
            LearnerMode::Lct | LearnerMode::Ldt => g * cores,
            LearnerMode::Ir => ir_dimension(&self.ir_banks),
            LearnerMode::Tabular => 0,
        }
    }
}

/// Learner settings of the LCT and LDT baselines.
pub fn baseline_learner_config(mode: LearnerMode) -> Result<LearnerConfig> {
    match mode {
        LearnerMode::Lct | LearnerMode::Ldt => Ok(LearnerConfig::new(mode)),
        other => Err(Error::Config(format!("{} is not a baseline learner", other.as_str()))),
    }
}

/// `α_k = A / (B + k)`.
pub fn learning_rate(k: u64, a: f64, b: f64) -> f64 {
    a / (b + k as f64)
}

/// `θᵀφ`.
pub fn q_hat(theta: &[f64], phi: &FeatureVector) -> Result<f64> {
    phi.dot(theta)
}

/// Learnable parameters plus the feature vector of the reference pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub theta: Vec<f64>,
    pub reference: Option<FeatureVector>,
}

impl WeightVector {
    pub fn zeros(dim: usize) -> Self {
        Self { theta: vec![0.0; dim], reference: None }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Current estimate of the reference pair's value, 0 before it is fixed.
    pub fn reference_value(&self) -> f64 {
        self.reference.as_ref().map_or(0.0, |phi| phi.dot_unchecked(&self.theta))
    }
}

/// Target of one transition: `r − Q̂ref·t + max_b Q̂(s′, b)`, with an empty
/// feasible set contributing 0.
pub fn smdp_target(reward: f64, elapsed: f64, q_ref: f64, next_q: &[f64]) -> f64 {
    let best = next_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best = if best.is_finite() { best } else { 0.0 };
    reward - q_ref * elapsed + best
}

/// Semi-gradient step `θ ← θ + α (target − θᵀφ) φ`; returns the target.
pub fn smdp_update(
    theta: &mut [f64],
    phi: &FeatureVector,
    reward: f64,
    elapsed: f64,
    q_ref: f64,
    next_q: &[f64],
    alpha: f64,
) -> Result<f64> {
    let current = phi.dot(theta)?;
    let target = smdp_target(reward, elapsed, q_ref, next_q);
    phi.add_scaled_to(theta, alpha * (target - current));
    Ok(target)
}

/// ε-greedy index into `q`; greedy ties go to the lowest index.
pub fn select_action<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    assert!(!q.is_empty(), "empty feasible action set");
    let u: f64 = rng.random();
    if u < epsilon {
        return rng.random_range(0..q.len());
    }
    greedy(q)
}

pub fn greedy(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn learning_rate_schedule() {
        assert_eq!(learning_rate(0, 50.0, 1000.0), 0.05);
        assert!(learning_rate(1_000_000_000, 50.0, 1000.0) < 1e-7);
        for k in 0..1000 {
            assert!(learning_rate(k + 1, 50.0, 1000.0) < learning_rate(k, 50.0, 1000.0));
        }
    }

    #[test]
    fn epsilon_schedule() {
        let e = EpsilonSchedule::default();
        assert_eq!(e.value(0), 1.0);
        assert!((e.value(500) - 0.5).abs() < 1e-12);
        assert_eq!(e.value(1_000_000), 0.05);
    }

    #[test]
    fn q_hat_cases() {
        let phi = FeatureVector::dense(vec![0.3, 0.1, 2.0]);
        assert_eq!(q_hat(&[0.0; 3], &phi).unwrap(), 0.0);
        assert_eq!(q_hat(&[1.0, 2.0, 3.0, 4.0], &FeatureVector::one_hot(2, 4)).unwrap(), 3.0);
        let a = FeatureVector::dense(vec![0.2, 0.0, 1.0]);
        let b = FeatureVector::dense(vec![0.5, 0.7, 0.0]);
        let sum = FeatureVector::dense(vec![0.7, 0.7, 1.0]);
        let theta = [1.5, -2.0, 0.25];
        let parts = q_hat(&theta, &a).unwrap() + q_hat(&theta, &b).unwrap();
        assert!((q_hat(&theta, &sum).unwrap() - parts).abs() < 1e-12);
        assert!(q_hat(&[0.0; 2], &phi).is_err());
    }

    #[test]
    fn tabular_arithmetic() {
        let mut theta = vec![0.0; 4];
        smdp_update(&mut theta, &FeatureVector::one_hot(1, 4), 5.0, 1.0, 0.0, &[0.0, 0.0], 0.05).unwrap();
        assert!((theta[1] - 0.25).abs() < 1e-15);
        assert_eq!(theta[0], 0.0);
    }

    #[test]
    fn empty_feasible_set_continues_with_zero() {
        assert_eq!(smdp_target(3.0, 2.0, 0.5, &[]), 2.0);
        assert_eq!(smdp_target(3.0, 2.0, 0.5, &[1.0, 4.0]), 6.0);
    }

    #[test]
    fn parameter_counts_on_5x5() {
        let m = 25;
        let l = 4;
        let dvfs: Vec<usize> = [2, 3, 5]
            .iter()
            .map(|&x| LearnerConfig::new(LearnerMode::DvfsEnabled).with_centers(x).unwrap().parameter_count(m, l))
            .collect();
        assert_eq!(dvfs, vec![51200, 1968300, 195312500]);
        let ir: Vec<usize> = [2, 3, 5]
            .iter()
            .map(|&x| LearnerConfig::new(LearnerMode::Ir).with_centers(x).unwrap().parameter_count(m, l))
            .collect();
        assert_eq!(ir, vec![16, 81, 625]);
        let lct = baseline_learner_config(LearnerMode::Lct).unwrap();
        assert_eq!(lct.parameter_count(m, l), 12800);
        assert_eq!(lct.with_centers(3).unwrap().parameter_count(m, l), 492075);
        assert!(baseline_learner_config(LearnerMode::Ir).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = LearnerConfig::new(LearnerMode::Ir);
        assert!(cfg.validate().is_ok());
        cfg.a = 0.0;
        assert!(cfg.validate().is_err());
        cfg.a = 50.0;
        cfg.b = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = [10.0, 0.0, 0.0, 0.0];
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[select_action(&q, 1.0, &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 400.0, "{counts:?}");
        }
    }

    #[test]
    fn greedy_choice_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(select_action(&[0.0, 1.0, 0.0], 0.0, &mut rng), 1);
        assert_eq!(select_action(&[2.0, 2.0, 1.0], 0.0, &mut rng), 0);
    }

    /// Squared error of the frozen-target objective.
    fn objective(theta: &[f64], phi: &[f64], target: f64) -> f64 {
        let q: f64 = theta.iter().zip(phi).map(|(a, b)| a * b).sum();
        (target - q) * (target - q)
    }

    #[test]
    fn update_direction_is_negative_half_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let n = 8;
            let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let phi: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let target: f64 = rng.random_range(-5.0..5.0);
            let alpha = 0.01;
            let mut stepped = theta.clone();
            // zero elapsed time and no successor: the target is the reward itself
            smdp_update(&mut stepped, &FeatureVector::dense(phi.clone()), target, 0.0, 0.0, &[], alpha).unwrap();
            let h = 1e-5;
            for i in 0..n {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[i] += h;
                dn[i] -= h;
                let grad = (objective(&up, &phi, target) - objective(&dn, &phi, target)) / (2.0 * h);
                let step = (stepped[i] - theta[i]) / alpha;
                assert!((step + 0.5 * grad).abs() <= 1e-6 * grad.abs().max(1e-6), "{step} vs {}", -0.5 * grad);
            }
        }
    }

    proptest! {
        #[test]
        fn argmax_invariant_to_positive_scaling(q in prop::collection::vec(-100.0f64..100.0, 1..20), c in 0.001f64..1000.0) {
            let scaled: Vec<f64> = q.iter().map(|v| v * c).collect();
            prop_assert_eq!(greedy(&q), greedy(&scaled));
        }

        #[test]
        fn one_hot_update_matches_tabular(
            q0 in prop::collection::vec(-10.0f64..10.0, 6),
            s in 0usize..6,
            r in 0.0f64..50.0,
            t in 0.01f64..5.0,
            alpha in 0.001f64..1.0,
            next in prop::collection::vec(0usize..6, 0..4),
        ) {
            let mut theta = q0.clone();
            let q_ref = theta[0];
            let next_q: Vec<f64> = next.iter().map(|&i| theta[i]).collect();
            smdp_update(&mut theta, &FeatureVector::one_hot(s, 6), r, t, q_ref, &next_q, alpha).unwrap();
            let mut table = q0;
            let target = smdp_target(r, t, q_ref, &next_q);
            table[s] += alpha * (target - table[s]);
            prop_assert_eq!(theta, table);
        }
    }
}
