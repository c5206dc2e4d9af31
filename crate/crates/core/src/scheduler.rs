//! Converts per-objective window signals into the per-step weight
//! vector via a temperature-controlled softmax, and provides the
//! baseline weighting schemes (uniform, fixed).
//!
//! With priorities `s_1..s_K` and temperature `T`, the weights are
//! `lambda_k = K * exp(s_k / T) / sum_i exp(s_i / T)`, so the weights
//! always sum to `K` and large `T` recovers uniform weighting.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::window::{CConvention, ObjectiveId, SlidingWindow, WindowError, WindowSignals};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedulerError {
    #[error("priority {0} is not finite")]
    NonFinitePriority(f64),
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("fixed weight {0} is not positive")]
    NonPositiveWeight(f64),
    #[error("objective count must be at least 1")]
    NoObjectives,
    #[error(transparent)]
    Window(#[from] WindowError),
}

/// Scheduler hyperparameters. `half_window` is the `W` of the `2W`
/// sliding window; weights are uniform until every window is ready.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub half_window: usize,
    pub temperature: f64,
    pub eps: f64,
    pub c_convention: CConvention,
    /// Recompute weights every `n` steps; intermediate steps reuse the
    /// last weight vector.
    pub recompute_every: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            half_window: 10,
            temperature: 5.0,
            eps: 1e-8,
            c_convention: CConvention::ImprovementUp,
            recompute_every: 1,
        }
    }
}

/// Per-objective weights at one step. Always sums to `K` with every
/// entry strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub step: u64,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Eq. weights from raw priorities: `lambda_k = K softmax(s / T)_k`,
/// computed with max-subtraction.
pub fn weights_from_priorities(s: &[f64], temperature: f64) -> Result<WeightVector, SchedulerError> {
    if s.is_empty() {
        return Err(SchedulerError::NoObjectives);
    }
    for &v in s {
        if !v.is_finite() {
            return Err(SchedulerError::NonFinitePriority(v));
        }
    }
    let k = s.len() as f64;
    let scaled: Vec<f64> = s.iter().map(|&v| v / temperature).collect();
    // clamp the centered exponents so extreme priority gaps underflow to
    // a subnormal positive weight instead of exactly zero
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|&v| math::exp((v - max).max(-700.0))).collect();
    let sum: f64 = exps.iter().sum();
    let weights = exps.iter().map(|&e| k * e / sum).collect();
    Ok(WeightVector { weights, step: 0 })
}

/// All-ones weights for `k` objectives.
pub fn uniform_weights(k: usize) -> Result<WeightVector, SchedulerError> {
    if k == 0 {
        return Err(SchedulerError::NoObjectives);
    }
    Ok(WeightVector { weights: vec![1.0; k], step: 0 })
}

/// Rescales a positive weight vector so it sums to `K`.
pub fn fixed_weights(v: &[f64]) -> Result<WeightVector, SchedulerError> {
    if v.is_empty() {
        return Err(SchedulerError::NoObjectives);
    }
    for &w in v {
        if !(w > 0.0) || !w.is_finite() {
            return Err(SchedulerError::NonPositiveWeight(w));
        }
    }
    let k = v.len() as f64;
    let total: f64 = v.iter().sum();
    Ok(WeightVector {
        weights: v.iter().map(|&w| k * w / total).collect(),
        step: 0,
    })
}

/// `(1/K) sum_k lambda_k L_k`.
pub fn combined_loss(weights: &WeightVector, losses: &[f64]) -> Result<f64, SchedulerError> {
    if weights.len() != losses.len() {
        return Err(SchedulerError::DimensionMismatch {
            expected: weights.len(),
            got: losses.len(),
        });
    }
    let k = losses.len() as f64;
    Ok(weights
        .weights
        .iter()
        .zip(losses)
        .map(|(l, loss)| l * loss)
        .sum::<f64>()
        / k)
}

/// Online scheduler state: one sliding window per objective plus the
/// most recent signals and weights.
///
/// Objectives absent from a step keep their last computed signals;
/// weights stay uniform until every objective's window is ready.
#[derive(Debug, Clone)]
pub struct Scheduler {
    config: SchedulerConfig,
    objectives: Vec<ObjectiveId>,
    windows: Vec<SlidingWindow>,
    cached_signals: Vec<Option<WindowSignals>>,
    last_weights: WeightVector,
    step: u64,
}

impl Scheduler {
    pub fn new(objectives: Vec<ObjectiveId>, config: SchedulerConfig) -> Result<Self, SchedulerError> {
        if objectives.is_empty() {
            return Err(SchedulerError::NoObjectives);
        }
        let windows = objectives
            .iter()
            .map(|_| SlidingWindow::new(config.half_window))
            .collect::<Result<Vec<_>, _>>()?;
        let k = objectives.len();
        Ok(Self {
            config,
            objectives,
            windows,
            cached_signals: vec![None; k],
            last_weights: uniform_weights(k)?,
            step: 0,
        })
    }

    pub fn num_objectives(&self) -> usize {
        self.objectives.len()
    }

    pub fn objectives(&self) -> &[ObjectiveId] {
        &self.objectives
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    /// Latest signals per objective; `None` until the window is ready.
    pub fn signals(&self) -> &[Option<WindowSignals>] {
        &self.cached_signals
    }

    /// Feeds one loss per objective and returns the weights for the
    /// current step.
    pub fn step(&mut self, losses: &[f64]) -> Result<WeightVector, SchedulerError> {
        if losses.len() != self.objectives.len() {
            return Err(SchedulerError::DimensionMismatch {
                expected: self.objectives.len(),
                got: losses.len(),
            });
        }
        let with_slots: Vec<Option<f64>> = losses.iter().map(|&l| Some(l)).collect();
        self.step_partial(&with_slots)
    }

    /// Like [`Scheduler::step`] but objectives may be absent from the
    /// batch (`None`); their windows receive no sample and their last
    /// signals are reused.
    pub fn step_partial(&mut self, losses: &[Option<f64>]) -> Result<WeightVector, SchedulerError> {
        if losses.len() != self.objectives.len() {
            return Err(SchedulerError::DimensionMismatch {
                expected: self.objectives.len(),
                got: losses.len(),
            });
        }
        let t = self.step;
        for (idx, loss) in losses.iter().enumerate() {
            if let Some(value) = loss {
                self.windows[idx].push(t, *value)?;
                if self.windows[idx].is_ready() {
                    self.cached_signals[idx] = Some(
                        self.windows[idx].signals(self.config.eps, self.config.c_convention)?,
                    );
                }
            }
        }
        self.step += 1;

        let recompute = self.config.recompute_every.max(1);
        if t % recompute == 0 || self.last_weights.len() != self.objectives.len() {
            self.last_weights = self.compute_weights()?;
        }
        let mut out = self.last_weights.clone();
        out.step = t;
        Ok(out)
    }

    fn compute_weights(&self) -> Result<WeightVector, SchedulerError> {
        if self.cached_signals.iter().any(|s| s.is_none()) {
            // Warmup: uniform until every objective's window is ready.
            return uniform_weights(self.objectives.len());
        }
        let priorities: Vec<f64> = self
            .cached_signals
            .iter()
            .map(|s| s.as_ref().map(|sig| sig.s).unwrap_or(0.0))
            .collect();
        weights_from_priorities(&priorities, self.config.temperature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn config(w: usize, t: f64) -> SchedulerConfig {
        SchedulerConfig { half_window: w, temperature: t, ..SchedulerConfig::default() }
    }

    fn objectives(k: usize) -> Vec<ObjectiveId> {
        (0..k).map(|i| ObjectiveId::new(alloc::format!("obj{i}"), i)).collect()
    }

    #[test]
    fn equal_priorities_give_all_ones() {
        for a in [-3.0, 0.0, 42.0] {
            let w = weights_from_priorities(&[a; 5], 5.0).unwrap();
            for l in &w.weights {
                assert_relative_eq!(*l, 1.0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn two_objective_weights_match_direct_evaluation() {
        // K=2, s=(1,2), T=5: lambda = 2*softmax(0.2, 0.4).
        let w = weights_from_priorities(&[1.0, 2.0], 5.0).unwrap();
        assert_relative_eq!(w.weights[0], 0.900_332_88, epsilon = 1e-6);
        assert_relative_eq!(w.weights[1], 1.099_667_11, epsilon = 1e-6);
    }

    #[test]
    fn softmax_limit_concentrates_mass_k() {
        let w = weights_from_priorities(&[0.0, 0.0, 1000.0], 1.0).unwrap();
        assert!(w.weights[0] < 1e-12);
        assert!(w.weights[1] < 1e-12);
        assert_relative_eq!(w.weights[2], 3.0, max_relative = 1e-9);
    }

    #[test]
    fn large_priorities_do_not_overflow() {
        let w = weights_from_priorities(&[1e300, 0.0], 0.1).unwrap();
        assert!(w.weights.iter().all(|l| l.is_finite()));
        assert_relative_eq!(w.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn non_finite_priority_rejected() {
        assert!(matches!(
            weights_from_priorities(&[f64::NAN, 1.0], 5.0),
            Err(SchedulerError::NonFinitePriority(_))
        ));
    }

    #[test]
    fn uniform_and_fixed_weights() {
        assert_eq!(uniform_weights(4).unwrap().weights, vec![1.0; 4]);
        let fixed = fixed_weights(&[2.0, 1.0, 1.0]).unwrap();
        assert_eq!(fixed.weights, vec![1.5, 0.75, 0.75]);
        assert_eq!(fixed_weights(&[1.0]).unwrap().weights, vec![1.0]);
        assert!(matches!(
            fixed_weights(&[1.0, 0.0]),
            Err(SchedulerError::NonPositiveWeight(_))
        ));
    }

    #[test]
    fn combined_loss_reductions() {
        let uniform = uniform_weights(3).unwrap();
        assert_relative_eq!(
            combined_loss(&uniform, &[1.0, 2.0, 3.0]).unwrap(),
            2.0,
            max_relative = 1e-12
        );

        let w = WeightVector { weights: vec![2.0, 1e-12], step: 0 };
        assert_relative_eq!(combined_loss(&w, &[3.0, 100.0]).unwrap(), 3.0, epsilon = 1e-9);

        let w = weights_from_priorities(&[1.0, 2.0], 5.0).unwrap();
        assert_relative_eq!(combined_loss(&w, &[1.0, 1.0]).unwrap(), 1.0, max_relative = 1e-12);

        assert!(matches!(
            combined_loss(&uniform, &[1.0]),
            Err(SchedulerError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn warmup_is_exactly_uniform() {
        let mut sched = Scheduler::new(objectives(2), config(2, 5.0)).unwrap();
        for t in 0..3 {
            let w = sched.step(&[1.0 / (t + 1) as f64, 0.5]).unwrap();
            assert_eq!(w.weights, vec![1.0, 1.0], "step {t}");
        }
    }

    #[test]
    fn identical_series_stay_uniform() {
        let mut sched = Scheduler::new(objectives(3), config(2, 5.0)).unwrap();
        for t in 0..20 {
            let v = 1.0 / (t + 1) as f64;
            let w = sched.step(&[v, v, v]).unwrap();
            for l in &w.weights {
                assert_relative_eq!(*l, 1.0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn constant_vs_noisy_tail_orders_weights() {
        // Objective A constant at 0.5 (s = 1); objective B ends on the
        // [1, 1, 1, 3] tail (s ≈ 0.9714), so A outweighs B.
        let mut sched = Scheduler::new(objectives(2), config(2, 5.0)).unwrap();
        let b_series = [1.0, 1.0, 1.0, 3.0];
        let mut last = None;
        for (t, &b) in b_series.iter().enumerate() {
            last = Some(sched.step(&[0.5, b]).unwrap());
            let _ = t;
        }
        let w = last.unwrap();
        assert!(w.weights[0] > 1.0);
        assert!(w.weights[1] < 1.0);
        let sig = sched.signals()[1].unwrap();
        assert_relative_eq!(sig.s, 0.5 + 2.0f64.sqrt() / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn absent_objective_reuses_last_signals() {
        let mut sched = Scheduler::new(objectives(2), config(2, 5.0)).unwrap();
        for _ in 0..4 {
            sched.step(&[0.5, 1.0]).unwrap();
        }
        let full = sched.step(&[0.5, 1.0]).unwrap();
        let partial = sched.step_partial(&[Some(0.5), None]).unwrap();
        assert_eq!(full.weights, partial.weights);
    }

    #[test]
    fn recompute_every_reuses_weights() {
        let mut cfg = config(2, 5.0);
        cfg.recompute_every = 4;
        let mut sched = Scheduler::new(objectives(2), cfg).unwrap();
        let mut prev: Option<WeightVector> = None;
        for t in 0..12u64 {
            let w = sched.step(&[1.0 / (t + 1) as f64, 0.7]).unwrap();
            if t % 4 != 0 {
                assert_eq!(w.weights, prev.unwrap().weights);
            }
            prev = Some(w);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut sched = Scheduler::new(objectives(2), config(2, 5.0)).unwrap();
        assert!(matches!(
            sched.step(&[1.0]),
            Err(SchedulerError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }
}
