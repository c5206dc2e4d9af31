//! Per-objective sliding-window loss histories and the convergence /
//! instability signals derived from them.
//!
//! Each objective keeps the last `2W` loss values. The most recent `W`
//! values give the current mean `mu`, the `W` before those give the
//! previous mean `mu_prev`. From these we form:
//!
//! - convergence rate `c`: ratio of the two means (`> 1` while the loss
//!   is still dropping, `≈ 1` at saturation under the improvement-up
//!   convention),
//! - inverse signal-to-noise `i = sigma / (mu + mu_prev)`,
//! - priority `s = c + i`.

use alloc::collections::VecDeque;
use alloc::string::String;
use serde::{Deserialize, Serialize};

use crate::math;

/// Errors from window maintenance and signal computation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WindowError {
    #[error("loss value is not finite or is negative")]
    NonFiniteLoss,
    #[error("sample step {step} is not greater than the last pushed step {last}")]
    NonMonotoneStep { step: u64, last: u64 },
    #[error("window has seen {count} samples but needs {needed}")]
    NotReady { count: u64, needed: u64 },
    #[error("window half-length must be at least 2, got {0}")]
    WindowTooSmall(usize),
}

/// Label plus dense index of one training objective.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectiveId {
    pub name: String,
    pub index: usize,
}

impl ObjectiveId {
    pub fn new(name: impl Into<String>, index: usize) -> Self {
        Self { name: name.into(), index }
    }
}

/// One time-indexed loss observation for a single objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSample {
    pub objective: ObjectiveId,
    pub step: u64,
    pub value: f64,
}

/// Direction convention for the convergence rate `c`.
///
/// `ImprovementUp` is `mu_prev / mu` (improvement pushes `c` above 1);
/// `PaperFormula` is the literal `mu / mu_prev` ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CConvention {
    ImprovementUp,
    PaperFormula,
}

impl Default for CConvention {
    fn default() -> Self {
        CConvention::ImprovementUp
    }
}

/// Signals computed from one ready window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSignals {
    pub mu: f64,
    pub mu_prev: f64,
    pub sigma: f64,
    pub c: f64,
    pub i: f64,
    pub s: f64,
    pub ready: bool,
}

/// Fixed-capacity FIFO of the most recent `2W` loss values for one
/// objective.
#[derive(Debug, Clone)]
pub struct SlidingWindow {
    half_len: usize,
    buf: VecDeque<f64>,
    count: u64,
    last_step: Option<u64>,
}

impl SlidingWindow {
    /// Creates a window of capacity `2 * half_len`.
    pub fn new(half_len: usize) -> Result<Self, WindowError> {
        if half_len < 2 {
            return Err(WindowError::WindowTooSmall(half_len));
        }
        Ok(Self {
            half_len,
            buf: VecDeque::with_capacity(2 * half_len),
            count: 0,
            last_step: None,
        })
    }

    pub fn half_len(&self) -> usize {
        self.half_len
    }

    pub fn capacity(&self) -> usize {
        2 * self.half_len
    }

    /// Samples seen so far (not capped at capacity).
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_ready(&self) -> bool {
        self.count >= 2 * self.half_len as u64
    }

    /// Current buffer contents in arrival order, oldest first.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.buf.iter().copied()
    }

    /// Pushes one loss value, evicting the oldest when at capacity.
    /// Steps must be strictly increasing and values finite and
    /// non-negative.
    pub fn push(&mut self, step: u64, value: f64) -> Result<(), WindowError> {
        if !value.is_finite() || value < 0.0 {
            return Err(WindowError::NonFiniteLoss);
        }
        if let Some(last) = self.last_step {
            if step <= last {
                return Err(WindowError::NonMonotoneStep { step, last });
            }
        }
        if self.buf.len() == self.capacity() {
            self.buf.pop_front();
        }
        self.buf.push_back(value);
        self.count += 1;
        self.last_step = Some(step);
        Ok(())
    }

    pub fn push_sample(&mut self, sample: &LossSample) -> Result<(), WindowError> {
        self.push(sample.step, sample.value)
    }

    fn require_ready(&self) -> Result<(), WindowError> {
        if !self.is_ready() {
            return Err(WindowError::NotReady {
                count: self.count,
                needed: 2 * self.half_len as u64,
            });
        }
        Ok(())
    }

    /// `(mu, mu_prev)`: mean of the most recent `W` values and of the
    /// `W` values before those.
    pub fn means(&self) -> Result<(f64, f64), WindowError> {
        self.require_ready()?;
        let w = self.half_len;
        let mu_prev: f64 = self.buf.iter().take(w).sum::<f64>() / w as f64;
        let mu: f64 = self.buf.iter().skip(w).sum::<f64>() / w as f64;
        Ok((mu, mu_prev))
    }

    /// Sample standard deviation (divisor `W - 1`) of the most recent
    /// `W` values.
    pub fn std_dev(&self) -> Result<f64, WindowError> {
        self.require_ready()?;
        let w = self.half_len;
        let current: alloc::vec::Vec<f64> = self.buf.iter().skip(w).copied().collect();
        // a constant series has zero spread exactly, with no rounding
        // residue from the mean
        if current.iter().all(|&v| v == current[0]) {
            return Ok(0.0);
        }
        let mean = current.iter().sum::<f64>() / w as f64;
        let ss: f64 = current.iter().map(|v| (v - mean) * (v - mean)).sum();
        Ok(math::sqrt(ss / (w as f64 - 1.0)))
    }

    /// Full signal set for a ready window. Denominators are floored at
    /// `eps` so all-zero loss windows stay finite.
    pub fn signals(&self, eps: f64, convention: CConvention) -> Result<WindowSignals, WindowError> {
        let (mu, mu_prev) = self.means()?;
        let sigma = self.std_dev()?;
        // both windows at (numerical) zero is saturation, not improvement
        let c = if mu <= eps && mu_prev <= eps {
            1.0
        } else {
            match convention {
                CConvention::ImprovementUp => mu_prev / mu.max(eps),
                CConvention::PaperFormula => mu / mu_prev.max(eps),
            }
        };
        let i = sigma / (mu + mu_prev).max(eps);
        Ok(WindowSignals { mu, mu_prev, sigma, c, i, s: c + i, ready: true })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn window_with(w: usize, values: &[f64]) -> SlidingWindow {
        let mut win = SlidingWindow::new(w).unwrap();
        for (t, &v) in values.iter().enumerate() {
            win.push(t as u64, v).unwrap();
        }
        win
    }

    #[test]
    fn push_below_capacity_keeps_all() {
        let win = window_with(2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(win.count(), 4);
        assert_eq!(win.values().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn push_at_capacity_evicts_oldest() {
        let win = window_with(2, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(win.count(), 5);
        assert_eq!(win.values().collect::<Vec<_>>(), vec![2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn push_rejects_nan_and_negative() {
        let mut win = SlidingWindow::new(2).unwrap();
        assert_eq!(win.push(0, f64::NAN), Err(WindowError::NonFiniteLoss));
        assert_eq!(win.push(0, f64::INFINITY), Err(WindowError::NonFiniteLoss));
        assert_eq!(win.push(0, -1.0), Err(WindowError::NonFiniteLoss));
    }

    #[test]
    fn push_rejects_non_monotone_step() {
        let mut win = SlidingWindow::new(2).unwrap();
        win.push(3, 1.0).unwrap();
        assert_eq!(
            win.push(3, 1.0),
            Err(WindowError::NonMonotoneStep { step: 3, last: 3 })
        );
    }

    #[test]
    fn too_small_half_length_rejected() {
        assert_eq!(SlidingWindow::new(1).unwrap_err(), WindowError::WindowTooSmall(1));
    }

    #[test]
    fn means_split_current_and_previous() {
        let win = window_with(2, &[4.0, 4.0, 2.0, 2.0]);
        assert_eq!(win.means().unwrap(), (2.0, 4.0));

        let win = window_with(3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(win.means().unwrap(), (5.0, 2.0));
    }

    #[test]
    fn means_constant_series() {
        let win = window_with(2, &[7.5; 4]);
        assert_eq!(win.means().unwrap(), (7.5, 7.5));
    }

    #[test]
    fn means_not_ready() {
        let win = window_with(2, &[1.0, 2.0, 3.0]);
        assert!(matches!(win.means(), Err(WindowError::NotReady { count: 3, needed: 4 })));
    }

    #[test]
    fn std_dev_of_current_window() {
        let win = window_with(2, &[0.0, 0.0, 2.0, 2.0]);
        assert_eq!(win.std_dev().unwrap(), 0.0);

        let win = window_with(2, &[0.0, 0.0, 1.0, 3.0]);
        assert_relative_eq!(win.std_dev().unwrap(), 2.0f64.sqrt(), max_relative = 1e-12);

        let win = window_with(3, &[0.0, 0.0, 0.0, 0.0, 0.0, 3.0]);
        assert_relative_eq!(win.std_dev().unwrap(), 3.0f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn signals_constant_series_is_saturation_fixed_point() {
        let win = window_with(2, &[5.0; 4]);
        let sig = win.signals(1e-8, CConvention::ImprovementUp).unwrap();
        assert_eq!(sig.c, 1.0);
        assert_eq!(sig.i, 0.0);
        assert_eq!(sig.s, 1.0);
    }

    #[test]
    fn signals_improving_objective() {
        let win = window_with(2, &[4.0, 4.0, 2.0, 2.0]);
        let sig = win.signals(1e-8, CConvention::ImprovementUp).unwrap();
        assert_eq!(sig.mu, 2.0);
        assert_eq!(sig.mu_prev, 4.0);
        assert_eq!(sig.sigma, 0.0);
        assert_eq!(sig.c, 2.0);
        assert_eq!(sig.i, 0.0);
        assert_eq!(sig.s, 2.0);
    }

    #[test]
    fn signals_worsening_noisy_objective() {
        let win = window_with(2, &[1.0, 1.0, 1.0, 3.0]);
        let sig = win.signals(1e-8, CConvention::ImprovementUp).unwrap();
        assert_eq!(sig.mu, 2.0);
        assert_eq!(sig.mu_prev, 1.0);
        assert_relative_eq!(sig.sigma, 2.0f64.sqrt(), max_relative = 1e-12);
        assert_eq!(sig.c, 0.5);
        assert_relative_eq!(sig.i, 2.0f64.sqrt() / 3.0, max_relative = 1e-12);
        assert_relative_eq!(sig.s, 0.5 + 2.0f64.sqrt() / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn paper_formula_convention_flips_ratio() {
        let win = window_with(2, &[4.0, 4.0, 2.0, 2.0]);
        let sig = win.signals(1e-8, CConvention::PaperFormula).unwrap();
        assert_eq!(sig.c, 0.5);
    }

    #[test]
    fn all_zero_window_is_saturation() {
        let win = window_with(2, &[0.0; 4]);
        let sig = win.signals(1e-8, CConvention::ImprovementUp).unwrap();
        assert_eq!(sig.c, 1.0);
        assert_eq!(sig.i, 0.0);
        assert_eq!(sig.s, 1.0);
    }

    #[test]
    fn scale_invariance_of_signals() {
        let base = [0.9, 0.7, 0.8, 0.5, 0.45, 0.3, 0.32, 0.28];
        for alpha in [1e-3, 0.1, 10.0, 1e3] {
            let a = window_with(4, &base);
            let scaled: Vec<f64> = base.iter().map(|v| v * alpha).collect();
            let b = window_with(4, &scaled);
            let sa = a.signals(1e-8, CConvention::ImprovementUp).unwrap();
            let sb = b.signals(1e-8, CConvention::ImprovementUp).unwrap();
            assert_relative_eq!(sa.c, sb.c, max_relative = 1e-12);
            assert_relative_eq!(sa.i, sb.i, max_relative = 1e-12);
            assert_relative_eq!(sa.s, sb.s, max_relative = 1e-12);
        }
    }

    #[test]
    fn signals_depend_only_on_last_2w_values() {
        let suffix = [0.5, 0.4, 0.6, 0.3, 0.35, 0.2, 0.25, 0.22];
        let mut short = SlidingWindow::new(4).unwrap();
        let mut long = SlidingWindow::new(4).unwrap();
        for (t, &v) in suffix.iter().enumerate() {
            short.push(t as u64, v).unwrap();
        }
        for t in 0..100u64 {
            long.push(t, 9.9).unwrap();
        }
        for (t, &v) in suffix.iter().enumerate() {
            long.push(100 + t as u64, v).unwrap();
        }
        let a = short.signals(1e-8, CConvention::ImprovementUp).unwrap();
        let b = long.signals(1e-8, CConvention::ImprovementUp).unwrap();
        assert_eq!(a, b);
    }
}
