//! Synthetic loss-stream generation (exponential decay to a plateau
//! plus Gaussian noise, clamped at zero) and EMA smoothing for report
//! emission.

use alloc::string::String;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math;

/// Generator for one objective's synthetic loss series:
/// `plateau + (init - plateau) * exp(-decay_rate * t) + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStreamSpec {
    pub objective: String,
    pub init: f64,
    pub decay_rate: f64,
    pub plateau: f64,
    pub noise_sigma: f64,
    pub steps: u64,
}

/// Noise-free value of the stream at step `t`.
pub fn stream_mean_at(spec: &SyntheticStreamSpec, t: u64) -> f64 {
    spec.plateau + (spec.init - spec.plateau) * math::exp(-spec.decay_rate * t as f64)
}

/// Full series for one spec, deterministic per `(spec, seed)`. Values
/// are clamped at 0 so they remain valid losses.
pub fn generate_stream(spec: &SyntheticStreamSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.steps)
        .map(|t| {
            let noise = if spec.noise_sigma > 0.0 {
                spec.noise_sigma * math::sample_standard_normal(&mut rng)
            } else {
                0.0
            };
            (stream_mean_at(spec, t) + noise).max(0.0)
        })
        .collect()
}

/// Generates one series per spec; stream `k` uses seed `seed + k` so
/// objectives get independent noise.
pub fn generate_streams(specs: &[SyntheticStreamSpec], seed: u64) -> Vec<Vec<f64>> {
    specs
        .iter()
        .enumerate()
        .map(|(k, spec)| generate_stream(spec, seed.wrapping_add(k as u64)))
        .collect()
}

/// `y_t = alpha * x_t + (1 - alpha) * y_{t-1}`, with `y_0 = x_0`.
/// Report-side smoothing only; never used inside scheduling.
pub fn ema_smooth(series: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut prev: Option<f64> = None;
    for &x in series {
        let y = match prev {
            None => x,
            Some(p) => alpha * x + (1.0 - alpha) * p,
        };
        out.push(y);
        prev = Some(y);
    }
    out
}
