//! A minimal differentiable model family with hand-written gradients:
//! a multi-head tanh feed-forward net, an autoregressive categorical
//! policy built on it, Adam, and the warmup/decay learning-rate
//! schedule.

mod net;
mod optim;
mod policy;

pub use net::{FeedForwardNet, ForwardCache, LearnerError, NetLayout};
pub use optim::{AdamConfig, AdamState, LrSchedule};
pub use policy::{CategoricalPolicy, Completion, PolicyConfig};

use alloc::vec::Vec;

use crate::math;

/// Mean over positions of `-log softmax(logits)[target]`.
pub fn nll_loss(logits_seq: &[Vec<f64>], targets: &[usize]) -> Result<f64, LearnerError> {
    if logits_seq.len() != targets.len() {
        return Err(LearnerError::ShapeMismatch("logits/targets lengths differ"));
    }
    if logits_seq.is_empty() {
        return Err(LearnerError::ShapeMismatch("empty sequence"));
    }
    let mut total = 0.0;
    for (logits, &target) in logits_seq.iter().zip(targets) {
        if target >= logits.len() {
            return Err(LearnerError::ShapeMismatch("target index out of vocabulary"));
        }
        let lse = math::log_sum_exp(logits);
        total += lse - logits[target];
    }
    Ok(total / logits_seq.len() as f64)
}
