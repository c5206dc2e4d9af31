//! Group Relative Policy Optimization primitives: group-normalized
//! advantages, token importance ratios, the clipped surrogate, and the
//! exact categorical KL penalty to a reference policy.
//!
//! The surrogate is the standard double sum: mean over the `G`
//! completions of the per-token mean of
//! `min(r A, clip(r, 1 - eps, 1 + eps) A)`, with the sequence-level
//! advantage broadcast to every token of its completion.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrpoError {
    #[error("rollout group needs at least 2 completions, got {0}")]
    GroupTooSmall(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("distributions have different support sizes: {policy} vs {reference}")]
    SupportMismatch { policy: usize, reference: usize },
    #[error("reference distribution has zero mass where the policy has positive mass (index {0})")]
    ZeroReferenceMass(usize),
    #[error("reward value is not finite")]
    NonFiniteReward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub std_floor: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self { group_size: 4, clip_eps: 0.2, kl_beta: 0.0, std_floor: 1e-6 }
    }
}

/// `G` completions for one prompt, with per-token log-probabilities
/// under the frozen rollout policy and sequence-level rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub prompt_id: u64,
    pub completions: Vec<Vec<usize>>,
    pub old_logprobs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl RolloutGroup {
    pub fn group_size(&self) -> usize {
        self.rewards.len()
    }

    fn validate(&self) -> Result<(), GrpoError> {
        let g = self.rewards.len();
        if g < 2 {
            return Err(GrpoError::GroupTooSmall(g));
        }
        if self.completions.len() != g || self.old_logprobs.len() != g {
            return Err(GrpoError::ShapeMismatch("completions/logprobs/rewards lengths differ"));
        }
        for (tokens, lps) in self.completions.iter().zip(&self.old_logprobs) {
            if tokens.is_empty() {
                return Err(GrpoError::ShapeMismatch("empty completion"));
            }
            if tokens.len() != lps.len() {
                return Err(GrpoError::ShapeMismatch("completion/logprob length differ"));
            }
            if lps.iter().any(|l| !l.is_finite()) {
                return Err(GrpoError::ShapeMismatch("non-finite old logprob"));
            }
        }
        Ok(())
    }
}

/// `A_i = (R_i - mean(R)) / std(R)` with population standard deviation;
/// all zeros when the group reward spread is at or below `std_floor`.
pub fn group_advantages(rewards: &[f64], std_floor: f64) -> Result<Vec<f64>, GrpoError> {
    let g = rewards.len();
    if g < 2 {
        return Err(GrpoError::GroupTooSmall(g));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(GrpoError::NonFiniteReward);
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / g as f64;
    let std = math::sqrt(var);
    if std <= std_floor {
        return Ok(vec![0.0; g]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Elementwise `exp(new - old)`.
pub fn importance_ratios(new_logprobs: &[f64], old_logprobs: &[f64]) -> Result<Vec<f64>, GrpoError> {
    if new_logprobs.len() != old_logprobs.len() {
        return Err(GrpoError::ShapeMismatch("logprob length differ"));
    }
    Ok(new_logprobs
        .iter()
        .zip(old_logprobs)
        .map(|(n, o)| math::exp(n - o))
        .collect())
}

fn clip(r: f64, eps: f64) -> f64 {
    r.clamp(1.0 - eps, 1.0 + eps)
}

/// Clipped surrogate objective (to maximize): mean over sequences of
/// the per-token mean of `min(r A, clip(r) A)`.
pub fn clipped_surrogate(
    ratios: &[Vec<f64>],
    advantages: &[f64],
    clip_eps: f64,
) -> Result<f64, GrpoError> {
    if ratios.len() != advantages.len() {
        return Err(GrpoError::ShapeMismatch("ratios/advantages lengths differ"));
    }
    if ratios.is_empty() {
        return Err(GrpoError::GroupTooSmall(0));
    }
    let g = ratios.len() as f64;
    let mut total = 0.0;
    for (seq, &adv) in ratios.iter().zip(advantages) {
        if seq.is_empty() {
            return Err(GrpoError::ShapeMismatch("empty ratio sequence"));
        }
        let per_token: f64 = seq
            .iter()
            .map(|&r| (r * adv).min(clip(r, clip_eps) * adv))
            .sum::<f64>()
            / seq.len() as f64;
        total += per_token;
    }
    Ok(total / g)
}

/// Gradient of [`clipped_surrogate`] with respect to the new per-token
/// log-probabilities. Zero on tokens where the clipped branch is
/// active.
pub fn surrogate_grad_wrt_new_logprobs(
    ratios: &[Vec<f64>],
    advantages: &[f64],
    clip_eps: f64,
) -> Result<Vec<Vec<f64>>, GrpoError> {
    if ratios.len() != advantages.len() {
        return Err(GrpoError::ShapeMismatch("ratios/advantages lengths differ"));
    }
    let g = ratios.len() as f64;
    let mut grads = Vec::with_capacity(ratios.len());
    for (seq, &adv) in ratios.iter().zip(advantages) {
        let scale = 1.0 / (g * seq.len() as f64);
        grads.push(
            seq.iter()
                .map(|&r| {
                    // d/dlp of r*A is r*A; the min picks the unclipped
                    // branch when r*A <= clip(r)*A.
                    if r * adv <= clip(r, clip_eps) * adv {
                        scale * r * adv
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
    }
    Ok(grads)
}

/// Exact categorical KL `sum p log(p/q)` with the `0 log 0 = 0`
/// convention.
pub fn kl_penalty(policy: &[f64], reference: &[f64]) -> Result<f64, GrpoError> {
    if policy.len() != reference.len() {
        return Err(GrpoError::SupportMismatch {
            policy: policy.len(),
            reference: reference.len(),
        });
    }
    let mut total = 0.0;
    for (idx, (&p, &q)) in policy.iter().zip(reference).enumerate() {
        if p <= 0.0 {
            continue;
        }
        if q <= 0.0 {
            return Err(GrpoError::ZeroReferenceMass(idx));
        }
        total += p * math::ln(p / q);
    }
    Ok(total.max(0.0))
}

/// GRPO loss to minimize: `-surrogate + kl_beta * mean_token_kl`,
/// where `mean_token_kl` is the exact per-token KL to the reference
/// policy averaged over all completion tokens (pass 0 when the penalty
/// is disabled).
pub fn grpo_loss(
    group: &RolloutGroup,
    new_logprobs: &[Vec<f64>],
    mean_token_kl: f64,
    config: &GrpoConfig,
) -> Result<f64, GrpoError> {
    group.validate()?;
    if new_logprobs.len() != group.group_size() {
        return Err(GrpoError::ShapeMismatch("new logprobs group size differ"));
    }
    let advantages = group_advantages(&group.rewards, config.std_floor)?;
    let mut ratios = Vec::with_capacity(group.group_size());
    for (new_lp, old_lp) in new_logprobs.iter().zip(&group.old_logprobs) {
        ratios.push(importance_ratios(new_lp, old_lp)?);
    }
    let surrogate = clipped_surrogate(&ratios, &advantages, config.clip_eps)?;
    Ok(-surrogate + config.kl_beta * mean_token_kl)
}
