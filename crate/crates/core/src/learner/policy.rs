//! Autoregressive categorical policy over a small token vocabulary.
//!
//! The policy conditions on a fixed-length context window (the last
//! `context_len` tokens of prompt-plus-generation, one-hot encoded and
//! left-padded) and produces next-token logits through a
//! [`FeedForwardNet`] with a single vocabulary-sized head.
//!
//! Training helpers compute exact losses and hand-written gradients in
//! the net's flat parameter layout: teacher-forced NLL for SFT-style
//! objectives and the GRPO loss (clipped surrogate plus optional exact
//! KL to a frozen reference policy) for RL objectives.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grpo::{self, GrpoConfig, GrpoError, RolloutGroup};
use crate::math;

use super::net::{FeedForwardNet, LearnerError, NetLayout};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub vocab_size: usize,
    pub context_len: usize,
    pub hidden_dims: Vec<usize>,
    pub max_completion_len: usize,
    pub eos_token: usize,
    pub pad_token: usize,
}

impl PolicyConfig {
    pub fn net_layout(&self) -> NetLayout {
        NetLayout {
            input_dim: self.vocab_size * self.context_len,
            hidden_dims: self.hidden_dims.clone(),
            head_dims: vec![self.vocab_size],
        }
    }
}

/// A sampled completion with the exact log-probabilities of the tokens
/// that were drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub tokens: Vec<usize>,
    pub logprobs: Vec<f64>,
}

impl Completion {
    pub fn total_logprob(&self) -> f64 {
        self.logprobs.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalPolicy {
    config: PolicyConfig,
    net: FeedForwardNet,
}

impl CategoricalPolicy {
    pub fn new<R: Rng + ?Sized>(config: PolicyConfig, rng: &mut R) -> Self {
        let net = FeedForwardNet::init_random(config.net_layout(), rng);
        Self { config, net }
    }

    pub fn from_net(config: PolicyConfig, net: FeedForwardNet) -> Result<Self, LearnerError> {
        if *net.layout() != config.net_layout() {
            return Err(LearnerError::ShapeMismatch("net layout does not match policy config"));
        }
        Ok(Self { config, net })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn net(&self) -> &FeedForwardNet {
        &self.net
    }

    pub fn params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }

    pub fn param_count(&self) -> usize {
        self.net.params().len()
    }

    /// One-hot features of the last `context_len` tokens of `history`,
    /// left-padded with the pad token.
    fn features(&self, history: &[usize]) -> Vec<f64> {
        let c = self.config.context_len;
        let v = self.config.vocab_size;
        let mut x = vec![0.0; c * v];
        for slot in 0..c {
            let token = if history.len() + slot >= c {
                history[history.len() + slot - c]
            } else {
                self.config.pad_token
            };
            x[slot * v + token] = 1.0;
        }
        x
    }

    pub fn logits(&self, history: &[usize]) -> Vec<f64> {
        let x = self.features(history);
        let cache = self.net.forward(&x).expect("feature dim matches layout");
        cache.head_outputs.into_iter().next().unwrap()
    }

    /// Next-token probability distribution at a context. Softmax sums
    /// to 1 by construction.
    pub fn distribution(&self, history: &[usize]) -> Vec<f64> {
        math::softmax(&self.logits(history))
    }

    /// Ancestral sampling until EOS or `max_completion_len`, returning
    /// the exact log-probabilities of the sampled tokens under the
    /// tempered distribution.
    pub fn sample_completion<R: Rng + ?Sized>(
        &self,
        prompt: &[usize],
        rng: &mut R,
        temperature: f64,
    ) -> Completion {
        let mut history: Vec<usize> = prompt.to_vec();
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        for _ in 0..self.config.max_completion_len {
            let mut logits = self.logits(&history);
            if temperature != 1.0 {
                for l in logits.iter_mut() {
                    *l /= temperature;
                }
            }
            let lse = math::log_sum_exp(&logits);
            let u: f64 = rng.random_range(0.0..1.0);
            let mut acc = 0.0;
            let mut token = self.config.vocab_size - 1;
            for (idx, &l) in logits.iter().enumerate() {
                acc += math::exp(l - lse);
                if u < acc {
                    token = idx;
                    break;
                }
            }
            logprobs.push(logits[token] - lse);
            tokens.push(token);
            history.push(token);
            if token == self.config.eos_token {
                break;
            }
        }
        Completion { tokens, logprobs }
    }

    /// Greedy argmax decoding until EOS or the length cap.
    pub fn greedy_completion(&self, prompt: &[usize]) -> Vec<usize> {
        let mut history: Vec<usize> = prompt.to_vec();
        let mut tokens = Vec::new();
        for _ in 0..self.config.max_completion_len {
            let logits = self.logits(&history);
            let token = argmax(&logits);
            tokens.push(token);
            history.push(token);
            if token == self.config.eos_token {
                break;
            }
        }
        tokens
    }

    /// Per-token conditional log-probabilities of a fixed completion.
    pub fn sequence_logprobs(&self, prompt: &[usize], completion: &[usize]) -> Vec<f64> {
        let mut history: Vec<usize> = prompt.to_vec();
        let mut out = Vec::with_capacity(completion.len());
        for &token in completion {
            let logits = self.logits(&history);
            let lse = math::log_sum_exp(&logits);
            out.push(logits[token] - lse);
            history.push(token);
        }
        out
    }

    pub fn sequence_logprob(&self, prompt: &[usize], completion: &[usize]) -> f64 {
        self.sequence_logprobs(prompt, completion).iter().sum()
    }

    /// Teacher-forced NLL of `target` given `prompt` (mean over
    /// positions) and its gradient in the net's flat layout.
    pub fn nll_and_grad(&self, prompt: &[usize], target: &[usize]) -> Result<(f64, Vec<f64>), LearnerError> {
        if target.is_empty() {
            return Err(LearnerError::ShapeMismatch("empty target sequence"));
        }
        let mut grads = vec![0.0; self.param_count()];
        let mut history: Vec<usize> = prompt.to_vec();
        let mut total = 0.0;
        let inv_len = 1.0 / target.len() as f64;
        for &token in target {
            let x = self.features(&history);
            let cache = self.net.forward(&x)?;
            let logits = &cache.head_outputs[0];
            let lse = math::log_sum_exp(logits);
            total += lse - logits[token];
            // d(-log p[token])/dlogits = softmax - onehot
            let mut g: Vec<f64> = logits.iter().map(|&l| math::exp(l - lse) * inv_len).collect();
            g[token] -= inv_len;
            self.net.backward_into(&x, &cache, &[Some(&g)], &mut grads)?;
            history.push(token);
        }
        Ok((total * inv_len, grads))
    }

    /// GRPO loss for one rollout group and its gradient with respect to
    /// the policy parameters.
    ///
    /// The KL term (when `config.kl_beta > 0` and a reference is given)
    /// is the exact categorical KL at every visited context, averaged
    /// over all completion tokens in the group.
    pub fn grpo_loss_and_grad(
        &self,
        prompt: &[usize],
        group: &RolloutGroup,
        reference: Option<&CategoricalPolicy>,
        config: &GrpoConfig,
    ) -> Result<(f64, Vec<f64>), GrpoError> {
        let advantages = grpo::group_advantages(&group.rewards, config.std_floor)?;
        let g = group.group_size();
        if group.completions.len() != g || group.old_logprobs.len() != g {
            return Err(GrpoError::ShapeMismatch("group component lengths differ"));
        }

        let total_tokens: usize = group.completions.iter().map(|c| c.len()).sum();
        if total_tokens == 0 {
            return Err(GrpoError::ShapeMismatch("empty completion"));
        }
        let use_kl = config.kl_beta > 0.0 && reference.is_some();

        let mut grads = vec![0.0; self.param_count()];
        let mut surrogate = 0.0;
        let mut kl_sum = 0.0;

        for (seq_idx, (tokens, old_lp)) in group.completions.iter().zip(&group.old_logprobs).enumerate() {
            if tokens.len() != old_lp.len() {
                return Err(GrpoError::ShapeMismatch("completion/logprob length differ"));
            }
            let adv = advantages[seq_idx];
            let seq_scale = 1.0 / (g as f64 * tokens.len() as f64);
            let mut history: Vec<usize> = prompt.to_vec();
            for (t, &token) in tokens.iter().enumerate() {
                let x = self.features(&history);
                let cache = self.net.forward(&x).map_err(|_| GrpoError::ShapeMismatch("forward"))?;
                let logits = &cache.head_outputs[0];
                let lse = math::log_sum_exp(logits);
                let probs: Vec<f64> = logits.iter().map(|&l| math::exp(l - lse)).collect();
                let new_lp = logits[token] - lse;
                let ratio = math::exp(new_lp - old_lp[t]);

                let clipped = ratio.clamp(1.0 - config.clip_eps, 1.0 + config.clip_eps);
                let unclipped_active = ratio * adv <= clipped * adv;
                surrogate += seq_scale * (ratio * adv).min(clipped * adv);

                // loss = -surrogate + beta * mean KL; gradients w.r.t.
                // the logits at this context.
                let mut dlogits = vec![0.0; probs.len()];
                if unclipped_active && adv != 0.0 {
                    // d(-seq_scale * r * adv)/dlogits through
                    // dlp/dlogits = onehot - softmax
                    let coeff = -seq_scale * ratio * adv;
                    for (j, p) in probs.iter().enumerate() {
                        dlogits[j] += coeff * (-p);
                    }
                    dlogits[token] += coeff;
                }
                if use_kl {
                    let q = reference.unwrap().distribution(&history);
                    if q.len() != probs.len() {
                        return Err(GrpoError::SupportMismatch { policy: probs.len(), reference: q.len() });
                    }
                    let kl = grpo::kl_penalty(&probs, &q)?;
                    kl_sum += kl;
                    let kl_scale = config.kl_beta / total_tokens as f64;
                    for (j, (&p, &qj)) in probs.iter().zip(&q).enumerate() {
                        if p > 0.0 {
                            dlogits[j] += kl_scale * p * (math::ln(p / qj) - kl);
                        }
                    }
                }
                if dlogits.iter().any(|&v| v != 0.0) {
                    self.net
                        .backward_into(&x, &cache, &[Some(&dlogits)], &mut grads)
                        .map_err(|_| GrpoError::ShapeMismatch("backward"))?;
                }
                history.push(token);
            }
        }

        let mean_kl = if use_kl { kl_sum / total_tokens as f64 } else { 0.0 };
        let loss = -surrogate + config.kl_beta * mean_kl;
        Ok((loss, grads))
    }

    /// Mean exact categorical KL to a reference policy over every
    /// context visited by the given completions, with its gradient in
    /// the net's flat layout. Used by the distillation-style baseline.
    pub fn kl_and_grad(
        &self,
        prompt: &[usize],
        completions: &[Vec<usize>],
        reference: &CategoricalPolicy,
    ) -> Result<(f64, Vec<f64>), GrpoError> {
        let total_tokens: usize = completions.iter().map(|c| c.len()).sum();
        if total_tokens == 0 {
            return Err(GrpoError::ShapeMismatch("empty completion"));
        }
        let scale = 1.0 / total_tokens as f64;
        let mut grads = vec![0.0; self.param_count()];
        let mut kl_sum = 0.0;
        for tokens in completions {
            let mut history: Vec<usize> = prompt.to_vec();
            for &token in tokens {
                let x = self.features(&history);
                let cache = self.net.forward(&x).map_err(|_| GrpoError::ShapeMismatch("forward"))?;
                let logits = &cache.head_outputs[0];
                let lse = math::log_sum_exp(logits);
                let probs: Vec<f64> = logits.iter().map(|&l| math::exp(l - lse)).collect();
                let q = reference.distribution(&history);
                if q.len() != probs.len() {
                    return Err(GrpoError::SupportMismatch { policy: probs.len(), reference: q.len() });
                }
                let kl = grpo::kl_penalty(&probs, &q)?;
                kl_sum += kl;
                let dlogits: Vec<f64> = probs
                    .iter()
                    .zip(&q)
                    .map(|(&p, &qj)| if p > 0.0 { scale * p * (math::ln(p / qj) - kl) } else { 0.0 })
                    .collect();
                self.net
                    .backward_into(&x, &cache, &[Some(&dlogits)], &mut grads)
                    .map_err(|_| GrpoError::ShapeMismatch("backward"))?;
                history.push(token);
            }
        }
        Ok((kl_sum * scale, grads))
    }

    /// Samples a rollout group of `group_size` completions under this
    /// (frozen) policy.
    pub fn rollout_group<R: Rng + ?Sized>(
        &self,
        prompt_id: u64,
        prompt: &[usize],
        group_size: usize,
        rng: &mut R,
    ) -> RolloutGroup {
        self.rollout_group_tempered(prompt_id, prompt, group_size, 1.0, rng)
    }

    /// Rollout group sampled at a behavior temperature. Above 1 this
    /// keeps exploration alive on near-deterministic policies; the
    /// stored log-probabilities are those of the tempered behavior
    /// policy, so importance ratios remain correct.
    pub fn rollout_group_tempered<R: Rng + ?Sized>(
        &self,
        prompt_id: u64,
        prompt: &[usize],
        group_size: usize,
        temperature: f64,
        rng: &mut R,
    ) -> RolloutGroup {
        let mut completions = Vec::with_capacity(group_size);
        let mut old_logprobs = Vec::with_capacity(group_size);
        for _ in 0..group_size {
            let c = self.sample_completion(prompt, rng, temperature);
            completions.push(c.tokens);
            old_logprobs.push(c.logprobs);
        }
        RolloutGroup { prompt_id, completions, old_logprobs, rewards: vec![0.0; group_size] }
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (idx, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = idx;
        }
    }
    best
}
