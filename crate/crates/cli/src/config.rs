//! Experiment configuration schema (JSON) and its validation into a
//! resolved run plan.

use std::path::PathBuf;

use recap_core::grpo::GrpoConfig;
use recap_core::sampler::{DomainKind, DomainSpec, MixtureStrategy};
use recap_core::window::ObjectiveId;
use recap_core::SchedulerConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tasks::TaskKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Recap,
    Uniform,
    PropMix,
    Coreset,
    Lwf,
    ReasoningOnly,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Recap => "recap",
            Method::Uniform => "uniform",
            Method::PropMix => "prop_mix",
            Method::Coreset => "coreset",
            Method::Lwf => "lwf",
            Method::ReasoningOnly => "reasoning_only",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainConfig {
    pub id: String,
    pub task: TaskKind,
    pub size: usize,
    pub kind: DomainKind,
    #[serde(default)]
    pub is_target: bool,
}

impl DomainConfig {
    /// Objective names this domain contributes to the global list.
    pub fn objective_names(&self) -> Vec<String> {
        match self.kind {
            DomainKind::Sft => vec![format!("nll_{}", self.id)],
            DomainKind::Rl => self
                .task
                .reward_names()
                .iter()
                .map(|n| n.to_string())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_context_len")]
    pub context_len: usize,
    #[serde(default = "default_max_completion")]
    pub max_completion_len: usize,
    #[serde(default = "default_peak_lr")]
    pub peak_lr: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![32]
}
fn default_context_len() -> usize {
    16
}
fn default_max_completion() -> usize {
    14
}
fn default_peak_lr() -> f64 {
    0.01
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dims: default_hidden(),
            context_len: default_context_len(),
            max_completion_len: default_max_completion(),
            peak_lr: default_peak_lr(),
        }
    }
}

/// Which per-objective signal feeds the scheduler window for RL
/// domains: mean `1 - r` per batch (default) or the GRPO surrogate
/// loss itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowSignal {
    #[default]
    Reward,
    Surrogate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub run_id: Option<String>,
    pub method: Method,
    pub seed: u64,
    pub total_steps: u64,
    pub batch_size: usize,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    pub eval_every: u64,
    pub eval_size: usize,
    pub domains: Vec<DomainConfig>,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub grpo: GrpoConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub window_signal: WindowSignal,
    #[serde(default)]
    pub init_checkpoint: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub with_replacement: bool,
    #[serde(default = "default_coreset_fraction")]
    pub coreset_fraction: f64,
    /// Behavior temperature for RL rollouts. Values above 1 keep sampling
    /// diverse when the policy is confident; stored rollout log-probs are
    /// the tempered ones, so GRPO ratios stay correct.
    #[serde(default = "default_rollout_temperature")]
    pub rollout_temperature: f64,
}

fn default_group_size() -> usize {
    4
}
fn default_true() -> bool {
    true
}
fn default_coreset_fraction() -> f64 {
    0.5
}
fn default_rollout_temperature() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn run_id(&self) -> String {
        self.run_id
            .clone()
            .unwrap_or_else(|| format!("{}-seed{}", self.method.name(), self.seed))
    }

    /// Global objective list in domain order.
    pub fn objectives(&self) -> Vec<ObjectiveId> {
        let mut out = Vec::new();
        for d in &self.domains {
            for name in d.objective_names() {
                let index = out.len();
                out.push(ObjectiveId::new(name, index));
            }
        }
        out
    }

    pub fn mixture_strategy(&self) -> MixtureStrategy {
        match self.method {
            Method::Recap | Method::Uniform | Method::Lwf => MixtureStrategy::Uniform,
            Method::PropMix => MixtureStrategy::Proportional,
            Method::Coreset => MixtureStrategy::Coreset { fraction: self.coreset_fraction },
            Method::ReasoningOnly => MixtureStrategy::ReasoningOnly,
        }
    }

    pub fn domain_specs(&self) -> Vec<DomainSpec> {
        self.domains
            .iter()
            .map(|d| DomainSpec {
                id: d.id.clone(),
                size: d.size,
                kind: d.kind,
                objectives: d.objective_names(),
                is_target: d.is_target,
            })
            .collect()
    }

    /// Validates and normalizes the config. The LwF method requires
    /// its KL coefficient; an unset (zero) beta is filled in, any other
    /// value must already be 0.01.
    pub fn validate(&mut self) -> Result<(), ConfigError> {
        if self.total_steps == 0 {
            return Err(ConfigError::Invalid("total_steps must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ConfigError::Invalid("batch_size must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(ConfigError::Invalid("eval_every must be >= 1".into()));
        }
        if self.eval_size == 0 {
            return Err(ConfigError::Invalid("eval_size must be >= 1".into()));
        }
        if self.group_size < 2 {
            return Err(ConfigError::Invalid("group_size must be >= 2".into()));
        }
        if self.domains.is_empty() {
            return Err(ConfigError::Invalid("at least one domain required".into()));
        }
        let targets = self.domains.iter().filter(|d| d.is_target).count();
        if targets != 1 {
            return Err(ConfigError::Invalid(format!(
                "exactly one target domain required, found {targets}"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for d in &self.domains {
            if !seen.insert(d.id.clone()) {
                return Err(ConfigError::Invalid(format!("duplicate domain id {}", d.id)));
            }
            if d.kind == DomainKind::Rl && d.task == TaskKind::Copy {
                return Err(ConfigError::Invalid(format!(
                    "domain {}: the copy task has no rewards and cannot train by RL",
                    d.id
                )));
            }
        }
        match self.method {
            Method::Lwf => {
                if self.grpo.kl_beta == 0.0 {
                    self.grpo.kl_beta = 0.01;
                } else if (self.grpo.kl_beta - 0.01).abs() > 1e-12 {
                    return Err(ConfigError::Invalid(format!(
                        "method lwf requires kl_beta = 0.01, got {}",
                        self.grpo.kl_beta
                    )));
                }
            }
            _ => {
                if self.grpo.kl_beta != 0.0 {
                    return Err(ConfigError::Invalid(format!(
                        "method {} disables the reference-KL penalty; kl_beta must be 0",
                        self.method.name()
                    )));
                }
            }
        }
        self.grpo.group_size = self.group_size;
        if !(self.coreset_fraction > 0.0 && self.coreset_fraction <= 1.0) {
            return Err(ConfigError::Invalid("coreset_fraction must be in (0, 1]".into()));
        }
        if !(self.rollout_temperature.is_finite() && self.rollout_temperature > 0.0) {
            return Err(ConfigError::Invalid("rollout_temperature must be positive".into()));
        }
        let longest_target = self
            .domains
            .iter()
            .map(|d| crate::tasks::make_example(d.task, &d.id, 0).target.len())
            .max()
            .unwrap_or(0);
        if self.model.max_completion_len < longest_target {
            return Err(ConfigError::Invalid(format!(
                "max_completion_len {} cannot emit the longest canonical completion ({longest_target} tokens)",
                self.model.max_completion_len
            )));
        }
        Ok(())
    }
}
