//! Multi-domain data sampling strategies used as replay baselines:
//! uniform, proportional-to-size (PropMix), coreset-restricted replay,
//! and reasoning-only.
//!
//! Sampling is deterministic given `(config, seed)`; within-domain
//! draws are with replacement by default, with an epoch mode that
//! cycles a per-domain shuffled permutation instead.

use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SamplerError {
    #[error("domain {0} has no examples to draw from")]
    EmptyDomain(String),
    #[error("coreset budget {budget} exceeds domain size {size}")]
    BudgetExceedsSize { budget: usize, size: usize },
    #[error("exactly one domain must have is_target = true, found {0}")]
    TargetCount(usize),
    #[error("no domains configured")]
    NoDomains,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Rl,
    Sft,
}

/// One replay or target data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub id: String,
    pub size: usize,
    pub kind: DomainKind,
    /// Names of the objectives bound to this domain.
    pub objectives: Vec<String>,
    #[serde(default)]
    pub is_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum MixtureStrategy {
    Uniform,
    Proportional,
    Coreset { fraction: f64 },
    ReasoningOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    #[serde(flatten)]
    pub strategy: MixtureStrategy,
    pub seed: u64,
    /// When false, within-domain draws cycle a shuffled permutation
    /// (epoch mode) instead of independent draws with replacement.
    #[serde(default = "default_true")]
    pub with_replacement: bool,
}

fn default_true() -> bool {
    true
}

/// One drawn item: domain index into the sampler's domain list plus an
/// example index within that domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Draw {
    pub domain: usize,
    pub example: usize,
}

/// Uniformly random fixed subset of `budget` distinct indices, sorted.
/// The same `(domain id, seed)` always yields the same subset.
pub fn coreset_select(domain: &DomainSpec, budget: usize, seed: u64) -> Result<Vec<usize>, SamplerError> {
    if budget > domain.size {
        return Err(SamplerError::BudgetExceedsSize { budget, size: domain.size });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(domain.id.as_bytes()));
    let mut indices: Vec<usize> = (0..domain.size).collect();
    indices.partial_shuffle(&mut rng, budget);
    let mut subset: Vec<usize> = indices[..budget].to_vec();
    subset.sort_unstable();
    Ok(subset)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Draws batches of `(domain, example)` pairs under a mixture strategy.
#[derive(Debug, Clone)]
pub struct ReplaySampler {
    domains: Vec<DomainSpec>,
    config: MixtureConfig,
    rng: ChaCha8Rng,
    target: usize,
    /// Per-domain allowed index pool. Identity for unrestricted
    /// domains; the coreset subset for restricted replay domains.
    pools: Vec<Vec<usize>>,
    /// Epoch-mode cursors and permutations, lazily (re)shuffled.
    epoch_order: Vec<Vec<usize>>,
    epoch_pos: Vec<usize>,
}

impl ReplaySampler {
    pub fn new(domains: Vec<DomainSpec>, config: MixtureConfig) -> Result<Self, SamplerError> {
        if domains.is_empty() {
            return Err(SamplerError::NoDomains);
        }
        let targets = domains.iter().filter(|d| d.is_target).count();
        if targets != 1 {
            return Err(SamplerError::TargetCount(targets));
        }
        for d in &domains {
            if d.size == 0 {
                return Err(SamplerError::EmptyDomain(d.id.clone()));
            }
        }
        let target = domains.iter().position(|d| d.is_target).unwrap();
        let target_size = domains[target].size;

        let mut pools = Vec::with_capacity(domains.len());
        for (idx, d) in domains.iter().enumerate() {
            let pool = match config.strategy {
                MixtureStrategy::Coreset { fraction } if idx != target => {
                    let budget = ((fraction * target_size as f64) as usize).clamp(1, d.size);
                    coreset_select(d, budget, config.seed)?
                }
                _ => (0..d.size).collect(),
            };
            pools.push(pool);
        }

        let n = domains.len();
        Ok(Self {
            domains,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            target,
            pools,
            epoch_order: alloc::vec![Vec::new(); n],
            epoch_pos: alloc::vec![0; n],
        })
    }

    pub fn domains(&self) -> &[DomainSpec] {
        &self.domains
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    /// The fixed coreset pool of a domain (identity when unrestricted).
    pub fn pool(&self, domain: usize) -> &[usize] {
        &self.pools[domain]
    }

    fn pick_domain(&mut self) -> usize {
        match self.config.strategy {
            MixtureStrategy::ReasoningOnly => self.target,
            MixtureStrategy::Uniform | MixtureStrategy::Coreset { .. } => {
                self.rng.random_range(0..self.domains.len())
            }
            MixtureStrategy::Proportional => {
                let total: usize = self.domains.iter().map(|d| d.size).sum();
                let mut ticket = self.rng.random_range(0..total);
                for (idx, d) in self.domains.iter().enumerate() {
                    if ticket < d.size {
                        return idx;
                    }
                    ticket -= d.size;
                }
                self.domains.len() - 1
            }
        }
    }

    fn pick_example(&mut self, domain: usize) -> usize {
        if self.config.with_replacement {
            let pool = &self.pools[domain];
            pool[self.rng.random_range(0..pool.len())]
        } else {
            if self.epoch_pos[domain] >= self.epoch_order[domain].len() {
                let mut order = self.pools[domain].clone();
                order.shuffle(&mut self.rng);
                self.epoch_order[domain] = order;
                self.epoch_pos[domain] = 0;
            }
            let idx = self.epoch_order[domain][self.epoch_pos[domain]];
            self.epoch_pos[domain] += 1;
            idx
        }
    }

    /// Draws the next batch. Deterministic given the construction seed
    /// and the sequence of calls so far.
    pub fn next_batch(&mut self, batch_size: usize) -> Vec<Draw> {
        let mut batch = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let domain = self.pick_domain();
            let example = self.pick_example(domain);
            batch.push(Draw { domain, example });
        }
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn domains() -> Vec<DomainSpec> {
        vec![
            DomainSpec {
                id: "general".to_string(),
                size: 1000,
                kind: DomainKind::Sft,
                objectives: vec!["ntp".to_string()],
                is_target: false,
            },
            DomainSpec {
                id: "perception".to_string(),
                size: 800,
                kind: DomainKind::Rl,
                objectives: vec!["iou".to_string()],
                is_target: false,
            },
            DomainSpec {
                id: "reasoning".to_string(),
                size: 1000,
                kind: DomainKind::Rl,
                objectives: vec!["acc".to_string()],
                is_target: true,
            },
        ]
    }

    fn sampler(strategy: MixtureStrategy, seed: u64) -> ReplaySampler {
        ReplaySampler::new(
            domains(),
            MixtureConfig { strategy, seed, with_replacement: true },
        )
        .unwrap()
    }

    #[test]
    fn reasoning_only_emits_only_target() {
        let mut s = sampler(MixtureStrategy::ReasoningOnly, 7);
        for draw in s.next_batch(500) {
            assert_eq!(draw.domain, 2);
        }
    }

    #[test]
    fn uniform_counts_within_three_sigma() {
        let mut s = sampler(MixtureStrategy::Uniform, 11);
        let mut counts = [0usize; 3];
        for draw in s.next_batch(30_000) {
            counts[draw.domain] += 1;
        }
        // binomial sigma = sqrt(n p (1-p)) with n = 30000, p = 1/3
        let sigma = (30_000.0f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn proportional_matches_paper_source_sizes() {
        let mut doms = domains();
        doms[0].size = 321_327;
        doms[1].size = 66_468;
        doms[2].size = 69_997;
        let mut s = ReplaySampler::new(
            doms,
            MixtureConfig { strategy: MixtureStrategy::Proportional, seed: 3, with_replacement: true },
        )
        .unwrap();
        let n = 100_000usize;
        let mut counts = [0usize; 3];
        for draw in s.next_batch(n) {
            counts[draw.domain] += 1;
        }
        let total = 321_327.0 + 66_468.0 + 69_997.0;
        for (c, size) in counts.iter().zip([321_327.0, 66_468.0, 69_997.0]) {
            let p: f64 = size / total;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn determinism_bit_for_bit() {
        let mut a = sampler(MixtureStrategy::Coreset { fraction: 0.5 }, 99);
        let mut b = sampler(MixtureStrategy::Coreset { fraction: 0.5 }, 99);
        assert_eq!(a.next_batch(1000), b.next_batch(1000));
    }

    #[test]
    fn coreset_restricts_replay_domains_only() {
        let mut s = sampler(MixtureStrategy::Coreset { fraction: 0.5 }, 5);
        // target size 1000 -> replay budget 500 per domain
        assert_eq!(s.pool(0).len(), 500);
        assert_eq!(s.pool(1).len(), 500);
        assert_eq!(s.pool(2).len(), 1000);
        let pool0: Vec<usize> = s.pool(0).to_vec();
        for draw in s.next_batch(2000) {
            if draw.domain == 0 {
                assert!(pool0.binary_search(&draw.example).is_ok());
            }
        }
    }

    #[test]
    fn coreset_select_contract() {
        let d = domains().remove(0);
        let full = coreset_select(&d, d.size, 1).unwrap();
        assert_eq!(full, (0..d.size).collect::<Vec<_>>());

        let one_a = coreset_select(&d, 1, 42).unwrap();
        let one_b = coreset_select(&d, 1, 42).unwrap();
        assert_eq!(one_a.len(), 1);
        assert_eq!(one_a, one_b);

        let half = coreset_select(&d, 500, 7).unwrap();
        assert_eq!(half.len(), 500);
        assert!(half.windows(2).all(|w| w[0] < w[1]));

        assert_eq!(
            coreset_select(&d, d.size + 1, 0),
            Err(SamplerError::BudgetExceedsSize { budget: 1001, size: 1000 })
        );
    }

    #[test]
    fn epoch_mode_visits_every_example_once() {
        let mut doms = domains();
        doms[2].size = 64;
        let mut s = ReplaySampler::new(
            doms,
            MixtureConfig {
                strategy: MixtureStrategy::ReasoningOnly,
                seed: 13,
                with_replacement: false,
            },
        )
        .unwrap();
        let mut seen: Vec<usize> = s.next_batch(64).iter().map(|d| d.example).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn chi_square_goodness_of_fit_uniform() {
        let mut s = sampler(MixtureStrategy::Uniform, 2024);
        let n = 100_000usize;
        let mut counts = [0f64; 3];
        for draw in s.next_batch(n) {
            counts[draw.domain] += 1.0;
        }
        let expected = n as f64 / 3.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected) * (c - expected) / expected).sum();
        // chi-square critical value, 2 dof, p = 0.001
        assert!(chi2 < 13.815, "chi2 = {chi2}");
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut doms = domains();
        doms[2].is_target = false;
        assert_eq!(
            ReplaySampler::new(
                doms,
                MixtureConfig { strategy: MixtureStrategy::Uniform, seed: 0, with_replacement: true }
            )
            .unwrap_err(),
            SamplerError::TargetCount(0)
        );

        let mut doms = domains();
        doms[0].size = 0;
        assert!(matches!(
            ReplaySampler::new(
                doms,
                MixtureConfig { strategy: MixtureStrategy::Uniform, seed: 0, with_replacement: true }
            ),
            Err(SamplerError::EmptyDomain(_))
        ));
    }
}
