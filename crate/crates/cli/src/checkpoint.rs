//! Checkpoint file format: a JSON document with the policy
//! configuration, a `{layer, shape, dtype}` manifest describing the
//! flat parameter layout, and the parameters themselves. The layout is
//! row-major per layer, weights before biases, hidden layers before
//! heads, and is stable across versions.

use std::path::Path;

use recap_core::learner::{CategoricalPolicy, FeedForwardNet, PolicyConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub layer: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub policy: PolicyConfig,
    pub manifest: Vec<ManifestEntry>,
    pub params: Vec<f64>,
}

fn manifest_for(config: &PolicyConfig) -> Vec<ManifestEntry> {
    let layout = config.net_layout();
    let mut out = Vec::new();
    let mut prev = layout.input_dim;
    for (i, &h) in layout.hidden_dims.iter().enumerate() {
        out.push(ManifestEntry { layer: format!("hidden{i}.weight"), shape: vec![h, prev], dtype: "f64".into() });
        out.push(ManifestEntry { layer: format!("hidden{i}.bias"), shape: vec![h], dtype: "f64".into() });
        prev = h;
    }
    for (j, &d) in layout.head_dims.iter().enumerate() {
        out.push(ManifestEntry { layer: format!("head{j}.weight"), shape: vec![d, prev], dtype: "f64".into() });
        out.push(ManifestEntry { layer: format!("head{j}.bias"), shape: vec![d], dtype: "f64".into() });
    }
    out
}

pub fn save(policy: &CategoricalPolicy, path: &Path) -> Result<(), CheckpointError> {
    let config = policy.config().clone();
    let checkpoint = Checkpoint {
        format_version: FORMAT_VERSION,
        manifest: manifest_for(&config),
        policy: config,
        params: policy.params().to_vec(),
    };
    let mut text = serde_json::to_string(&checkpoint)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<CategoricalPolicy, CheckpointError> {
    let text = std::fs::read_to_string(path)?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)?;
    if checkpoint.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Malformed(format!(
            "unsupported format_version {}",
            checkpoint.format_version
        )));
    }
    let expected = manifest_for(&checkpoint.policy);
    if checkpoint.manifest != expected {
        return Err(CheckpointError::Malformed("manifest does not match policy layout".into()));
    }
    let declared: usize = checkpoint
        .manifest
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    if checkpoint.params.len() != declared {
        return Err(CheckpointError::Malformed(format!(
            "manifest declares {declared} parameters, file carries {}",
            checkpoint.params.len()
        )));
    }
    if checkpoint.params.iter().any(|p| !p.is_finite()) {
        return Err(CheckpointError::Malformed("non-finite parameter".into()));
    }
    let layout = checkpoint.policy.net_layout();
    let mut net = FeedForwardNet::zeros(layout);
    net.params_mut().copy_from_slice(&checkpoint.params);
    CategoricalPolicy::from_net(checkpoint.policy, net)
        .map_err(|e| CheckpointError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy() -> CategoricalPolicy {
        let config = PolicyConfig {
            vocab_size: 7,
            context_len: 3,
            hidden_dims: vec![4],
            max_completion_len: 5,
            eos_token: 1,
            pad_token: 0,
        };
        CategoricalPolicy::new(config, &mut ChaCha8Rng::seed_from_u64(3))
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let p = policy();
        save(&p, &path).unwrap();
        let q = load(&path).unwrap();
        assert_eq!(p.params(), q.params());
        assert_eq!(p.config(), q.config());
    }

    #[test]
    fn manifest_counts_match_params() {
        let p = policy();
        let entries = manifest_for(p.config());
        let declared: usize = entries.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        assert_eq!(declared, p.params().len());
        // input 21 one-hots is irrelevant here; this layout is 3*7 -> 4 -> 7
        assert_eq!(entries[0].shape, vec![4, 21]);
    }

    #[test]
    fn corrupted_params_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let p = policy();
        save(&p, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut ckpt: Checkpoint = serde_json::from_str(&text).unwrap();
        ckpt.params.pop();
        std::fs::write(&path, serde_json::to_string(&ckpt).unwrap()).unwrap();
        assert!(load(&path).is_err());
    }
}
