//! Offline stand-in for an LLM.
//!
//! Each prompt is answered correctly with probability
//! `clamp(base_accuracy + demo_quality_weight * q, 0.05, 0.95)`, where `q`
//! is the mean quality of the prompt's demonstrations. A demonstration's
//! quality comes from `demo_quality` when listed there, otherwise from a
//! hash of the mock seed and its id, uniform in `[-1, 1)`. Wrong answers
//! are uniform over the other labels. The draw depends only on the seed
//! and the rendered prompt, so repeated calls agree.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CompletionBackend, LlmError};
use crate::id::DatumId;
use crate::prompt::PromptInput;
use crate::seed::{derive_seed, hash64, sha256_hex};

pub const MIN_CORRECT_PROBABILITY: f64 = 0.05;
pub const MAX_CORRECT_PROBABILITY: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockBackendConfig {
    pub base_accuracy: f64,
    #[serde(default)]
    pub demo_quality_weight: f64,
    #[serde(default)]
    pub seed: u64,
    /// Explicit per-demonstration quality in `[-1, 1]`, keyed by datum id.
    #[serde(default)]
    pub demo_quality: BTreeMap<String, f64>,
}

impl MockBackendConfig {
    pub fn new(base_accuracy: f64, demo_quality_weight: f64, seed: u64) -> Self {
        Self {
            base_accuracy,
            demo_quality_weight,
            seed,
            demo_quality: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=1.0).contains(&self.base_accuracy) {
            return Err(LlmError::Config("base_accuracy must lie in [0, 1]".into()));
        }
        if !self.demo_quality_weight.is_finite() {
            return Err(LlmError::Config(
                "demo_quality_weight must be finite".into(),
            ));
        }
        if self
            .demo_quality
            .values()
            .any(|q| !(-1.0..=1.0).contains(q))
        {
            return Err(LlmError::Config(
                "demo_quality values must lie in [-1, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn demo_quality_of(&self, id: &DatumId) -> f64 {
        if let Some(q) = self.demo_quality.get(id.as_str()) {
            return *q;
        }
        let mut bytes = self.seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(b"demo-quality\0");
        bytes.extend_from_slice(id.as_str().as_bytes());
        let unit = (hash64(&bytes) >> 11) as f64 / (1u64 << 53) as f64;
        2.0 * unit - 1.0
    }
}

/// Probability that the mock answers `prompt` correctly.
pub fn mock_correct_probability(prompt: &PromptInput, cfg: &MockBackendConfig) -> f64 {
    let q = if prompt.demonstrations.is_empty() {
        0.0
    } else {
        prompt
            .demonstrations
            .iter()
            .map(|d| cfg.demo_quality_of(d.id()))
            .sum::<f64>()
            / prompt.demonstrations.len() as f64
    };
    (cfg.base_accuracy + cfg.demo_quality_weight * q)
        .clamp(MIN_CORRECT_PROBABILITY, MAX_CORRECT_PROBABILITY)
}

pub fn mock_complete(prompt: &PromptInput, cfg: &MockBackendConfig, gold: &str) -> String {
    let p = mock_correct_probability(prompt, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        cfg.seed,
        "mock-complete",
        hash64(prompt.rendered.as_bytes()),
    ));
    let wrong: Vec<&String> = prompt
        .labels
        .iter()
        .filter(|l| l.as_str() != gold)
        .collect();
    if wrong.is_empty() || rng.gen::<f64>() < p {
        gold.to_owned()
    } else {
        wrong[rng.gen_range(0..wrong.len())].clone()
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    config: MockBackendConfig,
}

impl MockBackend {
    pub fn new(config: MockBackendConfig) -> Result<Self, LlmError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &MockBackendConfig {
        &self.config
    }
}

impl CompletionBackend for MockBackend {
    fn cache_identity(&self) -> String {
        let overrides = serde_json::to_string(&self.config.demo_quality).unwrap_or_default();
        format!(
            "mock|seed={}|base={}|weight={}|quality={}",
            self.config.seed,
            self.config.base_accuracy,
            self.config.demo_quality_weight,
            sha256_hex(overrides.as_bytes())
        )
    }

    fn complete(&self, prompt: &PromptInput) -> Result<String, LlmError> {
        match &prompt.target.gold {
            Some(gold) if prompt.labels.contains(gold) => {
                Ok(mock_complete(prompt, &self.config, gold))
            }
            _ => Err(LlmError::MissingGold(prompt.target.id.to_string())),
        }
    }
}
