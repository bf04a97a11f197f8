use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingCache, EmbeddingError, EmbeddingVector};
use crate::seed::{hash64, sha256_hex};

/// A source of text embeddings.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier used in cache keys.
    fn provider_id(&self) -> &str;
    fn model(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, EmbeddingError>;
}

/// Offline deterministic provider.
///
/// Text is lowercased and split on non-alphanumeric characters (if that leaves
/// no tokens, the trimmed text is the single token). Each token seeds a
/// ChaCha8 generator with the first eight bytes (LE) of
/// `SHA-256(seed_le_bytes || token)`, which draws `dim` values uniform in
/// `[-1, 1)`; the draw is normalized to a unit vector. Token vectors are
/// summed and the sum normalized again.
#[derive(Debug, Clone)]
pub struct HashEmbeddingProvider {
    dim: usize,
    seed: u64,
    model: String,
}

impl HashEmbeddingProvider {
    pub const DEFAULT_DIM: usize = 64;

    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "embedding dim must be positive");
        Self {
            dim,
            seed,
            model: format!("hash-{dim}-{seed}"),
        }
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut bytes = self.seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(token.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(hash64(&bytes));
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        normalize(&mut v);
        v
    }
}

impl Default for HashEmbeddingProvider {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM, 0)
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

impl EmbeddingProvider for HashEmbeddingProvider {
    fn provider_id(&self) -> &str {
        "hash"
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let lowered = text.to_lowercase();
        let mut tokens: Vec<&str> = lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            tokens.push(lowered.trim());
        }
        let mut sum = vec![0.0; self.dim];
        for token in tokens {
            for (acc, x) in sum.iter_mut().zip(self.token_vector(token)) {
                *acc += x;
            }
        }
        normalize(&mut sum);
        Ok(sum)
    }
}

/// Embeds text through a provider, enforcing the vector contract and caching
/// results by `(provider id, model, content hash)`.
pub struct Embedder {
    provider: Arc<dyn EmbeddingProvider>,
    cache: EmbeddingCache,
    provider_calls: AtomicUsize,
}

impl Embedder {
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        Self::with_cache(provider, EmbeddingCache::in_memory())
    }

    pub fn with_cache(provider: Arc<dyn EmbeddingProvider>, cache: EmbeddingCache) -> Self {
        Self {
            provider,
            cache,
            provider_calls: AtomicUsize::new(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.provider.dim()
    }

    /// Number of embeddings actually requested from the provider (cache misses).
    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::Relaxed)
    }

    pub fn cache_key(&self, text: &str) -> String {
        format!(
            "{}\t{}\t{}",
            self.provider.provider_id(),
            self.provider.model(),
            sha256_hex(text.as_bytes())
        )
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        let key = self.cache_key(text);
        if let Some(v) = self.cache.get(&key) {
            return Ok(v);
        }
        self.provider_calls.fetch_add(1, Ordering::Relaxed);
        let raw = self.provider.embed_raw(text)?;
        if raw.len() != self.provider.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.provider.dim(),
                actual: raw.len(),
            });
        }
        let v = EmbeddingVector::new(raw)?;
        self.cache.insert(key, v.clone())?;
        Ok(v)
    }
}
