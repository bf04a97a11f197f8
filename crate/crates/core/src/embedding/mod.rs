//! Datum embeddings and the average-similarity score.
//!
//! A datum's score against a pool is the cosine similarity between its
//! embedding and the arithmetic mean of every embedding in the pool (its own
//! vector included). Rankings built from these scores drive all
//! non-random sampling strategies.

mod cache;
mod provider;
#[cfg(feature = "native")]
mod remote;

pub use cache::EmbeddingCache;
pub use provider::{Embedder, EmbeddingProvider, HashEmbeddingProvider};
#[cfg(feature = "native")]
pub use remote::{RemoteEmbeddingConfig, RemoteEmbeddingProvider};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::id::DatumId;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cosine similarity of a zero vector is undefined")]
    ZeroVector,
    #[error("empty embedding pool")]
    EmptyPool,
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

/// A finite, non-empty embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multiplies every component by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, EmbeddingError> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbeddingError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// A datum's average-similarity score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDatum {
    pub id: DatumId,
    pub score: f64,
}

impl ScoredDatum {
    pub fn new(id: impl Into<DatumId>, score: f64) -> Self {
        Self {
            id: id.into(),
            score,
        }
    }
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Componentwise arithmetic mean of a pool.
pub fn mean_embedding<'a, I>(pool: I) -> Result<EmbeddingVector, EmbeddingError>
where
    I: IntoIterator<Item = &'a EmbeddingVector>,
{
    let mut iter = pool.into_iter();
    let first = iter.next().ok_or(EmbeddingError::EmptyPool)?;
    let mut sum = first.0.clone();
    let mut count = 1usize;
    for v in iter {
        if v.dim() != sum.len() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: sum.len(),
                actual: v.dim(),
            });
        }
        for (acc, x) in sum.iter_mut().zip(&v.0) {
            *acc += x;
        }
        count += 1;
    }
    let n = count as f64;
    EmbeddingVector::new(sum.into_iter().map(|s| s / n).collect())
}

/// Scores every datum against the mean of the whole pool, preserving input order.
pub fn score_pool(pool: &[(DatumId, EmbeddingVector)]) -> Result<Vec<ScoredDatum>, EmbeddingError> {
    let centroid = mean_embedding(pool.iter().map(|(_, v)| v))?;
    pool.iter()
        .map(|(id, v)| {
            Ok(ScoredDatum {
                id: id.clone(),
                score: cosine(v, &centroid)?,
            })
        })
        .collect()
}
