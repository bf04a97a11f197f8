//! Data-based sampling strategies over an average-similarity ranking.
//!
//! The same selectors serve two purposes: picking the `n` demonstration
//! candidates from the training data, and picking the `m` demonstrations of
//! each committee prompt from the candidates.
//!
//! Diversity spacing: positions are `round(j * (len - 1) / (n - 1))` for
//! `j = 0..n` (0-based), so the first and last ranked items are always
//! included. Ten items sampled down to four give ranks 1, 4, 7 and 10. The
//! modular-step formulation (`step = floor(len / n)`, keep every index
//! divisible by the step) yields five items for that case and is not used.
//!
//! Similarity returns exactly `n` items (the top of the ranking). Hybrid
//! takes `ceil(n / 2)` diversity picks over the full ranking, removes them,
//! and fills the remaining `floor(n / 2)` from the top of what is left.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::ScoredDatum;
use crate::id::DatumId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StrategyError {
    #[error("empty pool")]
    EmptyPool,
    #[error("sample size {n} exceeds pool size {pool}")]
    SampleTooLarge { n: usize, pool: usize },
    #[error("sample size {n} is below the minimum {min} for {kind}")]
    SampleTooSmall {
        n: usize,
        min: usize,
        kind: StrategyKind,
    },
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Random,
    Diversity,
    Similarity,
    Hybrid,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Random,
        StrategyKind::Diversity,
        StrategyKind::Similarity,
        StrategyKind::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Diversity => "diversity",
            StrategyKind::Similarity => "similarity",
            StrategyKind::Hybrid => "hybrid",
        }
    }

    /// Whether the strategy needs average-similarity scores.
    pub fn needs_scores(self) -> bool {
        self != StrategyKind::Random
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(StrategyKind::Random),
            "diversity" => Ok(StrategyKind::Diversity),
            "similarity" => Ok(StrategyKind::Similarity),
            "hybrid" => Ok(StrategyKind::Hybrid),
            _ => Err(StrategyError::UnknownStrategy(s.to_owned())),
        }
    }
}

/// Datum ids in descending score order, ties broken by ascending id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking(Vec<DatumId>);

impl Ranking {
    pub fn ids(&self) -> &[DatumId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The ranking with `removed` taken out, relative order kept.
    pub fn without(&self, removed: &[DatumId]) -> Ranking {
        Ranking(
            self.0
                .iter()
                .filter(|id| !removed.contains(id))
                .cloned()
                .collect(),
        )
    }
}

pub fn rank_by_average_similarity(pool: &[ScoredDatum]) -> Result<Ranking, StrategyError> {
    if pool.is_empty() {
        return Err(StrategyError::EmptyPool);
    }
    let mut sorted: Vec<&ScoredDatum> = pool.iter().collect();
    // `+ 0.0` folds -0.0 into 0.0 so signed zeros tie.
    sorted.sort_by(|a, b| {
        (b.score + 0.0)
            .total_cmp(&(a.score + 0.0))
            .then_with(|| a.id.cmp(&b.id))
    });
    Ok(Ranking(sorted.into_iter().map(|s| s.id.clone()).collect()))
}

fn check_size(n: usize, pool: usize) -> Result<(), StrategyError> {
    if n > pool {
        return Err(StrategyError::SampleTooLarge { n, pool });
    }
    Ok(())
}

/// 0-based evenly spaced positions, endpoints included.
pub fn diversity_positions(len: usize, n: usize) -> Vec<usize> {
    match n {
        0 => Vec::new(),
        1 => vec![0],
        _ => {
            let (span, gaps) = (len - 1, n - 1);
            // round(j * span / gaps), half rounding up, in integer arithmetic
            (0..n).map(|j| (2 * j * span + gaps) / (2 * gaps)).collect()
        }
    }
}

pub fn select_diversity(ranking: &Ranking, n: usize) -> Result<Vec<DatumId>, StrategyError> {
    check_size(n, ranking.len())?;
    if n == 0 {
        return Err(StrategyError::SampleTooSmall {
            n,
            min: 1,
            kind: StrategyKind::Diversity,
        });
    }
    Ok(diversity_positions(ranking.len(), n)
        .into_iter()
        .map(|p| ranking.0[p].clone())
        .collect())
}

pub fn select_similarity(ranking: &Ranking, n: usize) -> Result<Vec<DatumId>, StrategyError> {
    check_size(n, ranking.len())?;
    if n == 0 {
        return Err(StrategyError::SampleTooSmall {
            n,
            min: 1,
            kind: StrategyKind::Similarity,
        });
    }
    Ok(ranking.0[..n].to_vec())
}

pub fn select_hybrid(ranking: &Ranking, n: usize) -> Result<Vec<DatumId>, StrategyError> {
    check_size(n, ranking.len())?;
    if n < 2 {
        return Err(StrategyError::SampleTooSmall {
            n,
            min: 2,
            kind: StrategyKind::Hybrid,
        });
    }
    let n_div = n.div_ceil(2);
    let mut picks = select_diversity(ranking, n_div)?;
    let rest = ranking.without(&picks);
    picks.extend(select_similarity(&rest, n - n_div)?);
    Ok(picks)
}

/// Uniform sample without replacement, in draw order.
pub fn select_random(pool: &[DatumId], n: usize, seed: u64) -> Result<Vec<DatumId>, StrategyError> {
    check_size(n, pool.len())?;
    if n == 0 {
        return Err(StrategyError::SampleTooSmall {
            n,
            min: 1,
            kind: StrategyKind::Random,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

/// Dispatches on `kind`. `scores` are required for every kind but random;
/// for random the pool order of `scores` is used as the id list.
pub fn select(
    kind: StrategyKind,
    scores: &[ScoredDatum],
    n: usize,
    seed: u64,
) -> Result<Vec<DatumId>, StrategyError> {
    if scores.is_empty() {
        return Err(StrategyError::EmptyPool);
    }
    match kind {
        StrategyKind::Random => {
            let ids: Vec<DatumId> = scores.iter().map(|s| s.id.clone()).collect();
            select_random(&ids, n, seed)
        }
        StrategyKind::Diversity => select_diversity(&rank_by_average_similarity(scores)?, n),
        StrategyKind::Similarity => select_similarity(&rank_by_average_similarity(scores)?, n),
        StrategyKind::Hybrid => select_hybrid(&rank_by_average_similarity(scores)?, n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{BTreeSet, HashMap};

    fn ids(n: usize) -> Vec<DatumId> {
        (0..n)
            .map(|i| DatumId::new(format!("r{:02}", i + 1)))
            .collect()
    }

    /// r01 ranked first, r02 second, ...
    fn ranking(n: usize) -> Ranking {
        let scores: Vec<ScoredDatum> = ids(n)
            .into_iter()
            .enumerate()
            .map(|(i, id)| ScoredDatum {
                id,
                score: 1.0 - i as f64 / 100.0,
            })
            .collect();
        rank_by_average_similarity(&scores).unwrap()
    }

    fn names(v: &[DatumId]) -> Vec<&str> {
        v.iter().map(|i| i.as_str()).collect()
    }

    #[test]
    fn ranking_examples() {
        let pool = vec![
            ScoredDatum::new("a", 0.9),
            ScoredDatum::new("b", 0.1),
            ScoredDatum::new("c", 0.5),
        ];
        assert_eq!(
            names(rank_by_average_similarity(&pool).unwrap().ids()),
            ["a", "c", "b"]
        );
        let tied = vec![ScoredDatum::new("b", 0.5), ScoredDatum::new("a", 0.5)];
        assert_eq!(
            names(rank_by_average_similarity(&tied).unwrap().ids()),
            ["a", "b"]
        );
        assert_eq!(
            rank_by_average_similarity(&[]),
            Err(StrategyError::EmptyPool)
        );
    }

    #[test]
    fn diversity_matches_worked_examples() {
        assert_eq!(
            names(&select_diversity(&ranking(10), 4).unwrap()),
            ["r01", "r04", "r07", "r10"]
        );
        assert_eq!(
            names(&select_diversity(&ranking(7), 3).unwrap()),
            ["r01", "r04", "r07"]
        );
        assert_eq!(select_diversity(&ranking(5), 5).unwrap(), ids(5));
        assert_eq!(names(&select_diversity(&ranking(5), 1).unwrap()), ["r01"]);
        assert_eq!(
            select_diversity(&ranking(3), 4),
            Err(StrategyError::SampleTooLarge { n: 4, pool: 3 })
        );
    }

    #[test]
    fn similarity_examples() {
        let pool = vec![
            ScoredDatum::new("a", 0.9),
            ScoredDatum::new("b", 0.1),
            ScoredDatum::new("c", 0.5),
        ];
        let r = rank_by_average_similarity(&pool).unwrap();
        assert_eq!(names(&select_similarity(&r, 2).unwrap()), ["a", "c"]);
        assert_eq!(names(&select_similarity(&r, 3).unwrap()), ["a", "c", "b"]);
        assert!(select_similarity(&r, 4).is_err());
    }

    #[test]
    fn hybrid_examples() {
        assert_eq!(
            names(&select_hybrid(&ranking(10), 4).unwrap()),
            ["r01", "r10", "r02", "r03"]
        );
        assert_eq!(
            names(&select_hybrid(&ranking(6), 2).unwrap()),
            ["r01", "r02"]
        );
        // odd n: ceil(5/2) = 3 diversity picks over 9 -> r01 r05 r09, then r02 r03
        assert_eq!(
            names(&select_hybrid(&ranking(9), 5).unwrap()),
            ["r01", "r05", "r09", "r02", "r03"]
        );
        assert!(matches!(
            select_hybrid(&ranking(9), 1),
            Err(StrategyError::SampleTooSmall { .. })
        ));
    }

    #[test]
    fn random_is_seeded_permutation() {
        let pool = ids(8);
        let a = select_random(&pool, 8, 11).unwrap();
        assert_eq!(a, select_random(&pool, 8, 11).unwrap());
        let set: BTreeSet<_> = a.iter().collect();
        assert_eq!(set.len(), 8);
        assert!(select_random(&pool, 9, 0).is_err());
    }

    #[test]
    fn random_single_draws_are_uniform() {
        let pool = ids(4);
        let mut counts: HashMap<DatumId, usize> = HashMap::new();
        let draws = 10_000u64;
        for seed in 0..draws {
            let pick =
                select_random(&pool, 1, crate::seed::derive_seed(99, "uniform", seed)).unwrap();
            *counts.entry(pick[0].clone()).or_default() += 1;
        }
        for id in &pool {
            let freq = counts[id] as f64 / draws as f64;
            assert!((freq - 0.25).abs() <= 0.02, "{id}: {freq}");
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for kind in StrategyKind::ALL {
            assert_eq!(kind.as_str().parse::<StrategyKind>().unwrap(), kind);
        }
        assert!("core-set".parse::<StrategyKind>().is_err());
    }

    fn scored_pool() -> impl Strategy<Value = Vec<ScoredDatum>> {
        prop::collection::vec(-1.0f64..1.0, 2..40).prop_map(|scores| {
            scores
                .into_iter()
                .enumerate()
                .map(|(i, s)| {
                    ScoredDatum::new(format!("d{i:02}").as_str(), (s * 8.0).round() / 8.0)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn selectors_return_n_distinct_pool_ids(pool in scored_pool(), frac in 0.0f64..1.0, seed: u64) {
            let n = 2 + ((pool.len() - 2) as f64 * frac) as usize;
            let pool_ids: BTreeSet<_> = pool.iter().map(|s| s.id.clone()).collect();
            for kind in StrategyKind::ALL {
                let picked = select(kind, &pool, n, seed).unwrap();
                prop_assert_eq!(picked.len(), n);
                let set: BTreeSet<_> = picked.iter().cloned().collect();
                prop_assert_eq!(set.len(), n);
                prop_assert!(set.is_subset(&pool_ids));
            }
        }

        #[test]
        fn ranking_is_non_increasing_permutation(pool in scored_pool()) {
            let r = rank_by_average_similarity(&pool).unwrap();
            let score: HashMap<_, _> = pool.iter().map(|s| (s.id.clone(), s.score)).collect();
            prop_assert_eq!(r.len(), pool.len());
            for w in r.ids().windows(2) {
                prop_assert!(score[&w[0]] > score[&w[1]] || (score[&w[0]] == score[&w[1]] && w[0] < w[1]));
            }
        }

        #[test]
        fn diversity_includes_both_ends(pool in scored_pool(), frac in 0.0f64..1.0) {
            let r = rank_by_average_similarity(&pool).unwrap();
            let n = 2 + ((r.len() - 2) as f64 * frac) as usize;
            let picked = select_diversity(&r, n).unwrap();
            prop_assert_eq!(&picked[0], &r.ids()[0]);
            prop_assert_eq!(picked.last().unwrap(), r.ids().last().unwrap());
        }

        #[test]
        fn similarity_is_prefix_closed(pool in scored_pool(), frac in 0.0f64..1.0) {
            let r = rank_by_average_similarity(&pool).unwrap();
            let n = 1 + ((r.len() - 1) as f64 * frac) as usize;
            if n < r.len() {
                let small = select_similarity(&r, n).unwrap();
                let big = select_similarity(&r, n + 1).unwrap();
                prop_assert_eq!(&big[..n], &small[..]);
            }
        }

        #[test]
        fn positive_score_scaling_changes_nothing(pool in scored_pool(), c in 0.01f64..50.0, seed: u64) {
            let scaled: Vec<_> = pool.iter().map(|s| ScoredDatum { id: s.id.clone(), score: s.score * c }).collect();
            let n = pool.len() / 2 + 1;
            for kind in StrategyKind::ALL {
                prop_assert_eq!(select(kind, &pool, n, seed).unwrap(), select(kind, &scaled, n, seed).unwrap());
            }
        }

        #[test]
        fn hybrid_is_concatenation_of_sub_selections(pool in scored_pool(), frac in 0.0f64..1.0) {
            let r = rank_by_average_similarity(&pool).unwrap();
            let n = 2 + ((r.len() - 2) as f64 * frac) as usize;
            let div = select_diversity(&r, n.div_ceil(2)).unwrap();
            let sim = select_similarity(&r.without(&div), n / 2).unwrap();
            let expected: Vec<_> = div.into_iter().chain(sim).collect();
            prop_assert_eq!(select_hybrid(&r, n).unwrap(), expected);
        }
    }
}
