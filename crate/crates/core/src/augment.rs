//! Committee construction.
//!
//! For each target, `k` rounds each draw `m` demonstrations from the
//! candidates still available, using the augmentation strategy, and remove
//! them. Non-random strategies re-rank the remaining candidates by their
//! precomputed average-similarity scores every round. Demonstrations appear
//! in a prompt in the order they were drawn. The full candidate list is used
//! again for the next target.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::Datum;
use crate::embedding::ScoredDatum;
use crate::id::DatumId;
use crate::prompt::{render, Demonstration, PromptError, PromptInput, TaskTemplate};
use crate::seed::derive_seed;
use crate::strategies::{self, StrategyError, StrategyKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CommitteeError {
    #[error("committee of {k} prompts x {m} demonstrations needs {} candidates, only {candidates} available", k * m)]
    CommitteeTooLarge {
        k: usize,
        m: usize,
        candidates: usize,
    },
    #[error("committee size k must be at least 1")]
    EmptyCommittee,
    #[error("no average-similarity score for candidate {0}")]
    MissingScore(DatumId),
    #[error("candidate {0} appears twice")]
    DuplicateCandidate(DatumId),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum PlanVerdict {
    Feasible { slack: usize },
    Infeasible { required: usize, available: usize },
}

impl PlanVerdict {
    pub fn is_feasible(self) -> bool {
        matches!(self, PlanVerdict::Feasible { .. })
    }
}

/// Whether `k` prompts of `m` disjoint demonstrations fit in `n` candidates.
pub fn committee_plan_size(n: usize, k: usize, m: usize) -> PlanVerdict {
    let required = k.saturating_mul(m);
    if required <= n {
        PlanVerdict::Feasible {
            slack: n - required,
        }
    } else {
        PlanVerdict::Infeasible {
            required,
            available: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committee {
    pub target_id: DatumId,
    pub members: Vec<PromptInput>,
    /// Demonstration ids of each member, in draw order.
    pub draw_log: Vec<Vec<DatumId>>,
}

/// Draws the demonstration ids of all `k` members without rendering.
///
/// `scores` lists the candidates in pool order; for random augmentation the
/// score values are ignored.
pub fn plan_draws(
    scores: &[ScoredDatum],
    k: usize,
    m: usize,
    kind: StrategyKind,
    seed: u64,
) -> Result<Vec<Vec<DatumId>>, CommitteeError> {
    if k == 0 {
        return Err(CommitteeError::EmptyCommittee);
    }
    if !committee_plan_size(scores.len(), k, m).is_feasible() {
        return Err(CommitteeError::CommitteeTooLarge {
            k,
            m,
            candidates: scores.len(),
        });
    }
    if m == 0 {
        return Ok(vec![Vec::new(); k]);
    }
    let mut remaining = scores.to_vec();
    let mut draws = Vec::with_capacity(k);
    for round in 0..k {
        let picked = strategies::select(
            kind,
            &remaining,
            m,
            derive_seed(seed, "round", round as u64),
        )?;
        remaining.retain(|s| !picked.contains(&s.id));
        draws.push(picked);
    }
    Ok(draws)
}

pub fn build_committee(
    candidates: &[Demonstration],
    scores: &[ScoredDatum],
    target: &Datum,
    k: usize,
    m: usize,
    kind: StrategyKind,
    seed: u64,
    template: &TaskTemplate,
) -> Result<Committee, CommitteeError> {
    let pool = candidate_scores(candidates, scores, kind)?;
    let draws = plan_draws(&pool, k, m, kind, seed)?;
    render_committee(candidates, &draws, target, template)
}

/// Pairs each candidate with its score, in candidate order. Random
/// augmentation needs no scores and gets zeros.
pub fn candidate_scores(
    candidates: &[Demonstration],
    scores: &[ScoredDatum],
    kind: StrategyKind,
) -> Result<Vec<ScoredDatum>, CommitteeError> {
    let lookup: HashMap<&DatumId, f64> = scores.iter().map(|s| (&s.id, s.score)).collect();
    let mut seen = std::collections::HashSet::new();
    candidates
        .iter()
        .map(|c| {
            if !seen.insert(c.id()) {
                return Err(CommitteeError::DuplicateCandidate(c.id().clone()));
            }
            let score = match (kind.needs_scores(), lookup.get(c.id())) {
                (true, None) => return Err(CommitteeError::MissingScore(c.id().clone())),
                (_, Some(s)) => *s,
                (false, None) => 0.0,
            };
            Ok(ScoredDatum {
                id: c.id().clone(),
                score,
            })
        })
        .collect()
}

/// Renders one prompt per planned draw for `target`.
pub fn render_committee(
    candidates: &[Demonstration],
    draws: &[Vec<DatumId>],
    target: &Datum,
    template: &TaskTemplate,
) -> Result<Committee, CommitteeError> {
    let by_id: HashMap<&DatumId, &Demonstration> = candidates.iter().map(|c| (c.id(), c)).collect();
    let members = draws
        .iter()
        .map(|ids| {
            let demos: Vec<Demonstration> = ids.iter().map(|id| by_id[id].clone()).collect();
            render(template, &demos, target, ids.len())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Committee {
        target_id: target.id.clone(),
        members,
        draw_log: draws.to_vec(),
    })
}
