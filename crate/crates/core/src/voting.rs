//! Majority vote over a committee's parsed predictions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::ParsedPrediction;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VoteError {
    #[error("no votes to count")]
    EmptyVotes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteResult {
    /// `None` when every vote was invalid.
    pub final_label: Option<String>,
    pub tally: BTreeMap<String, usize>,
    pub tie_broken: bool,
}

/// Mode of the valid votes. Invalid votes are dropped; ties go to the label
/// listed first in `label_set`, then to the lexicographically smaller label
/// for labels outside the set.
pub fn majority_vote(
    votes: &[ParsedPrediction],
    label_set: &[String],
) -> Result<VoteResult, VoteError> {
    if votes.is_empty() {
        return Err(VoteError::EmptyVotes);
    }
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for label in votes.iter().filter_map(|v| v.label.as_ref()) {
        *tally.entry(label.clone()).or_default() += 1;
    }
    let Some(&best) = tally.values().max() else {
        return Ok(VoteResult {
            final_label: None,
            tally,
            tie_broken: false,
        });
    };
    let mut leaders: Vec<&String> = tally
        .iter()
        .filter(|(_, &c)| c == best)
        .map(|(l, _)| l)
        .collect();
    let rank = |l: &String| label_set.iter().position(|x| x == l).unwrap_or(usize::MAX);
    leaders.sort_by(|a, b| rank(a).cmp(&rank(b)).then_with(|| a.cmp(b)));
    Ok(VoteResult {
        final_label: Some(leaders[0].clone()),
        tie_broken: leaders.len() > 1,
        tally,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels() -> Vec<String> {
        ["e", "n", "c"].iter().map(|s| s.to_string()).collect()
    }

    fn votes(xs: &[Option<&str>]) -> Vec<ParsedPrediction> {
        xs.iter()
            .map(|x| ParsedPrediction {
                raw_text: x.unwrap_or("???").to_owned(),
                label: x.map(str::to_owned),
            })
            .collect()
    }

    #[test]
    fn strict_majority() {
        let r = majority_vote(&votes(&[Some("e"), Some("e"), Some("n")]), &labels()).unwrap();
        assert_eq!(r.final_label.as_deref(), Some("e"));
        assert!(!r.tie_broken);
        assert_eq!(r.tally["e"], 2);
    }

    #[test]
    fn ties_follow_label_set_order() {
        let r = majority_vote(&votes(&[Some("c"), Some("n"), Some("e")]), &labels()).unwrap();
        assert_eq!(r.final_label.as_deref(), Some("e"));
        assert!(r.tie_broken);
        let r = majority_vote(&votes(&[Some("c"), Some("n")]), &labels()).unwrap();
        assert_eq!(r.final_label.as_deref(), Some("n"));
    }

    #[test]
    fn invalid_votes_are_excluded() {
        let r = majority_vote(&votes(&[None, None, Some("c")]), &labels()).unwrap();
        assert_eq!(r.final_label.as_deref(), Some("c"));
        assert_eq!(r.tally.values().sum::<usize>(), 1);
        let r = majority_vote(&votes(&[None, None]), &labels()).unwrap();
        assert_eq!(r.final_label, None);
        assert!(r.tally.is_empty());
        assert_eq!(majority_vote(&[], &labels()), Err(VoteError::EmptyVotes));
    }

    fn vote_list() -> impl Strategy<Value = Vec<Option<&'static str>>> {
        prop::collection::vec(
            prop::option::weighted(0.85, prop::sample::select(vec!["e", "n", "c"])),
            1..20,
        )
    }

    proptest! {
        #[test]
        fn permutation_invariant(v in vote_list(), seed: u64) {
            let mut shuffled = v.clone();
            let len = shuffled.len();
            for i in 0..len {
                let j = (seed.wrapping_mul(i as u64 + 1) % len as u64) as usize;
                shuffled.swap(i, j);
            }
            let a = majority_vote(&votes(&v), &labels()).unwrap();
            let b = majority_vote(&votes(&shuffled), &labels()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn winner_is_maximal_and_monotone(v in vote_list()) {
            let r = majority_vote(&votes(&v), &labels()).unwrap();
            let valid = v.iter().filter(|x| x.is_some()).count();
            prop_assert_eq!(r.tally.values().sum::<usize>(), valid);
            if let Some(w) = r.final_label.clone() {
                prop_assert!(r.tally.values().all(|&c| c <= r.tally[&w]));
                let mut more = v.clone();
                more.push(["e", "n", "c"].into_iter().find(|l| *l == w));
                let r2 = majority_vote(&votes(&more), &labels()).unwrap();
                prop_assert_eq!(r2.final_label, Some(w));
            }
        }
    }
}
