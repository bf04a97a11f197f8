//! Browser bindings for the strategy explorer, the committee vote simulator
//! and the prompt renderer in `www/`. Every export takes and returns JSON
//! strings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use ics_core::datasets::Datum;
use ics_core::embedding::{score_pool, EmbeddingVector};
use ics_core::llm::{parse_label, ParsedPrediction};
use ics_core::prompt::{default_template, render, Demonstration};
use ics_core::strategies::{rank_by_average_similarity, select, StrategyKind};
use ics_core::voting::majority_vote;
use ics_core::DatumId;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[derive(Debug, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Exploration {
    pub scores: Vec<f64>,
    /// Point indices, most typical first.
    pub ranking: Vec<usize>,
    /// Selected point indices in selection order.
    pub selected: Vec<usize>,
}

/// A point `(x, y)` becomes the vector `(x, y, 1)`, so points near the
/// centroid of the cloud score close to 1.
pub fn explore(
    points: &[Point],
    strategy: StrategyKind,
    n: usize,
    seed: u64,
) -> Result<Exploration, String> {
    let pool = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let v = EmbeddingVector::new(vec![p.x, p.y, 1.0]).map_err(|e| e.to_string())?;
            Ok((DatumId::new(format!("{i:05}")), v))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let scores = score_pool(&pool).map_err(|e| e.to_string())?;
    let index = |id: &DatumId| id.as_str().parse::<usize>().expect("ids are indices");
    let ranking = rank_by_average_similarity(&scores).map_err(|e| e.to_string())?;
    let selected = select(strategy, &scores, n, seed).map_err(|e| e.to_string())?;
    Ok(Exploration {
        scores: scores.iter().map(|s| s.score).collect(),
        ranking: ranking.ids().iter().map(index).collect(),
        selected: selected.iter().map(index).collect(),
    })
}

#[wasm_bindgen]
pub fn explore_strategies(
    points_json: &str,
    strategy: &str,
    n: usize,
    seed: u32,
) -> Result<String, JsValue> {
    let points: Vec<Point> = serde_json::from_str(points_json).map_err(js_err)?;
    let kind: StrategyKind = strategy.parse().map_err(js_err)?;
    let out = explore(&points, kind, n, u64::from(seed)).map_err(js_err)?;
    serde_json::to_string(&out).map_err(js_err)
}

#[derive(Debug, Serialize, PartialEq)]
pub struct CommitteeCurve {
    /// `accuracy[i]` is the voted accuracy of a committee of `i + 1` prompts.
    pub accuracy: Vec<f64>,
    pub ties_broken: Vec<f64>,
}

/// Monte Carlo of majority voting: each prompt is right with probability `p`
/// and otherwise picks one of the other labels uniformly.
pub fn committee_curve(
    p: f64,
    labels: usize,
    max_k: usize,
    targets: usize,
    seed: u64,
) -> Result<CommitteeCurve, String> {
    if !(0.0..=1.0).contains(&p) || labels < 2 || max_k == 0 || targets == 0 {
        return Err("need 0 <= p <= 1, at least 2 labels, k >= 1 and targets >= 1".into());
    }
    let label_set: Vec<String> = (0..labels).map(|i| format!("l{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut correct = vec![0usize; max_k];
    let mut ties = vec![0usize; max_k];
    for _ in 0..targets {
        let gold = rng.gen_range(0..labels);
        let mut votes = Vec::with_capacity(max_k);
        for k in 0..max_k {
            let label = if rng.gen_bool(p) {
                gold
            } else {
                (gold + rng.gen_range(1..labels)) % labels
            };
            votes.push(ParsedPrediction {
                raw_text: String::new(),
                label: Some(label_set[label].clone()),
            });
            let result = majority_vote(&votes, &label_set).map_err(|e| e.to_string())?;
            correct[k] +=
                usize::from(result.final_label.as_deref() == Some(label_set[gold].as_str()));
            ties[k] += usize::from(result.tie_broken);
        }
    }
    let frac = |c: &usize| *c as f64 / targets as f64;
    Ok(CommitteeCurve {
        accuracy: correct.iter().map(frac).collect(),
        ties_broken: ties.iter().map(frac).collect(),
    })
}

#[wasm_bindgen]
pub fn simulate_committee(
    p: f64,
    labels: usize,
    max_k: usize,
    targets: usize,
    seed: u32,
) -> Result<String, JsValue> {
    let curve = committee_curve(p, labels, max_k, targets, u64::from(seed)).map_err(js_err)?;
    serde_json::to_string(&curve).map_err(js_err)
}

#[derive(Debug, Deserialize)]
pub struct PromptRequest {
    pub dataset: String,
    pub demonstrations: Vec<Datum>,
    pub target: Datum,
    /// Optional model output to parse against the target's labels.
    #[serde(default)]
    pub completion: Option<String>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct PromptPreview {
    pub rendered: String,
    pub labels: Vec<String>,
    /// Parsed label; `null` means INVALID.
    pub parsed: Option<String>,
}

pub fn preview(req: PromptRequest) -> Result<PromptPreview, String> {
    let template = default_template(&req.dataset).map_err(|e| e.to_string())?;
    let demos = req
        .demonstrations
        .into_iter()
        .map(Demonstration::new)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let prompt = render(&template, &demos, &req.target, demos.len()).map_err(|e| e.to_string())?;
    let parsed = req
        .completion
        .as_deref()
        .and_then(|c| parse_label(c, &prompt.labels).label);
    Ok(PromptPreview {
        rendered: prompt.rendered,
        labels: prompt.labels,
        parsed,
    })
}

#[wasm_bindgen]
pub fn render_prompt(request_json: &str) -> Result<String, JsValue> {
    let req: PromptRequest = serde_json::from_str(request_json).map_err(js_err)?;
    serde_json::to_string(&preview(req).map_err(js_err)?).map_err(js_err)
}
