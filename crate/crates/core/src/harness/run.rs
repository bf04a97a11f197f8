use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use super::config::{BackendSpec, EmbeddingSpec, ExperimentConfig};
use super::pool::parallel_map;
use super::report::{CellReport, DatumRecord, MemberVote, TrialReport};
use super::HarnessError;
use crate::augment::{candidate_scores, plan_draws};
use crate::datasets::{load_split, subsample_trial, DatasetManifest, Datum, Split, TaskKind};
use crate::embedding::{score_pool, Embedder, EmbeddingCache, HashEmbeddingProvider, ScoredDatum};
use crate::id::DatumId;
use crate::llm::{parse_label, CachedBackend, CompletionBackend, MockBackend, ResponseCache};
use crate::prompt::{render, Demonstration, TaskTemplate};
use crate::seed::derive_seed;
use crate::strategies::{select, select_random, StrategyKind};
use crate::voting::majority_vote;

/// Completion backend and embedder shared by every cell of a run.
pub struct Runtime {
    backend: CachedBackend<Box<dyn CompletionBackend>>,
    embedder: Embedder,
}

impl Runtime {
    pub fn new(
        backend: Box<dyn CompletionBackend>,
        responses: Option<ResponseCache>,
        embedder: Embedder,
    ) -> Self {
        Self {
            backend: CachedBackend::new(backend, responses),
            embedder,
        }
    }

    /// Builds the backend and embedder named in `cfg`. With a `cache_dir`,
    /// completions go to `<cache_dir>/responses/` and embeddings to
    /// `<cache_dir>/embeddings.jsonl`.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let backend: Box<dyn CompletionBackend> = match &cfg.backend {
            BackendSpec::Mock(m) => Box::new(MockBackend::new(m.clone())?),
            #[cfg(feature = "native")]
            BackendSpec::OpenaiCompatible(b) => {
                Box::new(crate::llm::OpenAiChatBackend::new(b.clone())?)
            }
        };
        let provider: Arc<dyn crate::embedding::EmbeddingProvider> = match &cfg.embedding {
            EmbeddingSpec::Hash { dim, seed } => Arc::new(HashEmbeddingProvider::new(*dim, *seed)),
            #[cfg(feature = "native")]
            EmbeddingSpec::OpenaiCompatible(r) => {
                Arc::new(crate::embedding::RemoteEmbeddingProvider::new(r.clone())?)
            }
        };
        let (responses, embeddings) = match &cfg.cache_dir {
            Some(dir) => (
                Some(ResponseCache::open(dir.join("responses"))?),
                EmbeddingCache::open(dir.join("embeddings.jsonl"))?,
            ),
            None => (None, EmbeddingCache::in_memory()),
        };
        Ok(Self::new(
            backend,
            responses,
            Embedder::with_cache(provider, embeddings),
        ))
    }

    /// Completion requests that reached the backend.
    pub fn backend_calls(&self) -> usize {
        self.backend.backend_calls()
    }

    /// Embeddings requested from the provider.
    pub fn embedding_calls(&self) -> usize {
        self.embedder.provider_calls()
    }

    fn scores(&self, data: &[&Datum], workers: usize) -> Result<Vec<ScoredDatum>, HarnessError> {
        let vectors = parallel_map(data, workers, |_, d| self.embedder.embed_text(&d.text()));
        let pool = data
            .iter()
            .zip(vectors)
            .map(|(d, v)| Ok((d.id.clone(), v?)))
            .collect::<Result<Vec<_>, HarnessError>>()?;
        Ok(score_pool(&pool)?)
    }
}

/// Everything a cell reads from disk.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub template: TaskTemplate,
    pub train: Vec<Datum>,
    pub test: Vec<Datum>,
}

fn template_for(manifest: &DatasetManifest) -> TaskTemplate {
    match manifest.task_kind {
        TaskKind::Nli => {
            let labels: Vec<&str> = manifest.label_set.iter().map(String::as_str).collect();
            TaskTemplate::nli(&manifest.dataset_id, &labels)
        }
        TaskKind::MultipleChoiceQa => {
            let mut t = TaskTemplate::qa(&manifest.dataset_id);
            t.label_set = manifest.label_set.clone();
            t
        }
    }
}

/// Resolves the manifest and template named in `cfg` and loads the train and
/// test splits.
pub fn load_experiment_data(cfg: &ExperimentConfig) -> Result<ExperimentData, HarnessError> {
    let manifest = DatasetManifest::resolve(&cfg.dataset, cfg.manifest.as_deref())?;
    manifest.validate()?;
    let template = match (&cfg.template_file, &cfg.template_id) {
        (Some(path), id) => pick_template(path, id.as_deref(), &manifest.dataset_id)?,
        (None, Some(_)) => {
            return Err(HarnessError::ConfigInvalid(
                "template_id needs a template_file".into(),
            ));
        }
        (None, None) => template_for(&manifest),
    };
    if template.task_kind != manifest.task_kind {
        return Err(HarnessError::ConfigInvalid(format!(
            "template {} does not fit the task of {}",
            template.id, manifest.dataset_id
        )));
    }
    Ok(ExperimentData {
        template,
        train: load_split(&manifest, Split::Train, &cfg.data_root)?,
        test: load_split(&manifest, cfg.test_split, &cfg.data_root)?,
    })
}

fn pick_template(
    path: &Path,
    id: Option<&str>,
    dataset: &str,
) -> Result<TaskTemplate, HarnessError> {
    let templates = TaskTemplate::load_file(path)?;
    let found = match id {
        Some(id) => templates.into_iter().find(|t| t.id == id),
        None if templates.len() == 1 => templates.into_iter().next(),
        None => templates.into_iter().find(|t| t.id == dataset),
    };
    found.ok_or_else(|| {
        HarnessError::ConfigInvalid(format!(
            "{}: no template {:?}",
            path.display(),
            id.unwrap_or(dataset)
        ))
    })
}

/// Runs every trial of one cell.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    rt: &Runtime,
) -> Result<CellReport, HarnessError> {
    cfg.validate()?;
    if let Some(d) = data.test.iter().find(|d| d.gold.is_none()) {
        return Err(HarnessError::ConfigInvalid(format!(
            "test datum {} has no gold label",
            d.id
        )));
    }
    let trials = (0..cfg.trials)
        .map(|t| run_trial(cfg, data, rt, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CellReport::completed(cfg, trials))
}

fn trial_splits(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    trial_seed: u64,
) -> Result<(Vec<Datum>, Vec<Datum>), HarnessError> {
    if cfg.trial_train_n.is_none() && cfg.trial_test_n.is_none() {
        return Ok((data.train.clone(), data.test.clone()));
    }
    let (train, test) = subsample_trial(
        &data.train,
        &data.test,
        cfg.trial_train_n.unwrap_or(data.train.len()),
        cfg.trial_test_n.unwrap_or(data.test.len()),
        trial_seed,
    )?;
    Ok((
        if cfg.trial_train_n.is_some() {
            train
        } else {
            data.train.clone()
        },
        if cfg.trial_test_n.is_some() {
            test
        } else {
            data.test.clone()
        },
    ))
}

/// Draws for one target: every committee member's demonstration ids.
enum DrawPlan {
    Shared(Vec<Vec<DatumId>>),
    PerTarget {
        pool: Vec<ScoredDatum>,
        kind: StrategyKind,
    },
    /// One prompt of `m` random training demonstrations.
    Baseline(Vec<DatumId>),
}

fn run_trial(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    rt: &Runtime,
    t: usize,
) -> Result<TrialReport, HarnessError> {
    let started = Instant::now();
    let trial_seed = derive_seed(cfg.master_seed, "trial", t as u64);
    let (train, test) = trial_splits(cfg, data, trial_seed)?;
    let workers = cfg.max_concurrency;

    let (candidates, plan, k) = if cfg.baseline_mode {
        let demos = train
            .iter()
            .cloned()
            .map(Demonstration::new)
            .collect::<Result<Vec<_>, _>>()?;
        let ids = demos.iter().map(|d| d.id().clone()).collect();
        (demos, DrawPlan::Baseline(ids), 1)
    } else {
        let candidate_seed = derive_seed(trial_seed, "candidates", 0);
        let train_scores = if cfg.candidate_strategy.needs_scores() {
            rt.scores(&train.iter().collect::<Vec<_>>(), workers)?
        } else {
            train
                .iter()
                .map(|d| ScoredDatum::new(d.id.clone(), 0.0))
                .collect()
        };
        let picked = select(cfg.candidate_strategy, &train_scores, cfg.n, candidate_seed)?;
        let by_id: HashMap<&DatumId, &Datum> = train.iter().map(|d| (&d.id, d)).collect();
        let demos = picked
            .iter()
            .map(|id| Demonstration::new(by_id[id].clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let aug_scores = if cfg.augment_strategy.needs_scores() {
            rt.scores(
                &demos.iter().map(Demonstration::datum).collect::<Vec<_>>(),
                workers,
            )?
        } else {
            Vec::new()
        };
        let pool = candidate_scores(&demos, &aug_scores, cfg.augment_strategy)?;
        let plan = if cfg.augment_strategy == StrategyKind::Random {
            DrawPlan::PerTarget {
                pool,
                kind: StrategyKind::Random,
            }
        } else {
            let draws = plan_draws(
                &pool,
                cfg.k,
                cfg.m,
                cfg.augment_strategy,
                derive_seed(trial_seed, "augment", 0),
            )?;
            DrawPlan::Shared(draws)
        };
        (demos, plan, cfg.k)
    };

    let by_id: HashMap<&DatumId, &Demonstration> = candidates.iter().map(|d| (d.id(), d)).collect();
    let results = parallel_map(&test, workers, |i, target| {
        let draws = match &plan {
            DrawPlan::Shared(d) => d.clone(),
            DrawPlan::PerTarget { pool, kind } => plan_draws(
                pool,
                k,
                cfg.m,
                *kind,
                derive_seed(trial_seed, "augment", i as u64),
            )?,
            DrawPlan::Baseline(_) if cfg.m == 0 => vec![Vec::new()],
            DrawPlan::Baseline(ids) => vec![select_random(
                ids,
                cfg.m,
                derive_seed(trial_seed, "baseline", i as u64),
            )?],
        };
        evaluate_target(&by_id, &draws, target, &data.template, rt)
    });
    let records = results
        .into_iter()
        .collect::<Result<Vec<_>, HarnessError>>()?;

    let scored = records.iter().filter(|r| !r.errored).count();
    let correct = records.iter().filter(|r| r.correct).count();
    let (mut answered, mut member_correct) = (0usize, 0usize);
    for r in records.iter() {
        for v in r.votes.iter().filter(|v| v.error.is_none()) {
            answered += 1;
            member_correct += usize::from(v.label.as_deref() == Some(r.gold.as_str()));
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(TrialReport {
        trial_index: t,
        accuracy: ratio(correct, scored),
        member_accuracy: ratio(member_correct, answered),
        scored,
        correct,
        errored: records.len() - scored,
        candidate_ids: if cfg.baseline_mode {
            Vec::new()
        } else {
            candidates.iter().map(|d| d.id().clone()).collect()
        },
        records,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}

fn evaluate_target(
    candidates: &HashMap<&DatumId, &Demonstration>,
    draws: &[Vec<DatumId>],
    target: &Datum,
    template: &TaskTemplate,
    rt: &Runtime,
) -> Result<DatumRecord, HarnessError> {
    let members = draws
        .iter()
        .map(|ids| {
            let demos: Vec<Demonstration> = ids.iter().map(|id| candidates[id].clone()).collect();
            render(template, &demos, target, ids.len())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let gold = target.gold.clone().expect("test gold checked up front");
    let votes: Vec<MemberVote> = members
        .iter()
        .map(|p| match rt.backend.complete(p) {
            Ok(text) => {
                let parsed = parse_label(&text, &p.labels);
                MemberVote {
                    demo_ids: p.demo_ids(),
                    raw: Some(text),
                    label: parsed.label,
                    error: None,
                }
            }
            Err(e) => MemberVote {
                demo_ids: p.demo_ids(),
                raw: None,
                label: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let errored = votes.iter().all(|v| v.error.is_some());
    let answered: Vec<_> = votes
        .iter()
        .filter(|v| v.error.is_none())
        .map(|v| crate::llm::ParsedPrediction {
            raw_text: v.raw.clone().unwrap_or_default(),
            label: v.label.clone(),
        })
        .collect();
    let (final_label, tie_broken) = if errored {
        (None, false)
    } else {
        let labels = template.labels_for(target);
        let vote = majority_vote(&answered, &labels)?;
        (vote.final_label, vote.tie_broken)
    };
    Ok(DatumRecord {
        target_id: target.id.clone(),
        correct: !errored && final_label.as_deref() == Some(gold.as_str()),
        gold,
        votes,
        final_label,
        tie_broken,
        errored,
    })
}
