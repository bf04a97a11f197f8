//! Benchmark datasets: canonical JSONL schema, manifests and trial subsampling.
//!
//! NLI lines are `{"id", "premise", "hypothesis", "label"}` and QA lines are
//! `{"id", "question", "choices": [..], "answer"}` where `answer` is a choice
//! letter (`A`, `B`, ...). Labels are normalized to lowercase. `label` and
//! `answer` may be omitted for unlabeled data.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::id::DatumId;
use crate::seed::derive_seed;

pub const NLI_LABELS: [&str; 3] = ["entailment", "neutral", "contradiction"];
const MAX_CHOICES: usize = 26;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    SchemaViolation {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: expected {expected} rows, found {actual}")]
    CountMismatch {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("dataset {dataset} has no {split} split")]
    MissingSplit { dataset: String, split: Split },
    #[error("sample size {n} exceeds available {available}")]
    SampleTooLarge { n: usize, available: usize },
    #[error("invalid manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Nli,
    MultipleChoiceQa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatumContent {
    Nli {
        premise: String,
        hypothesis: String,
    },
    Qa {
        question: String,
        choices: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Datum {
    pub id: DatumId,
    pub content: DatumContent,
    pub gold: Option<String>,
}

/// Lowercase letter label for choice `index` (0 -> "a").
pub fn choice_letter(index: usize) -> String {
    char::from(b'a' + index as u8).to_string()
}

impl Datum {
    pub fn nli(id: &str, premise: &str, hypothesis: &str, gold: Option<&str>) -> Self {
        Self {
            id: DatumId::from(id),
            content: DatumContent::Nli {
                premise: premise.to_owned(),
                hypothesis: hypothesis.to_owned(),
            },
            gold: gold.map(|g| g.to_lowercase()),
        }
    }

    pub fn qa(id: &str, question: &str, choices: &[&str], gold: Option<&str>) -> Self {
        Self {
            id: DatumId::from(id),
            content: DatumContent::Qa {
                question: question.to_owned(),
                choices: choices.iter().map(|c| (*c).to_owned()).collect(),
            },
            gold: gold.map(|g| g.to_lowercase()),
        }
    }

    pub fn task_kind(&self) -> TaskKind {
        match self.content {
            DatumContent::Nli { .. } => TaskKind::Nli,
            DatumContent::Qa { .. } => TaskKind::MultipleChoiceQa,
        }
    }

    /// Text used for embedding: fields joined by single newlines.
    pub fn text(&self) -> String {
        match &self.content {
            DatumContent::Nli {
                premise,
                hypothesis,
            } => format!("{premise}\n{hypothesis}"),
            DatumContent::Qa { question, choices } => {
                let mut s = question.clone();
                for c in choices {
                    s.push('\n');
                    s.push_str(c);
                }
                s
            }
        }
    }

    /// Named field lookup for prompt templates. `choices` renders one
    /// `A) text` line per choice.
    pub fn field(&self, name: &str) -> Option<String> {
        match (&self.content, name) {
            (_, "id") => Some(self.id.to_string()),
            (DatumContent::Nli { premise, .. }, "premise") => Some(premise.clone()),
            (DatumContent::Nli { hypothesis, .. }, "hypothesis") => Some(hypothesis.clone()),
            (DatumContent::Qa { question, .. }, "question") => Some(question.clone()),
            (DatumContent::Qa { choices, .. }, "choices") => Some(
                choices
                    .iter()
                    .enumerate()
                    .map(|(i, c)| format!("{}) {c}", choice_letter(i).to_uppercase()))
                    .collect::<Vec<_>>()
                    .join("\n"),
            ),
            _ => None,
        }
    }

    /// Per-datum label set for QA (choice letters); `None` for NLI.
    pub fn choice_labels(&self) -> Option<Vec<String>> {
        match &self.content {
            DatumContent::Qa { choices, .. } => {
                Some((0..choices.len()).map(choice_letter).collect())
            }
            DatumContent::Nli { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub path: PathBuf,
    /// Expected row count after label filtering; checked when present.
    #[serde(default)]
    pub size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub task_kind: TaskKind,
    pub label_set: Vec<String>,
    /// Rows carrying one of these labels are skipped while loading.
    #[serde(default)]
    pub drop_labels: Vec<String>,
    pub splits: BTreeMap<Split, SplitSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    #[serde(rename = "dataset")]
    datasets: Vec<DatasetManifest>,
}

fn normalize_dataset_name(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase()
}

impl DatasetManifest {
    /// Catalog entry for the five benchmark datasets, with split sizes of the
    /// public releases and paths `<id>/<split>.jsonl`.
    pub fn builtin(name: &str) -> Result<Self, DatasetError> {
        let nli: Vec<String> = NLI_LABELS.iter().map(|s| s.to_string()).collect();
        let (id, kind, labels, drop, sizes): (
            &str,
            TaskKind,
            Vec<String>,
            Vec<String>,
            [usize; 3],
        ) = match normalize_dataset_name(name).as_str() {
            "esnli" => ("esnli", TaskKind::Nli, nli, vec![], [549_367, 9_842, 9_824]),
            "multinli" | "mnli" => (
                "multinli",
                TaskKind::Nli,
                nli,
                vec![],
                [392_702, 9_815, 9_832],
            ),
            "anli" => ("anli", TaskKind::Nli, nli, vec![], [16_946, 1_000, 1_000]),
            "contractnli" => (
                "contract-nli",
                TaskKind::Nli,
                vec!["entailment".into(), "contradiction".into()],
                vec!["neutral".into()],
                [3_999, 555, 1_113],
            ),
            "cqa" | "commonsenseqa" => (
                "cqa",
                TaskKind::MultipleChoiceQa,
                (0..5).map(choice_letter).collect(),
                vec![],
                [9_741, 1_221, 1_140],
            ),
            _ => return Err(DatasetError::UnknownDataset(name.to_owned())),
        };
        let splits = [Split::Train, Split::Validation, Split::Test]
            .into_iter()
            .zip(sizes)
            .map(|(split, size)| {
                (
                    split,
                    SplitSpec {
                        path: PathBuf::from(format!("{id}/{split}.jsonl")),
                        size: Some(size),
                    },
                )
            })
            .collect();
        Ok(Self {
            dataset_id: id.to_owned(),
            task_kind: kind,
            label_set: labels,
            drop_labels: drop,
            splits,
        })
    }

    /// Reads every `[[dataset]]` table of a TOML manifest file.
    pub fn load_all(path: &Path) -> Result<Vec<Self>, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_owned(),
            source,
        })?;
        let file: ManifestFile =
            toml::from_str(&text).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        for m in &file.datasets {
            m.validate()?;
        }
        Ok(file.datasets)
    }

    /// Finds `name` in a manifest file, falling back to the built-in catalog.
    pub fn resolve(name: &str, manifest_path: Option<&Path>) -> Result<Self, DatasetError> {
        if let Some(path) = manifest_path {
            let wanted = normalize_dataset_name(name);
            if let Some(m) = Self::load_all(path)?
                .into_iter()
                .find(|m| normalize_dataset_name(&m.dataset_id) == wanted)
            {
                return Ok(m);
            }
        }
        Self::builtin(name)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.label_set.is_empty() {
            return Err(DatasetError::Manifest(format!(
                "{}: empty label_set",
                self.dataset_id
            )));
        }
        let unique: HashSet<&String> = self.label_set.iter().collect();
        if unique.len() != self.label_set.len() {
            return Err(DatasetError::Manifest(format!(
                "{}: duplicate labels",
                self.dataset_id
            )));
        }
        if self.label_set.iter().any(|l| *l != l.to_lowercase()) {
            return Err(DatasetError::Manifest(format!(
                "{}: labels must be lowercase",
                self.dataset_id
            )));
        }
        if self.splits.values().any(|s| s.size == Some(0)) {
            return Err(DatasetError::Manifest(format!(
                "{}: split sizes must be positive",
                self.dataset_id
            )));
        }
        Ok(())
    }

    pub fn split_path(&self, split: Split, data_root: &Path) -> Result<PathBuf, DatasetError> {
        let spec = self
            .splits
            .get(&split)
            .ok_or_else(|| DatasetError::MissingSplit {
                dataset: self.dataset_id.clone(),
                split,
            })?;
        Ok(data_root.join(&spec.path))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Text(String),
    Number(i64),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNli {
    id: RawId,
    premise: String,
    hypothesis: String,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQa {
    id: RawId,
    question: String,
    choices: Vec<String>,
    #[serde(default)]
    answer: Option<String>,
}

impl From<RawId> for DatumId {
    fn from(raw: RawId) -> Self {
        match raw {
            RawId::Text(s) => DatumId::new(s),
            RawId::Number(n) => DatumId::new(n.to_string()),
        }
    }
}

/// Parses one JSONL line. `Ok(None)` means the row carries a dropped label.
fn parse_line(line: &str, manifest: &DatasetManifest) -> Result<Option<Datum>, String> {
    let datum = match manifest.task_kind {
        TaskKind::Nli => {
            let raw: RawNli = serde_json::from_str(line).map_err(|e| e.to_string())?;
            if raw.premise.trim().is_empty() || raw.hypothesis.trim().is_empty() {
                return Err("premise and hypothesis must be non-empty".into());
            }
            Datum {
                id: raw.id.into(),
                content: DatumContent::Nli {
                    premise: raw.premise,
                    hypothesis: raw.hypothesis,
                },
                gold: raw.label.map(|l| l.trim().to_lowercase()),
            }
        }
        TaskKind::MultipleChoiceQa => {
            let raw: RawQa = serde_json::from_str(line).map_err(|e| e.to_string())?;
            if raw.question.trim().is_empty() {
                return Err("question must be non-empty".into());
            }
            if raw.choices.len() < 2 || raw.choices.len() > MAX_CHOICES {
                return Err(format!(
                    "expected 2..={MAX_CHOICES} choices, got {}",
                    raw.choices.len()
                ));
            }
            let gold = raw.answer.map(|a| a.trim().to_lowercase());
            if let Some(g) = &gold {
                let letters: Vec<String> = (0..raw.choices.len()).map(choice_letter).collect();
                if !letters.contains(g) {
                    return Err(format!("answer {g:?} is not one of the choice letters"));
                }
            }
            Datum {
                id: raw.id.into(),
                content: DatumContent::Qa {
                    question: raw.question,
                    choices: raw.choices,
                },
                gold,
            }
        }
    };
    if let Some(g) = &datum.gold {
        if manifest.drop_labels.contains(g) {
            return Ok(None);
        }
        if !manifest.label_set.contains(g) {
            return Err(format!(
                "label {g:?} not in label set {:?}",
                manifest.label_set
            ));
        }
    }
    Ok(Some(datum))
}

/// Loads and validates a JSONL file against `manifest` without any count check.
pub fn load_jsonl(path: &Path, manifest: &DatasetManifest) -> Result<Vec<Datum>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut data = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let violation = |message: String| DatasetError::SchemaViolation {
            path: path.to_owned(),
            line: line_no,
            message,
        };
        if let Some(datum) = parse_line(&line, manifest).map_err(violation)? {
            if !seen.insert(datum.id.clone()) {
                return Err(violation(format!("duplicate id {:?}", datum.id.as_str())));
            }
            data.push(datum);
        }
    }
    Ok(data)
}

/// Loads one split relative to `data_root`, checking the declared row count.
pub fn load_split(
    manifest: &DatasetManifest,
    split: Split,
    data_root: &Path,
) -> Result<Vec<Datum>, DatasetError> {
    let path = manifest.split_path(split, data_root)?;
    let data = load_jsonl(&path, manifest)?;
    if let Some(expected) = manifest.splits[&split].size {
        if expected != data.len() {
            return Err(DatasetError::CountMismatch {
                path,
                expected,
                actual: data.len(),
            });
        }
    }
    Ok(data)
}

fn sample(data: &[Datum], n: usize, seed: u64) -> Result<Vec<Datum>, DatasetError> {
    if n > data.len() {
        return Err(DatasetError::SampleTooLarge {
            n,
            available: data.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, data.len(), n)
        .into_iter()
        .map(|i| data[i].clone())
        .collect())
}

/// Seeded uniform subsample without replacement of both splits.
pub fn subsample_trial(
    train: &[Datum],
    test: &[Datum],
    train_n: usize,
    test_n: usize,
    seed: u64,
) -> Result<(Vec<Datum>, Vec<Datum>), DatasetError> {
    Ok((
        sample(train, train_n, derive_seed(seed, "subsample-train", 0))?,
        sample(test, test_n, derive_seed(seed, "subsample-test", 0))?,
    ))
}
