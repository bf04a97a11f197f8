use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::ExperimentConfig;
use crate::id::DatumId;
use crate::strategies::StrategyKind;

pub const REPORT_SCHEMA: &str = "ics-report/1";

/// Share of ERRORED data above which a run is flagged non-comparable.
pub const NON_COMPARABLE_ERRORED_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report has no cells")]
    Empty,
    #[error("report does not match the schema: {0}")]
    Schema(String),
    #[error("report invariant violated in {cell}: {message}")]
    Invariant { cell: String, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_owned(),
        source,
    }
}

/// One committee member's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberVote {
    pub demo_ids: Vec<DatumId>,
    /// Raw completion, absent when the request failed.
    pub raw: Option<String>,
    /// Parsed label; absent for INVALID parses and failed requests.
    pub label: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumRecord {
    pub target_id: DatumId,
    pub gold: String,
    pub votes: Vec<MemberVote>,
    pub final_label: Option<String>,
    pub tie_broken: bool,
    pub correct: bool,
    /// Every committee member failed; excluded from the accuracy denominator.
    pub errored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialReport {
    pub trial_index: usize,
    /// `correct / scored`, 0 when nothing was scored.
    pub accuracy: f64,
    /// Accuracy of individual committee prompts that returned a completion.
    pub member_accuracy: f64,
    pub scored: usize,
    pub correct: usize,
    pub errored: usize,
    pub candidate_ids: Vec<DatumId>,
    pub records: Vec<DatumRecord>,
    /// Wall-clock time; kept out of report.json so it stays reproducible and
    /// written to the run manifest instead.
    #[serde(skip)]
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aggregate {
    pub mean_accuracy: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub std_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub mean_member_accuracy: f64,
    pub scored: usize,
    pub errored: usize,
    pub non_comparable: bool,
}

impl Aggregate {
    pub fn from_trials(trials: &[TrialReport]) -> Option<Self> {
        if trials.is_empty() {
            return None;
        }
        let n = trials.len() as f64;
        let accs: Vec<f64> = trials.iter().map(|t| t.accuracy).collect();
        let mean = accs.iter().sum::<f64>() / n;
        let std = if trials.len() > 1 {
            (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let scored: usize = trials.iter().map(|t| t.scored).sum();
        let errored: usize = trials.iter().map(|t| t.errored).sum();
        let total = scored + errored;
        let min = accs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Self {
            // clamp away rounding drift so the mean stays inside [min, max]
            mean_accuracy: mean.clamp(min, max),
            min_accuracy: min,
            max_accuracy: max,
            std_accuracy: std,
            mean_member_accuracy: trials.iter().map(|t| t.member_accuracy).sum::<f64>() / n,
            scored,
            errored,
            non_comparable: total > 0
                && errored as f64 / total as f64 > NON_COMPARABLE_ERRORED_FRACTION,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case", deny_unknown_fields)]
pub enum CellStatus {
    Completed,
    Skipped { reason: String },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellReport {
    pub label: String,
    pub dataset: String,
    pub candidate_strategy: StrategyKind,
    pub augment_strategy: StrategyKind,
    pub baseline_mode: bool,
    /// Candidate pool size; absent for baseline cells.
    pub n: Option<usize>,
    pub k: usize,
    pub m: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub config_hash: String,
    pub status: CellStatus,
    pub aggregate: Option<Aggregate>,
    pub trial_reports: Vec<TrialReport>,
}

impl CellReport {
    /// Default label: `<dataset>/baseline` or `<dataset>/<cand>+<aug>/n=<n>/k=<k>`.
    pub fn label_for(cfg: &ExperimentConfig) -> String {
        if cfg.baseline_mode {
            format!("{}/baseline", cfg.dataset)
        } else {
            format!(
                "{}/{}+{}/n={}/k={}",
                cfg.dataset, cfg.candidate_strategy, cfg.augment_strategy, cfg.n, cfg.k
            )
        }
    }

    fn shell(cfg: &ExperimentConfig, status: CellStatus) -> Self {
        Self {
            label: Self::label_for(cfg),
            dataset: cfg.dataset.clone(),
            candidate_strategy: cfg.candidate_strategy,
            augment_strategy: cfg.augment_strategy,
            baseline_mode: cfg.baseline_mode,
            n: (!cfg.baseline_mode).then_some(cfg.n),
            k: if cfg.baseline_mode { 1 } else { cfg.k },
            m: cfg.m,
            trials: cfg.trials,
            master_seed: cfg.master_seed,
            config_hash: cfg.config_hash(),
            status,
            aggregate: None,
            trial_reports: Vec::new(),
        }
    }

    pub fn completed(cfg: &ExperimentConfig, trial_reports: Vec<TrialReport>) -> Self {
        let mut cell = Self::shell(cfg, CellStatus::Completed);
        cell.aggregate = Aggregate::from_trials(&trial_reports);
        cell.trial_reports = trial_reports;
        cell
    }

    pub fn skipped(cfg: &ExperimentConfig, reason: String) -> Self {
        Self::shell(cfg, CellStatus::Skipped { reason })
    }

    pub fn failed(cfg: &ExperimentConfig, error: String) -> Self {
        Self::shell(cfg, CellStatus::Failed { error })
    }

    pub fn mean_accuracy(&self) -> Option<f64> {
        self.aggregate.as_ref().map(|a| a.mean_accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSet {
    pub schema: String,
    pub engine_version: String,
    /// Label of the row deltas are measured against. When absent, each row
    /// uses the baseline-mode cell of its own dataset.
    pub baseline_label: Option<String>,
    pub cells: Vec<CellReport>,
}

impl ReportSet {
    pub fn new(cells: Vec<CellReport>) -> Self {
        Self {
            schema: REPORT_SCHEMA.to_owned(),
            engine_version: crate::ENGINE_VERSION.to_owned(),
            baseline_label: None,
            cells,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Improvement of each row over its baseline, in percentage points. Baseline
/// rows themselves and rows without a completed baseline get `None`.
pub fn deltas_vs_baseline(set: &ReportSet) -> Vec<Option<f64>> {
    let named = set
        .baseline_label
        .as_ref()
        .and_then(|l| set.cells.iter().find(|c| &c.label == l));
    set.cells
        .iter()
        .map(|cell| {
            let base = match named {
                Some(b) => b,
                None => set
                    .cells
                    .iter()
                    .find(|c| c.baseline_mode && c.dataset == cell.dataset)?,
            };
            if std::ptr::eq(base, cell) {
                return None;
            }
            Some((cell.mean_accuracy()? - base.mean_accuracy()?) * 100.0)
        })
        .collect()
}

pub const CSV_COLUMNS: [&str; 15] = [
    "label",
    "dataset",
    "candidate_strategy",
    "augment_strategy",
    "baseline_mode",
    "n",
    "k",
    "m",
    "trials",
    "status",
    "mean_accuracy_pct",
    "std_accuracy_pct",
    "delta_vs_baseline_pct",
    "errored",
    "non_comparable",
];

fn pct(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3}")).unwrap_or_default()
}

/// One row per cell, accuracies in percent with three decimals.
pub fn render_csv(set: &ReportSet) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for (cell, delta) in set.cells.iter().zip(deltas_vs_baseline(set)) {
        let agg = cell.aggregate.as_ref();
        let status = match &cell.status {
            CellStatus::Completed => "completed",
            CellStatus::Skipped { .. } => "skipped",
            CellStatus::Failed { .. } => "failed",
        };
        w.write_record([
            cell.label.clone(),
            cell.dataset.clone(),
            cell.candidate_strategy.to_string(),
            cell.augment_strategy.to_string(),
            cell.baseline_mode.to_string(),
            cell.n.map(|n| n.to_string()).unwrap_or_default(),
            cell.k.to_string(),
            cell.m.to_string(),
            cell.trials.to_string(),
            status.to_owned(),
            pct(agg.map(|a| a.mean_accuracy * 100.0)),
            pct(agg.map(|a| a.std_accuracy * 100.0)),
            pct(delta),
            agg.map(|a| a.errored.to_string()).unwrap_or_default(),
            agg.map(|a| a.non_comparable.to_string())
                .unwrap_or_default(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmittedFiles {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

/// Writes `report.csv` and/or `report.json` into `out_dir`.
pub fn emit_report(
    set: &ReportSet,
    out_dir: &Path,
    formats: &[ReportFormat],
) -> Result<EmittedFiles, ReportError> {
    if set.cells.is_empty() {
        return Err(ReportError::Empty);
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut files = EmittedFiles::default();
    for format in formats {
        let (path, body) = match format {
            ReportFormat::Csv => (out_dir.join("report.csv"), render_csv(set)?),
            ReportFormat::Json => (out_dir.join("report.json"), set.to_json()),
        };
        fs::write(&path, body).map_err(io_err(&path))?;
        match format {
            ReportFormat::Csv => files.csv = Some(path),
            ReportFormat::Json => files.json = Some(path),
        }
    }
    Ok(files)
}

/// Parses report.json and checks its invariants.
pub fn validate_report_json(text: &str) -> Result<ReportSet, ReportError> {
    let set: ReportSet =
        serde_json::from_str(text).map_err(|e| ReportError::Schema(e.to_string()))?;
    if set.schema != REPORT_SCHEMA {
        return Err(ReportError::Schema(format!(
            "unsupported schema {:?}",
            set.schema
        )));
    }
    if set.cells.is_empty() {
        return Err(ReportError::Empty);
    }
    for cell in &set.cells {
        let bad = |message: String| ReportError::Invariant {
            cell: cell.label.clone(),
            message,
        };
        match (&cell.status, &cell.aggregate) {
            (CellStatus::Completed, None) => {
                return Err(bad("completed cell without aggregate".into()))
            }
            (CellStatus::Skipped { .. } | CellStatus::Failed { .. }, Some(_)) => {
                return Err(bad("aggregate on a cell that did not complete".into()))
            }
            _ => {}
        }
        if cell.trial_reports.len() != cell.trials && cell.status == CellStatus::Completed {
            return Err(bad(format!(
                "{} trial reports for {} trials",
                cell.trial_reports.len(),
                cell.trials
            )));
        }
        for t in &cell.trial_reports {
            if !(0.0..=1.0).contains(&t.accuracy) {
                return Err(bad(format!(
                    "trial {} accuracy {} outside [0, 1]",
                    t.trial_index, t.accuracy
                )));
            }
            if t.scored + t.errored != t.records.len() {
                return Err(bad(format!(
                    "trial {} record count mismatch",
                    t.trial_index
                )));
            }
            let correct = t.records.iter().filter(|r| r.correct && !r.errored).count();
            let expected = if t.scored == 0 {
                0.0
            } else {
                correct as f64 / t.scored as f64
            };
            if correct != t.correct || (expected - t.accuracy).abs() > 1e-12 {
                return Err(bad(format!(
                    "trial {} accuracy disagrees with its records",
                    t.trial_index
                )));
            }
            if let Some(r) = t
                .records
                .iter()
                .find(|r| r.correct && r.final_label.as_deref() != Some(&r.gold))
            {
                return Err(bad(format!(
                    "record {} counted correct with a different label",
                    r.target_id
                )));
            }
        }
        if let Some(a) = &cell.aggregate {
            if !(a.min_accuracy <= a.mean_accuracy && a.mean_accuracy <= a.max_accuracy) {
                return Err(bad("mean accuracy outside [min, max]".into()));
            }
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub label: String,
    pub trial_elapsed_secs: Vec<f64>,
}

/// Per-run metadata that is allowed to differ between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub engine_version: String,
    pub command: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub started_unix_secs: u64,
    pub elapsed_secs: f64,
    pub backend_calls: usize,
    pub embedding_calls: usize,
    pub cells: Vec<CellTiming>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, set: &ReportSet) -> Self {
        Self {
            engine_version: crate::ENGINE_VERSION.to_owned(),
            command: command.to_owned(),
            config_hash: cfg.config_hash(),
            master_seed: cfg.master_seed,
            started_unix_secs: 0,
            elapsed_secs: 0.0,
            backend_calls: 0,
            embedding_calls: 0,
            cells: set
                .cells
                .iter()
                .map(|c| CellTiming {
                    label: c.label.clone(),
                    trial_elapsed_secs: c.trial_reports.iter().map(|t| t.elapsed_secs).collect(),
                })
                .collect(),
        }
    }
}

pub fn write_run_manifest(manifest: &RunManifest, out_dir: &Path) -> Result<PathBuf, ReportError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join("manifest.json");
    let body = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
    fs::write(&path, body).map_err(io_err(&path))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(i: usize, correct: usize, scored: usize) -> TrialReport {
        let records = (0..scored)
            .map(|j| DatumRecord {
                target_id: DatumId::new(format!("t{j}")),
                gold: "a".into(),
                votes: Vec::new(),
                final_label: Some(if j < correct { "a" } else { "b" }.into()),
                tie_broken: false,
                correct: j < correct,
                errored: false,
            })
            .collect();
        TrialReport {
            trial_index: i,
            accuracy: correct as f64 / scored as f64,
            member_accuracy: 0.5,
            scored,
            correct,
            errored: 0,
            candidate_ids: Vec::new(),
            records,
            elapsed_secs: 1.5,
        }
    }

    fn cell(label: &str, baseline: bool, trials: Vec<TrialReport>) -> CellReport {
        let mut cfg =
            ExperimentConfig::mock("esnli", StrategyKind::Random, StrategyKind::Random, 10, 3);
        cfg.baseline_mode = baseline;
        cfg.trials = trials.len();
        let mut c = CellReport::completed(&cfg, trials);
        c.label = label.into();
        c
    }

    #[test]
    fn aggregate_statistics() {
        let a = Aggregate::from_trials(&[trial(0, 3, 4), trial(1, 1, 4)]).unwrap();
        assert_eq!(a.mean_accuracy, 0.5);
        assert!((a.std_accuracy - (0.125f64).sqrt()).abs() < 1e-12);
        assert_eq!((a.min_accuracy, a.max_accuracy), (0.25, 0.75));
        let one = Aggregate::from_trials(&[trial(0, 3, 4)]).unwrap();
        assert_eq!((one.mean_accuracy, one.std_accuracy), (0.75, 0.0));
    }

    #[test]
    fn two_cells_give_header_and_two_rows() {
        let set = ReportSet::new(vec![
            cell("base", true, vec![trial(0, 1, 2)]),
            cell("rr", false, vec![trial(0, 2, 2)]),
        ]);
        let csv = render_csv(&set).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_COLUMNS.join(","));
        assert!(lines[2].contains(",100.000,0.000,50.000,"), "{}", lines[2]);
        assert!(lines[1].contains(",50.000,0.000,,"), "{}", lines[1]);
    }

    #[test]
    fn json_round_trips_through_validator() {
        let set = ReportSet::new(vec![cell(
            "rr",
            false,
            vec![trial(0, 2, 3), trial(1, 1, 3)],
        )]);
        let back = validate_report_json(&set.to_json()).unwrap();
        // elapsed time is not part of report.json
        assert_eq!(back.cells[0].trial_reports[0].elapsed_secs, 0.0);
        assert_eq!(back.to_json(), set.to_json());
    }

    #[test]
    fn validator_rejects_broken_reports() {
        let mut set = ReportSet::new(vec![cell("rr", false, vec![trial(0, 2, 3)])]);
        set.cells[0].trial_reports[0].accuracy = 0.9;
        assert!(matches!(
            validate_report_json(&set.to_json()),
            Err(ReportError::Invariant { .. })
        ));
        let text = ReportSet::new(vec![cell("rr", false, vec![trial(0, 2, 3)])])
            .to_json()
            .replacen("\"label\"", "\"extra\": 1,\n  \"label\"", 1);
        assert!(matches!(
            validate_report_json(&text),
            Err(ReportError::Schema(_))
        ));
        assert!(matches!(
            validate_report_json(&ReportSet::new(vec![]).to_json()),
            Err(ReportError::Empty)
        ));
    }

    #[test]
    fn named_baseline_wins() {
        let mut set = ReportSet::new(vec![
            cell("a", false, vec![trial(0, 3, 4)]),
            cell("b", false, vec![trial(0, 1, 4)]),
        ]);
        assert_eq!(deltas_vs_baseline(&set), [None, None]);
        set.baseline_label = Some("b".into());
        assert_eq!(deltas_vs_baseline(&set), [Some(50.0), None]);
    }

    #[test]
    fn emit_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let set = ReportSet::new(vec![cell("rr", false, vec![trial(0, 2, 3)])]);
        let files =
            emit_report(&set, dir.path(), &[ReportFormat::Csv, ReportFormat::Json]).unwrap();
        assert!(files.csv.unwrap().exists());
        assert!(files.json.unwrap().exists());
        assert!(matches!(
            emit_report(&ReportSet::new(vec![]), dir.path(), &[ReportFormat::Csv]),
            Err(ReportError::Empty)
        ));
    }
}
