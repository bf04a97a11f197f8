use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::augment::committee_plan_size;
#[cfg(feature = "native")]
use crate::embedding::RemoteEmbeddingConfig;
#[cfg(feature = "native")]
use crate::llm::BackendConfig;
use crate::llm::MockBackendConfig;
use crate::seed::sha256_hex;
use crate::strategies::StrategyKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendSpec {
    Mock(MockBackendConfig),
    #[cfg(feature = "native")]
    OpenaiCompatible(BackendConfig),
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Mock(MockBackendConfig::new(0.7, 0.0, 0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbeddingSpec {
    Hash {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    #[cfg(feature = "native")]
    OpenaiCompatible(RemoteEmbeddingConfig),
}

fn default_dim() -> usize {
    crate::embedding::HashEmbeddingProvider::DEFAULT_DIM
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec::Hash {
            dim: default_dim(),
            seed: 0,
        }
    }
}

fn default_m() -> usize {
    3
}
fn default_trials() -> usize {
    10
}
fn default_concurrency() -> usize {
    1
}
fn default_data_root() -> PathBuf {
    PathBuf::from("data")
}
fn default_test_split() -> crate::datasets::Split {
    crate::datasets::Split::Test
}

/// One benchmark cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: String,
    #[serde(default = "default_data_root")]
    pub data_root: PathBuf,
    /// TOML dataset manifest; the built-in catalog is used when absent.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    /// TOML template file and the template to pick from it.
    #[serde(default)]
    pub template_file: Option<PathBuf>,
    #[serde(default)]
    pub template_id: Option<String>,
    #[serde(default = "default_test_split")]
    pub test_split: crate::datasets::Split,
    pub candidate_strategy: StrategyKind,
    pub augment_strategy: StrategyKind,
    /// Candidate pool size.
    pub n: usize,
    /// Committee size.
    pub k: usize,
    /// Demonstrations per prompt.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub trial_train_n: Option<usize>,
    #[serde(default)]
    pub trial_test_n: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    /// One prompt with `m` random training demonstrations per target.
    #[serde(default)]
    pub baseline_mode: bool,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendSpec,
    #[serde(default)]
    pub embedding: EmbeddingSpec,
}

impl ExperimentConfig {
    /// A mock-backend config with the usual defaults, handy for tests.
    pub fn mock(
        dataset: &str,
        candidate: StrategyKind,
        augment: StrategyKind,
        n: usize,
        k: usize,
    ) -> Self {
        Self {
            dataset: dataset.to_owned(),
            data_root: default_data_root(),
            manifest: None,
            template_file: None,
            template_id: None,
            test_split: default_test_split(),
            candidate_strategy: candidate,
            augment_strategy: augment,
            n,
            k,
            m: default_m(),
            trials: default_trials(),
            trial_train_n: None,
            trial_test_n: None,
            master_seed: 0,
            baseline_mode: false,
            max_concurrency: 1,
            cache_dir: None,
            backend: BackendSpec::default(),
            embedding: EmbeddingSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |msg: &str| Err(HarnessError::ConfigInvalid(msg.to_owned()));
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if self.max_concurrency == 0 {
            return invalid("max_concurrency must be at least 1");
        }
        if !self.baseline_mode {
            if self.k == 0 || self.n == 0 {
                return invalid("n and k must be positive");
            }
            if !committee_plan_size(self.n, self.k, self.m).is_feasible() {
                return Err(HarnessError::ConfigInvalid(format!(
                    "k*m = {} exceeds candidate pool n = {}",
                    self.k * self.m,
                    self.n
                )));
            }
        }
        match &self.backend {
            BackendSpec::Mock(m) => m.validate()?,
            #[cfg(feature = "native")]
            BackendSpec::OpenaiCompatible(b) => b.validate()?,
        }
        if let EmbeddingSpec::Hash { dim: 0, .. } = self.embedding {
            return invalid("embedding dim must be positive");
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form.
    pub fn config_hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }
}

/// Strategy combinations of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyMatrix {
    /// Each data-based strategy in both positions, in the candidate position
    /// only and in the augmentation position only, then random/random:
    /// ten rows, plus the baseline when requested.
    StrategyComparison,
}

impl StrategyMatrix {
    pub fn pairs(self) -> Vec<(StrategyKind, StrategyKind)> {
        use StrategyKind::*;
        let mut pairs = Vec::new();
        for s in [Diversity, Similarity, Hybrid] {
            pairs.push((s, s));
            pairs.push((s, Random));
            pairs.push((Random, s));
        }
        pairs.push((Random, Random));
        pairs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Candidate pool sizes; defaults to the config's `n`.
    #[serde(default)]
    pub n: Vec<usize>,
    /// Committee sizes; defaults to the config's `k`.
    #[serde(default)]
    pub k: Vec<usize>,
    /// Explicit `[candidate, augment]` pairs.
    #[serde(default)]
    pub strategies: Vec<(StrategyKind, StrategyKind)>,
    #[serde(default)]
    pub matrix: Option<StrategyMatrix>,
    #[serde(default)]
    pub include_baseline: bool,
}

impl GridSpec {
    /// Strategy pairs: the matrix rows first, then explicit pairs; the base
    /// config's pair when neither is given.
    pub fn strategy_pairs(&self, base: &ExperimentConfig) -> Vec<(StrategyKind, StrategyKind)> {
        let mut pairs = self.matrix.map(StrategyMatrix::pairs).unwrap_or_default();
        pairs.extend(self.strategies.iter().copied());
        if pairs.is_empty() {
            pairs.push((base.candidate_strategy, base.augment_strategy));
        }
        pairs
    }
}

/// A config file: experiment fields at the top level and an optional
/// `[grid]` table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub experiment: ExperimentConfig,
    pub grid: Option<GridSpec>,
}

impl ConfigFile {
    pub fn from_toml_value(value: toml::Value) -> Result<Self, HarnessError> {
        let grid = value.get("grid").cloned();
        let mut table = value;
        if let Some(t) = table.as_table_mut() {
            t.remove("grid");
        }
        let experiment: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::ConfigInvalid(e.to_string()))?;
        let grid = grid
            .map(|g| g.try_into())
            .transpose()
            .map_err(|e: toml::de::Error| HarnessError::ConfigInvalid(format!("[grid]: {e}")))?;
        Ok(Self { experiment, grid })
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let value: toml::Value =
            toml::from_str(text).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        Self::from_toml_value(value)
    }

    /// Reads `path`, applies dotted-key overrides and resolves relative paths
    /// against the config file's directory.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let mut value: toml::Value =
            toml::from_str(&text).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        for (key, raw) in overrides {
            apply_override(&mut value, key, raw)?;
        }
        let mut file = Self::from_toml_value(value)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let exp = &mut file.experiment;
        for p in [
            Some(&mut exp.data_root),
            exp.manifest.as_mut(),
            exp.template_file.as_mut(),
            exp.cache_dir.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(file)
    }
}

/// Parses an override value as a TOML literal (number, bool, array, ...),
/// falling back to a plain string.
fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

/// Sets `dotted.key` inside `root`, creating intermediate tables. Setting
/// `backend.kind` (or `embedding.kind`) to a different kind starts that table
/// afresh.
pub fn apply_override(root: &mut toml::Value, dotted: &str, raw: &str) -> Result<(), HarnessError> {
    let parts: Vec<String> = dotted.split('.').map(|p| p.replace('-', "_")).collect();
    if parts.iter().any(String::is_empty) {
        return Err(HarnessError::ConfigInvalid(format!(
            "bad override key {dotted:?}"
        )));
    }
    let value = parse_override_value(raw);
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| {
            HarnessError::ConfigInvalid(format!("{dotted}: {part} is not a table"))
        })?;
        node = table
            .entry(part.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| HarnessError::ConfigInvalid(format!("{dotted}: parent is not a table")))?;
    let last = parts.last().expect("non-empty").clone();
    if last == "kind" && table.get("kind") != Some(&value) {
        table.clear();
        if value.as_str() == Some("mock") {
            table.insert("base_accuracy".into(), toml::Value::Float(0.7));
        }
    }
    table.insert(last, value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
dataset = "esnli"
candidate_strategy = "similarity"
augment_strategy = "random"
n = 100
k = 10

[backend]
kind = "mock"
base_accuracy = 0.6
demo_quality_weight = 0.2
seed = 3
"#;

    #[test]
    fn parses_with_defaults() {
        let f = ConfigFile::parse(BASE).unwrap();
        let e = &f.experiment;
        assert_eq!(e.m, 3);
        assert_eq!(e.trials, 10);
        assert_eq!(e.candidate_strategy, StrategyKind::Similarity);
        assert!(
            matches!(&e.backend, BackendSpec::Mock(m) if m.base_accuracy == 0.6 && m.seed == 3)
        );
        assert_eq!(e.embedding, EmbeddingSpec::default());
        assert!(f.grid.is_none());
        e.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ConfigFile::parse(&format!("{BASE}\nbogus = 1")).is_err());
        assert!(ConfigFile::parse(&BASE.replace("seed = 3", "seed = 3\nfoo = 2")).is_err());
    }

    #[test]
    fn grid_table() {
        let f = ConfigFile::parse(&format!(
            "{BASE}\n[grid]\nn = [50, 100]\nk = [3, 5, 10, 20]\nmatrix = \"strategy-comparison\"\ninclude_baseline = true\n"
        ))
        .unwrap();
        let g = f.grid.unwrap();
        assert_eq!(g.k, [3, 5, 10, 20]);
        assert_eq!(g.strategy_pairs(&f.experiment).len(), 10);
    }

    #[test]
    fn validation_catches_infeasible_committees() {
        let mut e = ConfigFile::parse(BASE).unwrap().experiment;
        e.n = 50;
        e.k = 20;
        assert!(matches!(e.validate(), Err(HarnessError::ConfigInvalid(_))));
        e.baseline_mode = true;
        assert!(e.validate().is_ok());
        e.trials = 0;
        assert!(e.validate().is_err());
    }

    #[test]
    fn overrides_use_dotted_names() {
        let mut v: toml::Value = toml::from_str(BASE).unwrap();
        apply_override(&mut v, "n", "50").unwrap();
        apply_override(&mut v, "backend.demo_quality_weight", "0.5").unwrap();
        apply_override(&mut v, "trial-test-n", "20").unwrap();
        apply_override(&mut v, "grid.k", "[3, 5]").unwrap();
        apply_override(&mut v, "dataset", "anli").unwrap();
        let f = ConfigFile::from_toml_value(v).unwrap();
        assert_eq!(f.experiment.n, 50);
        assert_eq!(f.experiment.trial_test_n, Some(20));
        assert_eq!(f.experiment.dataset, "anli");
        assert!(
            matches!(&f.experiment.backend, BackendSpec::Mock(m) if m.demo_quality_weight == 0.5)
        );
        assert_eq!(f.grid.unwrap().k, [3, 5]);
    }

    #[test]
    fn switching_backend_kind_resets_table() {
        let mut v: toml::Value = toml::from_str(BASE).unwrap();
        apply_override(&mut v, "backend.kind", "openai-compatible").unwrap();
        apply_override(&mut v, "backend.base_url", "http://localhost:8000").unwrap();
        apply_override(&mut v, "backend.model_name", "mistral").unwrap();
        let f = ConfigFile::from_toml_value(v).unwrap();
        match f.experiment.backend {
            BackendSpec::OpenaiCompatible(b) => {
                assert_eq!(b.model_name, "mistral");
                assert_eq!(b.max_tokens, 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = ConfigFile::parse(BASE).unwrap().experiment;
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.master_seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
