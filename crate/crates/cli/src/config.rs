//! Pipeline configuration: one JSON file, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vulnlab_core::classifier::Hyperparameters;
use vulnlab_core::embeddings::EmbeddingSettings;
use vulnlab_core::evaluator::{Protocol, ReportFormat, SweepGrid};
use vulnlab_core::seed::derive_seed;

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    #[default]
    Fixture,
    Live,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: SweepGrid,
    /// Providers to compare; empty means just the configured provider.
    pub providers: Vec<String>,
    pub protocol: Protocol,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Keyword table JSON; the built-in table when absent.
    pub keyword_table_path: Option<PathBuf>,
    pub source: SourceKind,
    pub fixture_dir: Option<PathBuf>,
    pub commits_path: PathBuf,
    pub dataset_path: PathBuf,
    pub corpus_path: PathBuf,
    pub provider: String,
    /// Trained embedding models are stored here as `<provider>.embedding.json`.
    pub embedding_dir: PathBuf,
    /// Vector file backing the `external` provider.
    pub vector_file_path: Option<PathBuf>,
    pub model_path: PathBuf,
    pub report_path: PathBuf,
    pub embedding: EmbeddingSettings,
    pub hyper: Hyperparameters,
    pub context_radius: usize,
    /// Maximum number of commits `mine` accepts.
    pub limit: Option<usize>,
    /// Train/validation/test ratios.
    pub split: [f64; 3],
    /// When set, `evaluate` runs k-fold cross-validation instead of scoring
    /// the trained model on the held-out split.
    pub kfold: Option<usize>,
    /// Fail on snippets that do not lex instead of emitting error tokens.
    pub strict_lexing: bool,
    pub sweep: SweepConfig,
    pub format: ReportFormat,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            keyword_table_path: None,
            source: SourceKind::Fixture,
            fixture_dir: None,
            commits_path: "commits.jsonl".into(),
            dataset_path: "dataset.jsonl".into(),
            corpus_path: "corpus.txt".into(),
            provider: "word2vec".into(),
            embedding_dir: ".".into(),
            vector_file_path: None,
            model_path: "classifier.json".into(),
            report_path: "report.csv".into(),
            embedding: EmbeddingSettings::default(),
            hyper: Hyperparameters::default(),
            context_radius: vulnlab_core::labeler::DEFAULT_CONTEXT_RADIUS,
            limit: None,
            split: [0.8, 0.1, 0.1],
            kfold: None,
            strict_lexing: false,
            sweep: SweepConfig::default(),
            format: ReportFormat::Csv,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    /// Replaces every module seed with one derived from the master seed.
    pub fn apply_master_seed(&mut self) {
        self.embedding.train.seed = derive_seed(self.seed, "embeddings");
        self.hyper.seed = derive_seed(self.seed, "classifier");
    }

    pub fn module_seed(&self, module: &str) -> u64 {
        derive_seed(self.seed, module)
    }

    pub fn split_ratios(&self) -> (f64, f64, f64) {
        (self.split[0], self.split[1], self.split[2])
    }

    pub fn embedding_file(&self, provider: &str) -> Result<PathBuf, CliError> {
        if provider == "external" {
            return self
                .vector_file_path
                .clone()
                .ok_or_else(|| CliError::Config("provider external requires vector_file_path".into()));
        }
        Ok(self.embedding_dir.join(format!("{provider}.embedding.json")))
    }

    pub fn sweep_providers(&self) -> Vec<String> {
        if self.sweep.providers.is_empty() {
            vec![self.provider.clone()]
        } else {
            self.sweep.providers.clone()
        }
    }
}

/// Inputs must exist before a subcommand starts.
pub fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} does not exist", path.display())))
    }
}
