//! LSTM vulnerability classifier: dataset preparation, training and prediction.

mod lstm;
mod train;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use lstm::{
    backward, backward_sample, bce_loss, lstm_forward, lstm_probability, sigmoid, ForwardCache, LstmParameters,
    BCE_EPSILON,
};
pub use train::{
    load_model, predict, predict_all, save_model, train, train_from, Adam, EpochStats, TrainedModel,
};

use crate::embeddings::EmbeddingProvider;
use crate::labeler::{Label, LabeledSnippet};
use crate::pytokenizer::{normalize_source, tokenize_with, LexError, LexMode};
use crate::VulnCategory;

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training diverged in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("snippet {id}: {source}")]
    Lex { id: String, source: LexError },
    #[error("bad model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ClassifierError {
    pub fn kind(&self) -> &'static str {
        match self {
            ClassifierError::ShapeMismatch { .. } => "ShapeMismatch",
            ClassifierError::InsufficientData(_) => "InsufficientData",
            ClassifierError::Divergence { .. } => "DivergenceError",
            ClassifierError::InvalidHyper(_) => "ConfigError",
            ClassifierError::Lex { .. } => "LexError",
            ClassifierError::ModelFile(_) => "ModelFileError",
            ClassifierError::Io(_) => "IoError",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub neurons: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    /// Sequence length every sample is cut or padded to; `None` pads to the
    /// longest sample.
    pub max_seq_len: Option<usize>,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            neurons: 100,
            epochs: 100,
            batch_size: 128,
            dropout: 0.2,
            learning_rate: 1e-3,
            max_seq_len: Some(500),
            seed: 0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidHyper(m.to_string()));
        if self.neurons == 0 {
            return bad("neurons must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.max_seq_len == Some(0) {
            return bad("max_seq_len must be at least 1");
        }
        Ok(())
    }
}

/// One embedded snippet: `seq_len × dim`, where only the first `tokens` rows
/// are stored and the rest are zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: Label,
    pub category: VulnCategory,
    pub dim: usize,
    pub seq_len: usize,
    values: Vec<f64>,
}

impl Sample {
    /// Keeps at most `seq_len` of `rows`; each row must have `dim` values.
    pub fn from_rows(
        id: &str,
        rows: &[Vec<f64>],
        dim: usize,
        seq_len: usize,
        label: Label,
        category: VulnCategory,
    ) -> Self {
        let kept = rows.len().min(seq_len);
        let mut values = Vec::with_capacity(kept * dim);
        for row in &rows[..kept] {
            assert_eq!(row.len(), dim, "row width must equal dim");
            values.extend_from_slice(row);
        }
        Sample {
            id: id.to_string(),
            label,
            category,
            dim,
            seq_len,
            values,
        }
    }

    /// Number of stored (non-padding) rows.
    pub fn token_count(&self) -> usize {
        self.values.len().checked_div(self.dim).unwrap_or(0)
    }

    /// Row `t`, or `None` for padding.
    pub fn row(&self, t: usize) -> Option<&[f64]> {
        (t < self.token_count()).then(|| &self.values[t * self.dim..(t + 1) * self.dim])
    }

    /// The full zero-padded matrix, row-major.
    pub fn matrix(&self) -> Vec<f64> {
        let mut m = self.values.clone();
        m.resize(self.seq_len * self.dim, 0.0);
        m
    }
}

/// Token texts of a snippet as the classifier sees them. Blank code has none.
pub fn snippet_tokens(code: &str, mode: LexMode) -> Result<Vec<String>, LexError> {
    if code.trim().is_empty() {
        return Ok(Vec::new());
    }
    Ok(tokenize_with(&normalize_source(code), mode)?.texts())
}

/// Tokenizes, embeds, truncates to `max_seq_len` and zero-pads every snippet.
/// Lexing failures are errors only in strict mode.
pub fn vectorize_dataset(
    snippets: &[LabeledSnippet],
    provider: &dyn EmbeddingProvider,
    max_seq_len: Option<usize>,
    mode: LexMode,
) -> Result<Vec<Sample>, ClassifierError> {
    let mut tokenized = Vec::with_capacity(snippets.len());
    for s in snippets {
        let tokens = snippet_tokens(&s.code, mode).map_err(|source| ClassifierError::Lex {
            id: s.id.clone(),
            source,
        })?;
        tokenized.push(tokens);
    }
    let longest = tokenized.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let seq_len = max_seq_len.unwrap_or(longest);
    let dim = provider.dim();
    Ok(snippets
        .iter()
        .zip(tokenized)
        .map(|(s, tokens)| {
            let rows: Vec<Vec<f64>> = tokens.iter().take(seq_len).map(|t| provider.embed(t)).collect();
            Sample::from_rows(&s.id, &rows, dim, seq_len, s.label, s.category)
        })
        .collect())
}

/// Train, validation and test parts of a split.
pub type Split<T> = (Vec<T>, Vec<T>, Vec<T>);

/// Index partition of `n` items: seeded shuffle, then `⌊r₀n⌋`, `⌊r₁n⌋` and the
/// remainder.
pub fn split_indices(
    n: usize,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Split<usize>, ClassifierError> {
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(0.0..=1.0).contains(r)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(ClassifierError::InvalidHyper(format!(
            "split ratios must be in [0, 1] and sum to 1, got {ratios:?}"
        )));
    }
    let n_train = (a * n as f64 + 1e-9).floor() as usize;
    let n_val = (b * n as f64 + 1e-9).floor() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(ClassifierError::InsufficientData(format!(
            "{n} samples cannot fill a {ratios:?} split"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok((order, val, test))
}

/// Seeded train/validation/test split (80/10/10 by default in the pipeline).
pub fn split_dataset<T: Clone>(
    samples: &[T],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Split<T>, ClassifierError> {
    let (tr, va, te) = split_indices(samples.len(), ratios, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect();
    Ok((pick(&tr), pick(&va), pick(&te)))
}
