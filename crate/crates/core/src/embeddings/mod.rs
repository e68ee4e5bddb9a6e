//! Token embeddings.
//!
//! Three methods are available behind [`EmbeddingMethod`], looked up by name
//! in a [`ProviderRegistry`]:
//!
//! * `word2vec`: skip-gram with negative sampling; unknown tokens embed to zero.
//! * `fasttext`: the same objective over word plus character n-gram vectors;
//!   unknown tokens embed to the mean of their n-gram vectors.
//! * `external`: precomputed vectors read from a vector file; unknown tokens
//!   embed to zero.

mod fasttext;
mod sgns;
mod vectors;
mod vocab;
mod word2vec;

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

pub use fasttext::{
    fasttext_init, fasttext_vector, fnv1a_32, ngram_bucket, train_fasttext, word_ngrams, Combine,
    FastTextModel, NGramConfig,
};
pub use sgns::{generate_skipgram_pairs, sgns_loss_and_gradient, SgnsGradient, TrainConfig};
pub use vectors::{load_vectors, save_vectors, ExternalVectors};
pub use vocab::{build_vocabulary, Vocabulary};
pub use word2vec::{train_word2vec, word2vec_init, EmbeddingMatrix, Word2VecModel};

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("no token reaches min_count")]
    EmptyVocabulary,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector file line {line}: {message}")]
    VectorFile { line: usize, message: String },
    #[error("invalid embedding configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown embedding method {0:?}")]
    UnknownMethod(String),
    #[error("bad model file: {0}")]
    ModelFile(String),
    #[error("training diverged (non-finite loss)")]
    Diverged,
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl EmbeddingError {
    pub fn kind(&self) -> &'static str {
        match self {
            EmbeddingError::EmptyVocabulary => "EmptyVocabulary",
            EmbeddingError::DimensionMismatch { .. } => "DimensionMismatch",
            EmbeddingError::VectorFile { .. } => "VectorFileError",
            EmbeddingError::InvalidConfig(_) => "ConfigError",
            EmbeddingError::UnknownMethod(_) => "ConfigError",
            EmbeddingError::ModelFile(_) => "ModelFileError",
            EmbeddingError::Diverged => "DivergenceError",
            EmbeddingError::Io(_) => "IoError",
        }
    }
}

/// Maps token text to a fixed-size vector. Total: every token gets a finite
/// vector, with each implementation choosing its own fallback for unknown ones.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes the vector of `token` into `out` (length `dim`).
    fn embed_into(&self, token: &str, out: &mut [f64]);

    /// Tokens with a learned or stored vector, in the provider's own order.
    fn known_tokens(&self) -> Vec<String>;

    fn embed(&self, token: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.embed_into(token, &mut out);
        out
    }
}

pub fn embed_sequence(provider: &dyn EmbeddingProvider, tokens: &[String]) -> Vec<Vec<f64>> {
    tokens.iter().map(|t| provider.embed(t)).collect()
}

/// `a·b / (|a||b|)`, or 0 when either vector is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Everything a method may need to train.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSettings {
    pub train: TrainConfig,
    pub ngrams: NGramConfig,
    pub combine: Combine,
}

/// A provider that can also be written back to disk.
pub trait EmbeddingModel: EmbeddingProvider {
    fn method(&self) -> &'static str;
    fn save(&self, out: &mut dyn Write) -> Result<(), EmbeddingError>;
}

/// One way of obtaining token vectors.
pub trait EmbeddingMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn train(
        &self,
        corpus: &[Vec<String>],
        settings: &EmbeddingSettings,
    ) -> Result<Box<dyn EmbeddingModel>, EmbeddingError>;
    fn load(&self, input: &mut dyn Read) -> Result<Box<dyn EmbeddingModel>, EmbeddingError>;
}

const MODEL_FORMAT: &str = "vulnlab-embedding";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelEnvelope<T> {
    format: String,
    version: u32,
    method: String,
    model: T,
}

fn save_model_json<T: Serialize>(method: &str, model: &T, out: &mut dyn Write) -> Result<(), EmbeddingError> {
    let envelope = ModelEnvelope {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        method: method.to_string(),
        model,
    };
    serde_json::to_writer(&mut *out, &envelope).map_err(|e| EmbeddingError::ModelFile(e.to_string()))?;
    out.flush()?;
    Ok(())
}

fn load_model_json<T: for<'de> Deserialize<'de>>(method: &str, input: &mut dyn Read) -> Result<T, EmbeddingError> {
    let envelope: ModelEnvelope<T> =
        serde_json::from_reader(BufReader::new(input)).map_err(|e| EmbeddingError::ModelFile(e.to_string()))?;
    if envelope.format != MODEL_FORMAT || envelope.version != MODEL_VERSION {
        return Err(EmbeddingError::ModelFile(format!(
            "unsupported format {} v{}",
            envelope.format, envelope.version
        )));
    }
    if envelope.method != method {
        return Err(EmbeddingError::ModelFile(format!(
            "file holds a {} model, not {method}",
            envelope.method
        )));
    }
    Ok(envelope.model)
}

/// Reads the method name stored in a model file without loading the model.
pub fn model_file_method(text: &str) -> Option<String> {
    #[derive(Deserialize)]
    struct Head {
        format: String,
        method: String,
    }
    serde_json::from_str::<Head>(text)
        .ok()
        .filter(|h| h.format == MODEL_FORMAT)
        .map(|h| h.method)
}

impl EmbeddingModel for Word2VecModel {
    fn method(&self) -> &'static str {
        "word2vec"
    }

    fn save(&self, out: &mut dyn Write) -> Result<(), EmbeddingError> {
        save_model_json(self.method(), self, out)
    }
}

impl EmbeddingModel for FastTextModel {
    fn method(&self) -> &'static str {
        "fasttext"
    }

    fn save(&self, out: &mut dyn Write) -> Result<(), EmbeddingError> {
        save_model_json(self.method(), self, out)
    }
}

impl EmbeddingModel for ExternalVectors {
    fn method(&self) -> &'static str {
        "external"
    }

    fn save(&self, out: &mut dyn Write) -> Result<(), EmbeddingError> {
        save_vectors(self, out)
    }
}

pub struct Word2VecMethod;

impl EmbeddingMethod for Word2VecMethod {
    fn name(&self) -> &'static str {
        "word2vec"
    }

    fn train(&self, corpus: &[Vec<String>], s: &EmbeddingSettings) -> Result<Box<dyn EmbeddingModel>, EmbeddingError> {
        Ok(Box::new(train_word2vec(corpus, &s.train)?))
    }

    fn load(&self, input: &mut dyn Read) -> Result<Box<dyn EmbeddingModel>, EmbeddingError> {
        let model: Word2VecModel = load_model_json(self.name(), input)?;
        let expected = model.vocab.len() * model.matrix.dim;
        if model.matrix.input_vectors.len() != expected || model.matrix.output_vectors.len() != expected {
            return Err(EmbeddingError::ModelFile("matrix shape does not match vocabulary".into()));
        }
        Ok(Box::new(model))
    }
}

pub struct FastTextMethod;

impl EmbeddingMethod for FastTextMethod {
    fn name(&self) -> &'static str {
        "fasttext"
    }

    fn train(&self, corpus: &[Vec<String>], s: &EmbeddingSettings) -> Result<Box<dyn EmbeddingModel>, EmbeddingError> {
        Ok(Box::new(train_fasttext(corpus, &s.train, &s.ngrams, s.combine)?))
    }

    fn load(&self, input: &mut dyn Read) -> Result<Box<dyn EmbeddingModel>, EmbeddingError> {
        let mut model: FastTextModel = load_model_json(self.name(), input)?;
        let rows = model.vocab.len() + model.buckets.len();
        if model.input_vectors.len() != rows * model.config.dim
            || model.output_vectors.len() != model.vocab.len() * model.config.dim
        {
            return Err(EmbeddingError::ModelFile("matrix shape does not match vocabulary".into()));
        }
        model.rebuild_index();
        Ok(Box::new(model))
    }
}

/// Vectors computed elsewhere; there is nothing to train.
pub struct ExternalMethod;

impl EmbeddingMethod for ExternalMethod {
    fn name(&self) -> &'static str {
        "external"
    }

    fn train(&self, _: &[Vec<String>], _: &EmbeddingSettings) -> Result<Box<dyn EmbeddingModel>, EmbeddingError> {
        Err(EmbeddingError::InvalidConfig(
            "external vectors are loaded from a vector file, not trained".into(),
        ))
    }

    fn load(&self, input: &mut dyn Read) -> Result<Box<dyn EmbeddingModel>, EmbeddingError> {
        let reader: Box<dyn BufRead + '_> = Box::new(BufReader::new(input));
        Ok(Box::new(load_vectors(reader)?))
    }
}

/// Embedding methods by name.
pub struct ProviderRegistry {
    methods: BTreeMap<&'static str, Box<dyn EmbeddingMethod>>,
}

impl Default for ProviderRegistry {
    /// `word2vec`, `fasttext` and `external`.
    fn default() -> Self {
        let mut registry = ProviderRegistry::empty();
        registry.register(Box::new(Word2VecMethod));
        registry.register(Box::new(FastTextMethod));
        registry.register(Box::new(ExternalMethod));
        registry
    }
}

impl ProviderRegistry {
    pub fn empty() -> Self {
        ProviderRegistry {
            methods: BTreeMap::new(),
        }
    }

    /// Adds or replaces the method registered under its name.
    pub fn register(&mut self, method: Box<dyn EmbeddingMethod>) {
        self.methods.insert(method.name(), method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn EmbeddingMethod, EmbeddingError> {
        self.methods
            .get(name)
            .map(|m| m.as_ref())
            .ok_or_else(|| EmbeddingError::UnknownMethod(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.keys().copied().collect()
    }
}
