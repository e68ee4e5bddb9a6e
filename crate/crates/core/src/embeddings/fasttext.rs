use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sgns::{train_sgns, uniform_init, CenterRows};
use super::{build_vocabulary, EmbeddingError, EmbeddingProvider, TrainConfig, Vocabulary};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NGramConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub bucket_count: u32,
}

impl Default for NGramConfig {
    fn default() -> Self {
        NGramConfig {
            n_min: 3,
            n_max: 6,
            bucket_count: 1 << 20,
        }
    }
}

impl NGramConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.n_min == 0 || self.n_min > self.n_max {
            return Err(EmbeddingError::InvalidConfig("need 1 <= n_min <= n_max".into()));
        }
        if self.bucket_count == 0 {
            return Err(EmbeddingError::InvalidConfig("bucket_count must be at least 1".into()));
        }
        Ok(())
    }
}

/// How a token's word vector and n-gram vectors are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    #[default]
    Mean,
    Sum,
}

impl std::str::FromStr for Combine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Combine::Mean),
            "sum" => Ok(Combine::Sum),
            other => Err(format!("combine must be mean or sum, got {other:?}")),
        }
    }
}

/// Character n-grams of `<token>` for every length in `n_min..=n_max`,
/// shortest first, each length in position order. The whole wrapped token is
/// left out.
pub fn word_ngrams(token: &str, cfg: &NGramConfig) -> Vec<String> {
    let chars: Vec<char> = std::iter::once('<').chain(token.chars()).chain(std::iter::once('>')).collect();
    let mut out = Vec::new();
    for n in cfg.n_min..=cfg.n_max.min(chars.len()) {
        if n == chars.len() {
            continue;
        }
        for start in 0..=chars.len() - n {
            out.push(chars[start..start + n].iter().collect());
        }
    }
    out
}

pub fn fnv1a_32(bytes: &[u8]) -> u32 {
    let mut hash: u32 = 0x811c_9dc5;
    for &b in bytes {
        hash ^= u32::from(b);
        hash = hash.wrapping_mul(0x0100_0193);
    }
    hash
}

pub fn ngram_bucket(ngram: &str, cfg: &NGramConfig) -> u32 {
    fnv1a_32(ngram.as_bytes()) % cfg.bucket_count
}

/// Word vectors plus a compact table of the hash buckets that training
/// n-grams fall into. Buckets no training token uses hold the zero vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastTextModel {
    pub vocab: Vocabulary,
    pub ngrams: NGramConfig,
    pub combine: Combine,
    pub config: TrainConfig,
    /// Bucket ids with a stored row, ascending; row `V + k` is `buckets[k]`.
    pub buckets: Vec<u32>,
    /// Rows `0..V` are word vectors, then one row per stored bucket.
    pub input_vectors: Vec<f64>,
    pub output_vectors: Vec<f64>,
    #[serde(skip)]
    bucket_rows: HashMap<u32, usize>,
}

struct TokenRows {
    rows: Vec<Vec<usize>>,
    combine: Combine,
}

impl CenterRows for TokenRows {
    fn rows(&self, word: usize) -> &[usize] {
        &self.rows[word]
    }

    fn scale(&self, word: usize) -> f64 {
        match self.combine {
            Combine::Mean => 1.0 / self.rows[word].len() as f64,
            Combine::Sum => 1.0,
        }
    }
}

impl FastTextModel {
    fn index_buckets(&mut self) {
        let v = self.vocab.len();
        self.bucket_rows = self.buckets.iter().enumerate().map(|(k, &b)| (b, v + k)).collect();
    }

    /// Restores lookup tables after deserializing.
    pub fn rebuild_index(&mut self) {
        self.index_buckets();
    }

    fn row(&self, r: usize) -> &[f64] {
        let dim = self.config.dim;
        &self.input_vectors[r * dim..(r + 1) * dim]
    }

    fn token_rows(&self, word: usize) -> Vec<usize> {
        let mut rows = vec![word];
        for g in word_ngrams(self.vocab.token(word), &self.ngrams) {
            rows.push(self.bucket_rows[&ngram_bucket(&g, &self.ngrams)]);
        }
        rows
    }

    /// Whole-word vector of an in-vocabulary token.
    pub fn word_vector(&self, token: &str) -> Option<&[f64]> {
        self.vocab.index_of(token).map(|i| self.row(i))
    }

    /// Vector of a hash bucket; zero when no training n-gram used it.
    pub fn bucket_vector(&self, bucket: u32) -> Vec<f64> {
        match self.bucket_rows.get(&bucket) {
            Some(&r) => self.row(r).to_vec(),
            None => vec![0.0; self.config.dim],
        }
    }
}

/// Mean (or sum) of the whole-word vector, if the token is known, and the
/// vectors of all its n-gram buckets. A token with neither is the zero vector.
pub fn fasttext_vector(model: &FastTextModel, token: &str) -> Vec<f64> {
    let dim = model.config.dim;
    let mut out = vec![0.0; dim];
    let mut m = 0usize;
    if let Some(v) = model.word_vector(token) {
        out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
        m += 1;
    }
    for g in word_ngrams(token, &model.ngrams) {
        if let Some(&r) = model.bucket_rows.get(&ngram_bucket(&g, &model.ngrams)) {
            out.iter_mut().zip(model.row(r)).for_each(|(o, x)| *o += x);
        }
        m += 1;
    }
    if m > 0 && model.combine == Combine::Mean {
        out.iter_mut().for_each(|o| *o /= m as f64);
    }
    out
}

/// The seeded starting point of training; what `epochs = 0` returns.
pub fn fasttext_init(
    vocab: Vocabulary,
    config: &TrainConfig,
    ngrams: &NGramConfig,
    combine: Combine,
) -> (FastTextModel, ChaCha8Rng) {
    let used: BTreeSet<u32> = vocab
        .tokens()
        .iter()
        .flat_map(|t| word_ngrams(t, ngrams))
        .map(|g| ngram_bucket(&g, ngrams))
        .collect();
    let buckets: Vec<u32> = used.into_iter().collect();
    let rows = vocab.len() + buckets.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let input_vectors = uniform_init(&mut rng, rows * config.dim, config.dim);
    let mut model = FastTextModel {
        output_vectors: vec![0.0; vocab.len() * config.dim],
        vocab,
        ngrams: ngrams.clone(),
        combine,
        config: config.clone(),
        buckets,
        input_vectors,
        bucket_rows: HashMap::new(),
    };
    model.index_buckets();
    (model, rng)
}

/// SGNS where the center vector is [`fasttext_vector`]; its gradient is
/// spread over every constituent row (scaled by 1/m under the mean).
pub fn train_fasttext(
    corpus: &[Vec<String>],
    config: &TrainConfig,
    ngrams: &NGramConfig,
    combine: Combine,
) -> Result<FastTextModel, EmbeddingError> {
    config.validate()?;
    ngrams.validate()?;
    let vocab = build_vocabulary(corpus, config.min_count)?;
    let (mut model, mut rng) = fasttext_init(vocab, config, ngrams, combine);
    let rows = TokenRows {
        rows: (0..model.vocab.len()).map(|w| model.token_rows(w)).collect(),
        combine,
    };
    let encoded: Vec<Vec<Option<usize>>> = corpus.iter().map(|s| model.vocab.encode(s)).collect();
    let FastTextModel {
        vocab,
        input_vectors,
        output_vectors,
        ..
    } = &mut model;
    train_sgns(&encoded, vocab, config, &mut rng, &rows, input_vectors, output_vectors)?;
    Ok(model)
}

impl EmbeddingProvider for FastTextModel {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed_into(&self, token: &str, out: &mut [f64]) {
        out.copy_from_slice(&fasttext_vector(self, token));
    }

    fn known_tokens(&self) -> Vec<String> {
        self.vocab.tokens().to_vec()
    }
}
