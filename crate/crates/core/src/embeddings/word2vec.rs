use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sgns::{train_sgns, uniform_init, CenterRows};
use super::{build_vocabulary, EmbeddingError, EmbeddingProvider, TrainConfig, Vocabulary};

/// Input (center) and output (context) vectors, row-major `V × dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub dim: usize,
    pub input_vectors: Vec<f64>,
    pub output_vectors: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn input_row(&self, index: usize) -> &[f64] {
        &self.input_vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn output_row(&self, index: usize) -> &[f64] {
        &self.output_vectors[index * self.dim..(index + 1) * self.dim]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Word2VecModel {
    pub vocab: Vocabulary,
    pub matrix: EmbeddingMatrix,
    pub config: TrainConfig,
}

struct WordRows(Vec<usize>);

impl CenterRows for WordRows {
    fn rows(&self, word: usize) -> &[usize] {
        std::slice::from_ref(&self.0[word])
    }

    fn scale(&self, _word: usize) -> f64 {
        1.0
    }
}

/// The seeded starting point of training; what `epochs = 0` returns.
pub fn word2vec_init(vocab: &Vocabulary, config: &TrainConfig) -> (EmbeddingMatrix, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let input_vectors = uniform_init(&mut rng, vocab.len() * config.dim, config.dim);
    let matrix = EmbeddingMatrix {
        dim: config.dim,
        input_vectors,
        output_vectors: vec![0.0; vocab.len() * config.dim],
    };
    (matrix, rng)
}

/// Single-threaded, so the result depends only on corpus, config and seed.
pub fn train_word2vec(corpus: &[Vec<String>], config: &TrainConfig) -> Result<Word2VecModel, EmbeddingError> {
    config.validate()?;
    let vocab = build_vocabulary(corpus, config.min_count)?;
    let (mut matrix, mut rng) = word2vec_init(&vocab, config);
    let encoded: Vec<Vec<Option<usize>>> = corpus.iter().map(|s| vocab.encode(s)).collect();
    let rows = WordRows((0..vocab.len()).collect());
    train_sgns(
        &encoded,
        &vocab,
        config,
        &mut rng,
        &rows,
        &mut matrix.input_vectors,
        &mut matrix.output_vectors,
    )?;
    Ok(Word2VecModel {
        vocab,
        matrix,
        config: config.clone(),
    })
}

impl EmbeddingProvider for Word2VecModel {
    fn dim(&self) -> usize {
        self.matrix.dim
    }

    /// Out-of-vocabulary tokens get the zero vector.
    fn embed_into(&self, token: &str, out: &mut [f64]) {
        match self.vocab.index_of(token) {
            Some(i) => out.copy_from_slice(self.matrix.input_row(i)),
            None => out.fill(0.0),
        }
    }

    fn known_tokens(&self) -> Vec<String> {
        self.vocab.tokens().to_vec()
    }
}
