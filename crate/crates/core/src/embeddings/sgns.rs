//! Skip-gram with negative sampling: the pairing scheme, the loss gradient and
//! the shared training loop.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, Vocabulary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_count: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |what: &str| Err(EmbeddingError::InvalidConfig(what.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.min_count == 0 {
            return bad("min_count must be at least 1");
        }
        Ok(())
    }
}

/// `(center, context)` index pairs of one stream. Out-of-vocabulary positions
/// produce no pairs but still count for distance.
pub fn generate_skipgram_pairs(stream: &[String], window: usize, vocab: &Vocabulary) -> Vec<(usize, usize)> {
    skipgram_pairs_encoded(&vocab.encode(stream), window)
}

pub(crate) fn skipgram_pairs_encoded(ids: &[Option<usize>], window: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (t, center) in ids.iter().enumerate() {
        let Some(center) = *center else { continue };
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(ids.len().saturating_sub(1));
        for (c, context) in ids.iter().enumerate().take(hi + 1).skip(lo) {
            if c == t {
                continue;
            }
            if let Some(context) = *context {
                pairs.push((center, context));
            }
        }
    }
    pairs
}

/// Loss and gradients of one positive pair with its negatives.
#[derive(Clone, Debug, PartialEq)]
pub struct SgnsGradient {
    pub loss: f64,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x)` without overflow.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `L = −log σ(u_o·v_c) − Σ_n log σ(−u_n·v_c)` and its gradient with respect
/// to `v_c`, `u_o` and every `u_n`.
pub fn sgns_loss_and_gradient(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> SgnsGradient {
    let s_pos = dot(context, center);
    let mut loss = -log_sigmoid(s_pos);
    let g_pos = sigmoid(s_pos) - 1.0;
    let mut grad_center: Vec<f64> = context.iter().map(|u| g_pos * u).collect();
    let grad_context: Vec<f64> = center.iter().map(|v| g_pos * v).collect();
    let mut grad_negs = Vec::with_capacity(negatives.len());
    for u_n in negatives {
        let s = dot(u_n, center);
        loss -= log_sigmoid(-s);
        let g = sigmoid(s);
        for (gc, u) in grad_center.iter_mut().zip(u_n.iter()) {
            *gc += g * u;
        }
        grad_negs.push(center.iter().map(|v| g * v).collect());
    }
    SgnsGradient {
        loss,
        center: grad_center,
        context: grad_context,
        negatives: grad_negs,
    }
}

/// Noise distribution: unigram counts raised to 3/4.
pub(crate) fn noise_distribution(vocab: &Vocabulary) -> WeightedIndex<f64> {
    WeightedIndex::new(vocab.counts().iter().map(|&c| (c as f64).powf(0.75)))
        .expect("vocabulary counts are positive")
}

pub(crate) fn uniform_init(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<f64> {
    let bound = 0.5 / dim as f64;
    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// How the center representation of a token is formed from trainable rows.
pub(crate) trait CenterRows {
    /// Rows making up the center vector of vocabulary entry `word`.
    fn rows(&self, word: usize) -> &[usize];
    /// Gradient scale applied to every row (1/m for a mean, 1 for a sum).
    fn scale(&self, word: usize) -> f64;
}

/// SGD over all skip-gram pairs, epoch by epoch and stream by stream in
/// corpus order. The learning rate falls linearly to 10% of its start.
pub(crate) fn train_sgns(
    encoded: &[Vec<Option<usize>>],
    vocab: &Vocabulary,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    center_rows: &dyn CenterRows,
    input: &mut [f64],
    output: &mut [f64],
) -> Result<(), EmbeddingError> {
    let dim = config.dim;
    let noise = noise_distribution(vocab);
    let pairs_per_epoch: usize = encoded.iter().map(|s| skipgram_pairs_encoded(s, config.window).len()).sum();
    let total = (pairs_per_epoch * config.epochs).max(1) as f64;
    let mut processed = 0usize;
    let mut center = vec![0.0; dim];
    let mut negs: Vec<usize> = Vec::with_capacity(config.negatives);
    for _ in 0..config.epochs {
        for stream in encoded {
            for (c, o) in skipgram_pairs_encoded(stream, config.window) {
                let lr = config.learning_rate * (1.0 - 0.9 * processed as f64 / total);
                processed += 1;
                negs.clear();
                while negs.len() < config.negatives {
                    let n = noise.sample(rng);
                    if n != o {
                        negs.push(n);
                    }
                    if vocab.len() == 1 {
                        break;
                    }
                }
                let rows = center_rows.rows(c);
                let scale = center_rows.scale(c);
                center.iter_mut().for_each(|x| *x = 0.0);
                for &r in rows {
                    for (x, v) in center.iter_mut().zip(&input[r * dim..(r + 1) * dim]) {
                        *x += v;
                    }
                }
                center.iter_mut().for_each(|x| *x *= scale);
                let neg_rows: Vec<&[f64]> = negs.iter().map(|&n| &output[n * dim..(n + 1) * dim]).collect();
                let grad = sgns_loss_and_gradient(&center, &output[o * dim..(o + 1) * dim], &neg_rows);
                if !grad.loss.is_finite() {
                    return Err(EmbeddingError::Diverged);
                }
                for (x, g) in output[o * dim..(o + 1) * dim].iter_mut().zip(&grad.context) {
                    *x -= lr * g;
                }
                for (&n, g_n) in negs.iter().zip(&grad.negatives) {
                    for (x, g) in output[n * dim..(n + 1) * dim].iter_mut().zip(g_n) {
                        *x -= lr * g;
                    }
                }
                for &r in rows {
                    for (x, g) in input[r * dim..(r + 1) * dim].iter_mut().zip(&grad.center) {
                        *x -= lr * scale * g;
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::build_vocabulary;
    use rand::SeedableRng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn pair_enumeration() {
        let stream = toks("a b c");
        let vocab = build_vocabulary(std::slice::from_ref(&stream), 1).unwrap();
        let named = |pairs: Vec<(usize, usize)>| -> Vec<(String, String)> {
            pairs
                .into_iter()
                .map(|(c, o)| (vocab.token(c).to_string(), vocab.token(o).to_string()))
                .collect()
        };
        let p = |a: &str, b: &str| (a.to_string(), b.to_string());
        assert_eq!(
            named(generate_skipgram_pairs(&stream, 1, &vocab)),
            [p("a", "b"), p("b", "a"), p("b", "c"), p("c", "b")]
        );
        let two = named(generate_skipgram_pairs(&stream, 2, &vocab));
        assert_eq!(two.len(), 6);
        assert!(two.contains(&p("a", "c")) && two.contains(&p("c", "a")));
        assert!(generate_skipgram_pairs(&toks("a"), 3, &vocab).is_empty());
    }

    #[test]
    fn oov_positions_skipped_but_occupy_distance() {
        let vocab = build_vocabulary(&[toks("a b")], 1).unwrap();
        let pairs = generate_skipgram_pairs(&toks("a zz b"), 1, &vocab);
        assert!(pairs.is_empty());
        assert_eq!(generate_skipgram_pairs(&toks("a zz b"), 2, &vocab).len(), 2);
    }

    fn finite_difference_check(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 5;
        let vocab = 10;
        let table: Vec<f64> = (0..vocab * dim * 2).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let row = |i: usize| table[i * dim..(i + 1) * dim].to_vec();
        let center = row(0);
        let context = row(11);
        let negs: Vec<Vec<f64>> = [13, 15, 18, 11].iter().map(|&i| row(i)).collect();
        let loss = |c: &[f64], o: &[f64], n: &[Vec<f64>]| {
            let refs: Vec<&[f64]> = n.iter().map(Vec::as_slice).collect();
            sgns_loss_and_gradient(c, o, &refs).loss
        };
        let refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
        let grad = sgns_loss_and_gradient(&center, &context, &refs);
        let h = 1e-5;
        let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
        let mut worst: f64 = 0.0;
        for k in 0..dim {
            let (mut p, mut m) = (center.clone(), center.clone());
            p[k] += h;
            m[k] -= h;
            let num = (loss(&p, &context, &negs) - loss(&m, &context, &negs)) / (2.0 * h);
            worst = worst.max(rel(grad.center[k], num));
            let (mut p, mut m) = (context.clone(), context.clone());
            p[k] += h;
            m[k] -= h;
            let num = (loss(&center, &p, &negs) - loss(&center, &m, &negs)) / (2.0 * h);
            worst = worst.max(rel(grad.context[k], num));
            for j in 0..negs.len() {
                let (mut p, mut m) = (negs.clone(), negs.clone());
                p[j][k] += h;
                m[j][k] -= h;
                let num = (loss(&center, &context, &p) - loss(&center, &context, &m)) / (2.0 * h);
                worst = worst.max(rel(grad.negatives[j][k], num));
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let worst = finite_difference_check(seed);
            assert!(worst < 1e-5, "seed {seed}: relative error {worst}");
        }
    }

    #[test]
    fn loss_is_stable_for_large_scores() {
        let big = [40.0; 3];
        let g = sgns_loss_and_gradient(&big, &big, &[&[-40.0; 3]]);
        assert!(g.loss.is_finite() && g.loss >= 0.0);
        let g = sgns_loss_and_gradient(&big, &[-40.0; 3], &[&big]);
        assert!(g.loss.is_finite() && g.loss > 1000.0);
    }
}
