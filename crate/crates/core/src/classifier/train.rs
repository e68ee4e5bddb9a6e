use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lstm::{backward_sample, bce_loss, lstm_forward, LstmParameters};
use super::{ClassifierError, Hyperparameters, Sample};
use crate::labeler::Label;

/// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPSILON: f64 = 1e-8;

    pub fn new(len: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + Self::EPSILON);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    /// Absent when training ran without a validation set.
    pub val_loss: Option<f64>,
    pub val_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub params: LstmParameters,
    pub provider_id: String,
    pub hyper: Hyperparameters,
    /// Sequence length the model was trained on.
    pub seq_len: usize,
    pub history: Vec<EpochStats>,
}

fn check_samples(samples: &[Sample], dim: usize) -> Result<(), ClassifierError> {
    for s in samples {
        if s.dim != dim {
            return Err(ClassifierError::ShapeMismatch {
                expected: dim,
                found: s.dim,
            });
        }
    }
    Ok(())
}

/// Mean BCE and F1 of the model on `samples`.
fn evaluate_loss_f1(params: &LstmParameters, samples: &[Sample]) -> Result<(f64, f64), ClassifierError> {
    let probs: Vec<f64> = samples
        .par_iter()
        .map(|s| lstm_forward(params, s, None).map(|c| c.probability))
        .collect::<Result<_, _>>()?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    let mut loss = 0.0;
    for (p, s) in probs.iter().zip(samples) {
        let y = s.label == Label::Vulnerable;
        loss += bce_loss(*p, if y { 1.0 } else { 0.0 });
        match (*p >= 0.5, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fneg > 0 { tp as f64 / (tp + fneg) as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((loss / samples.len() as f64, f1))
}

/// Minibatch Adam on mean BCE. Parameters start uniform in (−0.05, 0.05);
/// each epoch reshuffles; each sample in each step draws its own input
/// dropout mask. Single-threaded, so runs repeat bit for bit.
pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    hyper: &Hyperparameters,
    provider_id: &str,
) -> Result<TrainedModel, ClassifierError> {
    hyper.validate()?;
    let first = train_set
        .first()
        .ok_or_else(|| ClassifierError::InsufficientData("empty training set".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let params = LstmParameters::init_uniform(first.dim, hyper.neurons, &mut rng);
    train_from(params, &mut rng, train_set, val_set, hyper, provider_id)
}

/// [`train`] from given starting parameters and generator state.
pub fn train_from(
    mut params: LstmParameters,
    rng: &mut ChaCha8Rng,
    train_set: &[Sample],
    val_set: &[Sample],
    hyper: &Hyperparameters,
    provider_id: &str,
) -> Result<TrainedModel, ClassifierError> {
    hyper.validate()?;
    if train_set.is_empty() {
        return Err(ClassifierError::InsufficientData("empty training set".into()));
    }
    let dim = params.dim;
    check_samples(train_set, dim)?;
    check_samples(val_set, dim)?;
    let seq_len = train_set[0].seq_len;
    let keep = 1.0 - hyper.dropout;
    let mut adam = Adam::new(params.values.len(), hyper.learning_rate);
    let mut grad = LstmParameters::zeros(dim, params.neurons);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut mask = vec![1.0; dim];
    let mut history = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            grad.values.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let sample = &train_set[idx];
                let dropout_mask = if hyper.dropout > 0.0 {
                    for m in mask.iter_mut() {
                        *m = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
                    }
                    Some(mask.as_slice())
                } else {
                    None
                };
                let cache = lstm_forward(&params, sample, dropout_mask)?;
                let y = if sample.label == Label::Vulnerable { 1.0 } else { 0.0 };
                let loss = bce_loss(cache.probability, y);
                if !loss.is_finite() || !cache.probability.is_finite() {
                    return Err(ClassifierError::Divergence { epoch });
                }
                epoch_loss += loss;
                backward_sample(&params, &cache, y, scale, &mut grad);
            }
            adam.step(&mut params.values, &grad.values);
            if !params.is_finite() {
                return Err(ClassifierError::Divergence { epoch });
            }
        }
        let (val_loss, val_f1) = if val_set.is_empty() {
            (None, None)
        } else {
            let (l, f) = evaluate_loss_f1(&params, val_set)?;
            (Some(l), Some(f))
        };
        history.push(EpochStats {
            train_loss: epoch_loss / train_set.len() as f64,
            val_loss,
            val_f1,
        });
        log::debug!("epoch {epoch}: train loss {:.6}", epoch_loss / train_set.len() as f64);
    }
    Ok(TrainedModel {
        params,
        provider_id: provider_id.to_string(),
        hyper: hyper.clone(),
        seq_len,
        history,
    })
}

/// Probability with dropout off, and the label (1 iff probability ≥ 0.5).
pub fn predict(model: &TrainedModel, sample: &Sample) -> Result<(f64, Label), ClassifierError> {
    let p = lstm_forward(&model.params, sample, None)?.probability;
    Ok((p, Label::from_bool(p >= 0.5)))
}

/// [`predict`] over many samples in parallel, results in input order.
pub fn predict_all(model: &TrainedModel, samples: &[Sample]) -> Result<Vec<(f64, Label)>, ClassifierError> {
    samples.par_iter().map(|s| predict(model, s)).collect()
}

const MODEL_FORMAT: &str = "vulnlab-lstm";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    provider_id: String,
    dim: usize,
    neurons: usize,
    seq_len: usize,
    hyper: Hyperparameters,
    /// Gate blocks stacked input, forget, cell, output.
    w: Matrix,
    u: Matrix,
    b: Vec<f64>,
    dense_w: Vec<f64>,
    dense_b: f64,
    history: Vec<EpochStats>,
}

pub fn save_model(model: &TrainedModel, out: &mut dyn Write) -> Result<(), ClassifierError> {
    let p = &model.params;
    let (n, d) = (p.neurons, p.dim);
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        provider_id: model.provider_id.clone(),
        dim: d,
        neurons: n,
        seq_len: model.seq_len,
        hyper: model.hyper.clone(),
        w: Matrix { rows: 4 * n, cols: d, data: p.w().to_vec() },
        u: Matrix { rows: 4 * n, cols: n, data: p.u().to_vec() },
        b: p.b().to_vec(),
        dense_w: p.dense_w().to_vec(),
        dense_b: p.dense_b(),
        history: model.history.clone(),
    };
    serde_json::to_writer(&mut *out, &file).map_err(|e| ClassifierError::ModelFile(e.to_string()))?;
    out.flush()?;
    Ok(())
}

/// Loads a model and checks it against the dimension of the provider that will
/// feed it.
pub fn load_model(input: &mut dyn Read, provider_dim: usize) -> Result<TrainedModel, ClassifierError> {
    let file: ModelFile = serde_json::from_reader(std::io::BufReader::new(input))
        .map_err(|e| ClassifierError::ModelFile(e.to_string()))?;
    if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
        return Err(ClassifierError::ModelFile(format!(
            "unsupported format {} v{}",
            file.format, file.version
        )));
    }
    if file.dim != provider_dim {
        return Err(ClassifierError::ShapeMismatch {
            expected: provider_dim,
            found: file.dim,
        });
    }
    let (n, d) = (file.neurons, file.dim);
    let shapes_ok = file.w.rows == 4 * n
        && file.w.cols == d
        && file.w.data.len() == 4 * n * d
        && file.u.rows == 4 * n
        && file.u.cols == n
        && file.u.data.len() == 4 * n * n
        && file.b.len() == 4 * n
        && file.dense_w.len() == n;
    if !shapes_ok {
        return Err(ClassifierError::ModelFile("parameter shapes disagree with dim/neurons".into()));
    }
    let mut values = file.w.data;
    values.extend(file.u.data);
    values.extend(file.b);
    values.extend(file.dense_w);
    values.push(file.dense_b);
    let params = LstmParameters { dim: d, neurons: n, values };
    if !params.is_finite() {
        return Err(ClassifierError::ModelFile("non-finite parameter".into()));
    }
    Ok(TrainedModel {
        params,
        provider_id: file.provider_id,
        hyper: file.hyper,
        seq_len: file.seq_len,
        history: file.history,
    })
}
