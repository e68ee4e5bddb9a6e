//! Metrics, per-category breakdowns, k-fold cross-validation, hyperparameter
//! sweeps and report files.

mod report;

use std::fmt;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{emit_report, read_report_json, write_report, write_report_rows, ReportFormat, ReportRow, CSV_HEADER};

use crate::classifier::{predict_all, split_indices, train, ClassifierError, Hyperparameters, Sample, TrainedModel};
use crate::labeler::Label;
use crate::seed::derive_indexed;
use crate::VulnCategory;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {truths} labels")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a JSON report: {0}")]
    ReportFormat(String),
}

impl EvalError {
    pub fn kind(&self) -> &'static str {
        match self {
            EvalError::LengthMismatch { .. } => "LengthMismatch",
            EvalError::EmptyEvaluation => "EmptyEvaluation",
            EvalError::InsufficientData(_) => "InsufficientData",
            EvalError::Classifier(e) => e.kind(),
            EvalError::Io(_) => "IoError",
            EvalError::ReportFormat(_) => "ReportFormatError",
        }
    }
}

/// Confusion cells with vulnerable (1) as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn add(&mut self, predicted: Label, truth: Label) {
        match (predicted, truth) {
            (Label::Vulnerable, Label::Vulnerable) => self.tp += 1,
            (Label::Vulnerable, Label::Fixed) => self.fp += 1,
            (Label::Fixed, Label::Fixed) => self.tn += 1,
            (Label::Fixed, Label::Vulnerable) => self.fn_ += 1,
        }
    }
}

pub fn confusion(predictions: &[(f64, Label)], truths: &[Label]) -> Result<ConfusionCounts, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    let mut counts = ConfusionCounts::default();
    for ((_, predicted), truth) in predictions.iter().zip(truths) {
        counts.add(*predicted, *truth);
    }
    Ok(counts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    fn nan() -> Self {
        Metrics {
            accuracy: f64::NAN,
            precision: f64::NAN,
            recall: f64::NAN,
            f1: f64::NAN,
        }
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Precision and recall are 0 when their denominators are.
pub fn metrics(c: &ConfusionCounts) -> Result<Metrics, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Ok(Metrics {
        accuracy: ratio(c.tp + c.tn, total),
        precision,
        recall,
        f1: f1_score(precision, recall),
    })
}

/// What a metrics row summarizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Overall,
    Category(VulnCategory),
    /// One cross-validation fold, numbered from 0.
    Fold(usize),
    /// Arithmetic mean over folds.
    FoldMean,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Overall => f.write_str("overall"),
            Scope::Category(c) => f.write_str(c.as_str()),
            Scope::Fold(i) => write!(f, "fold-{i}"),
            Scope::FoldMean => f.write_str("fold-mean"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub provider: String,
    pub scope: Scope,
    pub hyper: Hyperparameters,
    pub metrics: Metrics,
    /// Confusion cells behind the row; absent for averaged rows.
    pub counts: Option<ConfusionCounts>,
    /// Set when the row stands for a failed run; metrics are then NaN.
    pub error: Option<String>,
}

impl MetricsRow {
    fn new(provider: &str, scope: Scope, hyper: &Hyperparameters, counts: ConfusionCounts) -> Result<Self, EvalError> {
        Ok(MetricsRow {
            provider: provider.to_string(),
            scope,
            hyper: hyper.clone(),
            metrics: metrics(&counts)?,
            counts: Some(counts),
            error: None,
        })
    }

    fn failed(provider: &str, scope: Scope, hyper: &Hyperparameters, error: String) -> Self {
        MetricsRow {
            provider: provider.to_string(),
            scope,
            hyper: hyper.clone(),
            metrics: Metrics::nan(),
            counts: None,
            error: Some(error),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

/// One row per category present (in category order) and a final overall row,
/// from predictions already made for `samples`.
pub fn per_category_rows(
    samples: &[Sample],
    predictions: &[(f64, Label)],
    provider: &str,
    hyper: &Hyperparameters,
) -> Result<Vec<MetricsRow>, EvalError> {
    let truths: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let overall = confusion(predictions, &truths)?;
    let mut rows = Vec::new();
    for category in VulnCategory::ALL {
        let mut counts = ConfusionCounts::default();
        for (s, (_, predicted)) in samples.iter().zip(predictions) {
            if s.category == category {
                counts.add(*predicted, s.label);
            }
        }
        if counts.total() == 0 {
            warn!("no test samples of category {category}");
            continue;
        }
        rows.push(MetricsRow::new(provider, Scope::Category(category), hyper, counts)?);
    }
    rows.push(MetricsRow::new(provider, Scope::Overall, hyper, overall)?);
    Ok(rows)
}

pub fn per_category_report(model: &TrainedModel, test_samples: &[Sample]) -> Result<Vec<MetricsRow>, EvalError> {
    if test_samples.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let predictions = predict_all(model, test_samples)?;
    per_category_rows(test_samples, &predictions, &model.provider_id, &model.hyper)
}

/// Seeded shuffle of `0..n` cut into `k` folds; the first `n % k` folds hold
/// one extra index.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 || n < k {
        return Err(EvalError::InsufficientData(format!("{n} samples cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

fn mean_row(provider: &str, hyper: &Hyperparameters, folds: &[MetricsRow]) -> MetricsRow {
    let k = folds.len() as f64;
    let avg = |f: fn(&Metrics) -> f64| folds.iter().map(|r| f(&r.metrics)).sum::<f64>() / k;
    MetricsRow {
        provider: provider.to_string(),
        scope: Scope::FoldMean,
        hyper: hyper.clone(),
        metrics: Metrics {
            accuracy: avg(|m| m.accuracy),
            precision: avg(|m| m.precision),
            recall: avg(|m| m.recall),
            f1: avg(|m| m.f1),
        },
        counts: None,
        error: None,
    }
}

/// Each fold serves once as the test set while the rest trains (without a
/// validation set). Folds train in parallel; fold `i` uses a training seed
/// derived from `hyper.seed` and `i`. Returns the fold rows followed by their
/// mean.
pub fn kfold(
    samples: &[Sample],
    k: usize,
    seed: u64,
    hyper: &Hyperparameters,
    provider: &str,
) -> Result<Vec<MetricsRow>, EvalError> {
    let folds = fold_indices(samples.len(), k, seed)?;
    let mut assignment = vec![0usize; samples.len()];
    for (f, idx) in folds.iter().enumerate() {
        for &i in idx {
            assignment[i] = f;
        }
    }
    let rows: Vec<MetricsRow> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<MetricsRow, EvalError> {
            let test: Vec<Sample> = folds[f].iter().map(|&i| samples[i].clone()).collect();
            let train_set: Vec<Sample> = (0..samples.len())
                .filter(|&i| assignment[i] != f)
                .map(|i| samples[i].clone())
                .collect();
            let fold_hyper = Hyperparameters {
                seed: derive_indexed(hyper.seed, "fold", f),
                ..hyper.clone()
            };
            let model = train(&train_set, &[], &fold_hyper, provider)?;
            let predictions = predict_all(&model, &test)?;
            let truths: Vec<Label> = test.iter().map(|s| s.label).collect();
            MetricsRow::new(provider, Scope::Fold(f), hyper, confusion(&predictions, &truths)?)
        })
        .collect::<Result<_, _>>()?;
    let mean = mean_row(provider, hyper, &rows);
    let mut out = rows;
    out.push(mean);
    Ok(out)
}

/// Hyperparameter values to cross.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub epochs: Vec<usize>,
    pub dropout: Vec<f64>,
    pub neurons: Vec<usize>,
    pub batch_size: Vec<usize>,
}

impl Default for SweepGrid {
    /// Desk-scale version of the grid: the smaller epoch counts and batch sizes.
    fn default() -> Self {
        SweepGrid {
            epochs: vec![25, 50, 75, 100],
            dropout: vec![0.0, 0.1, 0.2, 0.3, 0.5],
            neurons: vec![32, 64, 128],
            batch_size: vec![32, 128],
        }
    }
}

impl SweepGrid {
    /// Every combination, epochs varying slowest and batch size fastest.
    pub fn cells(&self, base: &Hyperparameters) -> Vec<Hyperparameters> {
        let mut cells = Vec::new();
        for &epochs in &self.epochs {
            for &dropout in &self.dropout {
                for &neurons in &self.neurons {
                    for &batch_size in &self.batch_size {
                        cells.push(Hyperparameters {
                            epochs,
                            dropout,
                            neurons,
                            batch_size,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        cells
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty() || self.dropout.is_empty() || self.neurons.is_empty() || self.batch_size.is_empty()
    }
}

/// How a sweep cell is scored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Train on a train/validation/test split, score on the test part.
    Split { train: f64, val: f64, test: f64 },
    /// k-fold cross-validation, scored by the fold mean.
    Kfold { k: usize },
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol::Split {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// One dataset per provider; all must hold the same samples in the same order,
/// embedded differently.
pub struct ProviderData<'a> {
    pub provider: &'a str,
    pub samples: &'a [Sample],
}

/// Scores every grid cell for every provider. All cells share one data
/// partition, and cell `j` trains with a seed derived from `seed` and `j`
/// regardless of provider. A failing cell yields a row with its error and
/// does not stop the sweep. Rows are ordered by provider name, then cell.
pub fn sweep(
    grid: &SweepGrid,
    base: &Hyperparameters,
    providers: &[ProviderData<'_>],
    protocol: Protocol,
    seed: u64,
) -> Result<Vec<MetricsRow>, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::InsufficientData("empty sweep grid".into()));
    }
    let n = providers.first().map_or(0, |p| p.samples.len());
    for p in providers {
        let same = p.samples.len() == n
            && p.samples.iter().zip(providers[0].samples).all(|(a, b)| a.id == b.id && a.label == b.label);
        if !same {
            return Err(EvalError::InsufficientData(format!(
                "provider {} was given a different sample set",
                p.provider
            )));
        }
    }
    let partition_seed = derive_indexed(seed, "sweep-partition", 0);
    let split = match protocol {
        Protocol::Split { train, val, test } => Some(split_indices(n, (train, val, test), partition_seed)?),
        Protocol::Kfold { .. } => None,
    };
    let cells = grid.cells(base);
    let jobs: Vec<(usize, usize)> = (0..providers.len())
        .flat_map(|p| (0..cells.len()).map(move |c| (p, c)))
        .collect();
    let mut rows: Vec<(usize, MetricsRow)> = jobs
        .par_iter()
        .map(|&(p, c)| {
            let data = &providers[p];
            let hyper = Hyperparameters {
                seed: derive_indexed(seed, "sweep-cell", c),
                ..cells[c].clone()
            };
            let result = match (&split, protocol) {
                (Some((tr, va, te)), _) => {
                    let pick = |idx: &[usize]| idx.iter().map(|&i| data.samples[i].clone()).collect::<Vec<_>>();
                    let (train_set, val_set, test_set) = (pick(tr), pick(va), pick(te));
                    train(&train_set, &val_set, &hyper, data.provider)
                        .map_err(EvalError::from)
                        .and_then(|model| {
                            let predictions = predict_all(&model, &test_set)?;
                            let truths: Vec<Label> = test_set.iter().map(|s| s.label).collect();
                            MetricsRow::new(data.provider, Scope::Overall, &hyper, confusion(&predictions, &truths)?)
                        })
                }
                (None, Protocol::Kfold { k }) => kfold(data.samples, k, partition_seed, &hyper, data.provider)
                    .map(|mut r| r.pop().expect("kfold returns a mean row")),
                (None, Protocol::Split { .. }) => unreachable!("split protocol always has a partition"),
            };
            let row = result.unwrap_or_else(|e| {
                warn!("sweep cell {c} for {} failed: {e}", data.provider);
                MetricsRow::failed(data.provider, Scope::Overall, &hyper, format!("{}: {e}", e.kind()))
            });
            (c, row)
        })
        .collect();
    rows.sort_by(|(ca, a), (cb, b)| a.provider.cmp(&b.provider).then(ca.cmp(cb)));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}
