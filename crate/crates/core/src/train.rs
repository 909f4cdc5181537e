//! Training loop, evaluation report and one-vs-rest ROC curves.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::StageLabel;
use crate::nn::{adam_step, forward, loss_and_grads, AdamState, Mode, ModelParams, NnError, Sample};
use crate::preprocess::{ClassWeights, EncodedDataset};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset has {dataset} classes but {weights} class weights were given")]
    ClassMismatch { dataset: usize, weights: usize },
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("ROC needs both positive and negative labels")]
    OneClassOnly,
    #[error("class {0} has no test samples")]
    MissingClass(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            shuffle_each_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Mini-batch Adam over `cfg.epochs` epochs. Returns the trained parameters
/// and the mean training loss of each epoch.
pub fn train(
    train_ds: &EncodedDataset,
    params: &ModelParams,
    weights: &ClassWeights,
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<f64>), TrainError> {
    cfg.validate()?;
    let class_weights = weights.as_vec();
    if class_weights.len() != train_ds.num_classes() || class_weights.len() != params.dims().classes {
        return Err(TrainError::ClassMismatch {
            dataset: train_ds.num_classes(),
            weights: class_weights.len(),
        });
    }
    if train_ds.is_empty() {
        return Err(TrainError::InvalidConfig("training set is empty".into()));
    }
    let mut params = params.clone();
    params.class_weights = class_weights;
    params.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&params);
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| Sample {
                    tokens: &train_ds.sequences[i],
                    label: train_ds.labels[i],
                })
                .collect();
            let (loss, grads) = match loss_and_grads(&batch, &params) {
                Ok(r) => r,
                Err(NnError::NonFinite(_)) => return Err(TrainError::NonFiniteLoss { epoch }),
                Err(e) => return Err(e.into()),
            };
            adam_step(&mut params, &grads, &mut state, cfg.learning_rate)?;
            epoch_loss += loss * chunk.len() as f64;
        }
        let mean = epoch_loss / train_ds.len() as f64;
        if !mean.is_finite() || !params.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        history.push(mean);
    }
    Ok((params, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub class_id: usize,
    /// `(false positive rate, true positive rate)` from the strictest threshold down.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps thresholds over the distinct scores in descending order; tied
/// scores form one point. The area is the trapezoidal sum.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<RocCurve, TrainError> {
    if scores.len() != labels.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        ))
        .into());
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(TrainError::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(RocCurve {
        class_id: 0,
        points,
        auc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Stage of each class id.
    pub class_map: Vec<StageLabel>,
    pub per_class: Vec<RocCurve>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub n_test: usize,
}

impl EvalReport {
    pub fn mean_auc(&self) -> f64 {
        self.per_class.iter().map(|r| r.auc).sum::<f64>() / self.per_class.len() as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `class,fpr,tpr` rows for one class.
    pub fn roc_csv(&self, class_id: usize) -> String {
        let mut out = String::from("class,fpr,tpr\n");
        for &(fpr, tpr) in &self.per_class[class_id].points {
            out.push_str(&format!("{},{fpr},{tpr}\n", self.class_map[class_id]));
        }
        out
    }
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Inference-mode class probabilities for every sequence, split across
/// `threads` workers. Output does not depend on the thread count.
pub fn predict_proba(
    ds: &EncodedDataset,
    params: &ModelParams,
    threads: usize,
) -> Result<Vec<Vec<f64>>, TrainError> {
    let threads = threads.max(1);
    if threads == 1 || ds.len() < 2 {
        return ds
            .sequences
            .iter()
            .map(|s| forward(s, params, Mode::Inference).map_err(TrainError::from))
            .collect();
    }
    let chunk = ds.len().div_ceil(threads);
    let parts: Vec<Result<Vec<Vec<f64>>, TrainError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ds
            .sequences
            .chunks(chunk)
            .map(|seqs| {
                scope.spawn(move || {
                    seqs.iter()
                        .map(|s| forward(s, params, Mode::Inference).map_err(TrainError::from))
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(ds.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

pub fn evaluate(test_ds: &EncodedDataset, params: &ModelParams) -> Result<EvalReport, TrainError> {
    evaluate_with_threads(test_ds, params, 1)
}

pub fn evaluate_with_threads(
    test_ds: &EncodedDataset,
    params: &ModelParams,
    threads: usize,
) -> Result<EvalReport, TrainError> {
    if test_ds.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    let k = test_ds.num_classes();
    if params.dims().classes != k {
        return Err(TrainError::ClassMismatch {
            dataset: k,
            weights: params.dims().classes,
        });
    }
    let probs = predict_proba(test_ds, params, threads)?;
    report_from_probabilities(&probs, &test_ds.labels, &test_ds.class_map)
}

/// Accuracy, confusion matrix and per-class ROC from predicted probabilities.
pub fn report_from_probabilities(
    probs: &[Vec<f64>],
    labels: &[usize],
    class_map: &[StageLabel],
) -> Result<EvalReport, TrainError> {
    if probs.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    let k = class_map.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (p, &y) in probs.iter().zip(labels) {
        confusion[y][argmax(p)] += 1;
    }
    if let Some(c) = (0..k).find(|&c| confusion[c].iter().sum::<usize>() == 0) {
        return Err(TrainError::MissingClass(c));
    }
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let per_class = (0..k)
        .map(|c| {
            let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let truth: Vec<bool> = labels.iter().map(|&y| y == c).collect();
            roc_points(&scores, &truth).map(|r| RocCurve { class_id: c, ..r })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport {
        accuracy: correct as f64 / probs.len() as f64,
        class_map: class_map.to_vec(),
        per_class,
        confusion,
        n_test: probs.len(),
    })
}

/// Per-epoch loss as `epoch,mean_loss` rows, epochs numbered from 1.
pub fn loss_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!("{},{l}\n", i + 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roc_fixture() {
        let r = roc_points(&[0.9, 0.8, 0.4, 0.3], &[true, false, true, false]).unwrap();
        assert_eq!(r.auc, 0.75);
        assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn roc_separable_and_tied() {
        let r = roc_points(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert!(r.points.contains(&(0.0, 1.0)));
        let r = roc_points(&[0.5; 4], &[true, false, false, true]).unwrap();
        assert_eq!(r.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(r.auc, 0.5);
    }

    #[test]
    fn roc_needs_both_classes() {
        assert_eq!(roc_points(&[0.1, 0.2], &[true, true]), Err(TrainError::OneClassOnly));
    }

    #[test]
    fn report_from_perfect_and_uniform_scores() {
        let s = |n| StageLabel::new(n).unwrap();
        let labels = [0, 1, 2, 0, 1, 2];
        let perfect: Vec<Vec<f64>> = labels
            .iter()
            .map(|&y| (0..3).map(|c| if c == y { 1.0 } else { 0.0 }).collect())
            .collect();
        let r = report_from_probabilities(&perfect, &labels, &[s(1), s(2), s(3)]).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.per_class.iter().all(|c| c.auc == 1.0));

        let uniform = vec![vec![1.0 / 3.0; 3]; 6];
        let r = report_from_probabilities(&uniform, &labels, &[s(1), s(2), s(3)]).unwrap();
        assert!(r.per_class.iter().all(|c| c.auc == 0.5));
        for (c, row) in r.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), labels.iter().filter(|&&y| y == c).count());
        }
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert_eq!(TrainConfig::default().epochs, 200);
    }

    #[test]
    fn loss_csv_format() {
        assert_eq!(loss_csv(&[0.5, 0.25]), "epoch,mean_loss\n1,0.5\n2,0.25\n");
    }
}
