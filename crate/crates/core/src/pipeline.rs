//! End-to-end orchestration: stage filtering, vocabulary, split, training,
//! evaluation, progression prediction and the top-x ablation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Cohort;
use crate::nn::{ModelDims, ModelParams, NnError};
use crate::preprocess::{
    build_significant_set, compute_class_weights, count_frequencies, encode_with, filter_small_stages,
    oversample, percentile_max_len, split_indices, ClassWeights, EncodedDataset, FrequencyTable,
    MutationVocabulary, PreprocessConfig, PreprocessError, SplitManifest, MAX_LEN_CAP,
};
use crate::progression::{
    build_stage_gene_matrix, predict_future, ProgressionError, ProgressionPrediction, StageGeneMatrix,
    DEFAULT_THRESHOLD,
};
use crate::train::{argmax, evaluate_with_threads, predict_proba, train, EvalReport, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Progression(#[from] ProgressionError),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub embed: usize,
    pub hidden: usize,
    pub dense: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            embed: 256,
            hidden: 64,
            dense: 64,
        }
    }
}

impl ModelShape {
    pub fn dims(&self, vocab: usize, classes: usize) -> ModelDims {
        ModelDims {
            vocab,
            embed: self.embed,
            hidden: self.hidden,
            dense: self.dense,
            classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub train: TrainConfig,
    pub model: ModelShape,
    pub threshold: f64,
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preprocess: PreprocessConfig::default(),
            train: TrainConfig::default(),
            model: ModelShape::default(),
            threshold: DEFAULT_THRESHOLD,
            threads: 1,
        }
    }
}

/// Chooses the single cancer type to run. Without a request the cohort must
/// contain exactly one type. The type must have `min_class_size` patients.
pub fn select_cancer_type(
    cohort: &Cohort,
    requested: Option<&str>,
    min_class_size: usize,
) -> Result<Cohort, PipelineError> {
    let sizes = cohort.cancer_type_sizes();
    let chosen = match requested {
        Some(t) => t.to_string(),
        None if sizes.len() == 1 => sizes.keys().next().cloned().unwrap_or_default(),
        None => {
            return Err(PipelineError::Input(format!(
                "cohort has several cancer types, pick one of: {}",
                cohort.eligible_cancer_types(min_class_size).join(", ")
            )))
        }
    };
    let n = sizes.get(&chosen).copied().unwrap_or(0);
    if n == 0 {
        return Err(PipelineError::Input(format!("no patients of cancer type `{chosen}`")));
    }
    if n < min_class_size {
        return Err(PipelineError::Input(format!(
            "cancer type `{chosen}` has {n} patients, fewer than the minimum {min_class_size}"
        )));
    }
    Ok(cohort.restrict_to_type(&chosen))
}

/// Everything the network and the downstream stages consume.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    /// Cohort after small-stage removal.
    pub cohort: Cohort,
    pub frequencies: FrequencyTable,
    pub vocab: MutationVocabulary,
    pub train: EncodedDataset,
    pub test: EncodedDataset,
    pub weights: ClassWeights,
    pub manifest: SplitManifest,
}

pub fn prepare(cohort: &Cohort, cfg: &PreprocessConfig) -> Result<Prepared, PipelineError> {
    cfg.validate()?;
    let filtered = filter_small_stages(cohort, cfg)?;
    let frequencies = count_frequencies(&filtered)?;
    let vocab = build_significant_set(&frequencies, cfg);
    let full = encode_with(&filtered, &vocab, cfg.max_len.unwrap_or(MAX_LEN_CAP), cfg.unselected);
    let (train_idx, test_idx) = split_indices(&full.labels, &full.class_map, cfg)?;
    let max_len = match cfg.max_len {
        Some(n) => n,
        None => percentile_max_len(&train_idx.iter().map(|&i| full.lengths[i]).collect::<Vec<_>>()),
    };
    let mut train = full.subset(&train_idx).with_max_len(max_len);
    let test = full.subset(&test_idx).with_max_len(max_len);
    let manifest = SplitManifest {
        seed: cfg.seed,
        train: train.patient_ids.clone(),
        test: test.patient_ids.clone(),
    };
    if cfg.oversample {
        train = oversample(&train, cfg.seed);
    }
    let weights = compute_class_weights(&train.stage_sizes())?;
    Ok(Prepared {
        cohort: filtered,
        frequencies,
        vocab,
        train,
        test,
        weights,
        manifest,
    })
}

/// Initializes from `cfg.train.seed` and trains on the prepared training split.
pub fn fit(prepared: &Prepared, cfg: &PipelineConfig) -> Result<(ModelParams, Vec<f64>), PipelineError> {
    let dims = cfg.model.dims(prepared.vocab.size(), prepared.train.num_classes());
    let init = ModelParams::init(dims, prepared.weights.as_vec(), cfg.train.seed)?;
    Ok(train(&prepared.train, &init, &prepared.weights, &cfg.train)?)
}

/// Future mutations for every patient in `ds`, at the stage the model predicts.
pub fn predict_progressions(
    ds: &EncodedDataset,
    cohort: &Cohort,
    params: &ModelParams,
    matrix: &StageGeneMatrix,
    threshold: f64,
    threads: usize,
) -> Result<Vec<ProgressionPrediction>, PipelineError> {
    let probs = predict_proba(ds, params, threads)?;
    ds.patient_ids
        .iter()
        .zip(&probs)
        .map(|(pid, p)| {
            let patient = cohort
                .patient(pid)
                .ok_or_else(|| PipelineError::Input(format!("patient `{pid}` missing from cohort")))?;
            let stage = ds.class_map[argmax(p)];
            Ok(predict_future(pid, &patient.mutations, stage, matrix, threshold)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub prepared: Prepared,
    pub params: ModelParams,
    pub history: Vec<f64>,
    pub report: EvalReport,
    pub matrix: StageGeneMatrix,
    /// One per test patient.
    pub predictions: Vec<ProgressionPrediction>,
}

pub fn run(cohort: &Cohort, cfg: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    let prepared = prepare(cohort, &cfg.preprocess)?;
    let (params, history) = fit(&prepared, cfg)?;
    let report = evaluate_with_threads(&prepared.test, &params, cfg.threads)?;
    let matrix = build_stage_gene_matrix(&prepared.train, &prepared.vocab, &prepared.cohort)?;
    let predictions = predict_progressions(
        &prepared.test,
        &prepared.cohort,
        &params,
        &matrix,
        cfg.threshold,
        cfg.threads,
    )?;
    Ok(PipelineRun {
        prepared,
        params,
        history,
        report,
        matrix,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `usize::MAX` means no filtering.
    pub top_x: usize,
    pub vocab_genes: usize,
    pub accuracy: f64,
    pub mean_auc: f64,
}

/// Runs the full pipeline once per `top_x`. The split depends only on the
/// seed and the labels, so every row shares the same partition.
pub fn ablation_run(cohort: &Cohort, grid: &[usize], cfg: &PipelineConfig) -> Result<Vec<AblationRow>, PipelineError> {
    if grid.is_empty() {
        return Err(PipelineError::Input("ablation grid is empty".into()));
    }
    grid.iter()
        .map(|&x| {
            let mut c = cfg.clone();
            c.preprocess.top_x = x;
            let prepared = prepare(cohort, &c.preprocess)?;
            let (params, _) = fit(&prepared, &c)?;
            let report = evaluate_with_threads(&prepared.test, &params, c.threads)?;
            Ok(AblationRow {
                top_x: x,
                vocab_genes: prepared.vocab.genes().len(),
                accuracy: report.accuracy,
                mean_auc: report.mean_auc(),
            })
        })
        .collect()
}

pub fn format_top_x(x: usize) -> String {
    if x == usize::MAX {
        "all".to_string()
    } else {
        x.to_string()
    }
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("top_x,vocab_genes,accuracy,mean_auc\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6}\n",
            format_top_x(r.top_x),
            r.vocab_genes,
            r.accuracy,
            r.mean_auc
        ));
    }
    out
}
