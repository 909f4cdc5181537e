//! wasm-bindgen exports for the static browser demo in `www/`.
//!
//! Each export takes plain strings and numbers from form fields and returns a
//! JSON document. The logic lives in ordinary functions so it can be tested
//! natively; the `#[wasm_bindgen]` wrappers only convert errors.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;
use wasm_bindgen::prelude::*;

use oncoseq::nn::weighted_softmax;
use oncoseq::pipeline::prepare;
use oncoseq::preprocess::compute_class_weights;
use oncoseq::progression::{build_stage_gene_matrix, heatmap_svg};
use oncoseq::synth::{generate, GeneratorConfig};
use oncoseq::train::roc_points;
use oncoseq::{PreprocessConfig, StageLabel};

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("cannot parse `{0}` as a number")]
    Number(String),
    #[error("{0}")]
    Invalid(String),
}

fn parse_list<T: FromStr>(raw: &str) -> Result<Vec<T>, DemoError> {
    raw.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| DemoError::Number(s.to_string())))
        .collect()
}

fn invalid(e: impl ToString) -> DemoError {
    DemoError::Invalid(e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("demo output serializes")
}

#[derive(Debug, Serialize)]
struct SoftmaxView {
    weights: Vec<f64>,
    weighted: Vec<f64>,
    plain: Vec<f64>,
}

/// Class weights from class sizes, then weighted and plain softmax of `logits`.
pub fn softmax_view(logits: &str, class_sizes: &str) -> Result<String, DemoError> {
    let v: Vec<f64> = parse_list(logits)?;
    let sizes: Vec<usize> = parse_list(class_sizes)?;
    if sizes.len() != v.len() {
        return Err(invalid(format!("{} logits but {} class sizes", v.len(), sizes.len())));
    }
    if !(1..=255).contains(&v.len()) {
        return Err(invalid("between 1 and 255 classes are supported"));
    }
    let stage_sizes: BTreeMap<StageLabel, usize> = sizes
        .iter()
        .enumerate()
        .map(|(i, &c)| (StageLabel::new(i as u8 + 1).expect("ordinal in range"), c))
        .collect();
    let weights = compute_class_weights(&stage_sizes).map_err(invalid)?.as_vec();
    let weighted = weighted_softmax(&v, &weights).map_err(invalid)?;
    let plain = weighted_softmax(&v, &vec![1.0; v.len()]).map_err(invalid)?;
    Ok(to_json(&SoftmaxView { weights, weighted, plain }))
}

#[derive(Debug, Serialize)]
struct HeatmapView {
    stages: Vec<u8>,
    genes: Vec<String>,
    values: Vec<Vec<f64>>,
    drivers: BTreeMap<u8, Vec<String>>,
    svg: String,
}

/// Generates a synthetic cohort, keeps its `top_x` significant genes and
/// returns the stage/gene frequency matrix of the training split.
pub fn heatmap_view(
    patients_per_stage: usize,
    drivers_per_stage: usize,
    noise_genes: usize,
    noise_per_patient: usize,
    top_x: usize,
    seed: u64,
) -> Result<String, DemoError> {
    if patients_per_stage > 2000 {
        return Err(invalid("at most 2000 patients per stage in the demo"));
    }
    let (cohort, truth) = generate(&GeneratorConfig {
        patients_per_stage,
        drivers_per_stage,
        n_noise_genes: noise_genes,
        noise_genes_per_patient: noise_per_patient,
        seed,
        ..Default::default()
    })
    .map_err(invalid)?;
    let cfg = PreprocessConfig {
        top_x: if top_x == 0 { usize::MAX } else { top_x },
        min_class_size: 1,
        seed,
        ..Default::default()
    };
    let prepared = prepare(&cohort, &cfg).map_err(invalid)?;
    let matrix = build_stage_gene_matrix(&prepared.train, &prepared.vocab, &prepared.cohort).map_err(invalid)?;
    Ok(to_json(&HeatmapView {
        stages: matrix.stages.iter().map(|s| s.ordinal()).collect(),
        genes: matrix.genes.clone(),
        values: matrix.values.clone(),
        drivers: truth.drivers,
        svg: heatmap_svg(&matrix),
    }))
}

#[derive(Debug, Serialize)]
struct RocView {
    points: Vec<(f64, f64)>,
    auc: f64,
}

/// ROC curve of `scores` against 0/1 `labels`.
pub fn roc_view(scores: &str, labels: &str) -> Result<String, DemoError> {
    let scores: Vec<f64> = parse_list(scores)?;
    let labels = parse_list::<u8>(labels)?
        .into_iter()
        .map(|l| match l {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(invalid("labels must be 0 or 1")),
        })
        .collect::<Result<Vec<bool>, _>>()?;
    let curve = roc_points(&scores, &labels).map_err(invalid)?;
    Ok(to_json(&RocView {
        points: curve.points,
        auc: curve.auc,
    }))
}

fn js(r: Result<String, DemoError>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = softmaxView)]
pub fn softmax_view_js(logits: &str, class_sizes: &str) -> Result<String, JsError> {
    js(softmax_view(logits, class_sizes))
}

#[wasm_bindgen(js_name = heatmapView)]
pub fn heatmap_view_js(
    patients_per_stage: usize,
    drivers_per_stage: usize,
    noise_genes: usize,
    noise_per_patient: usize,
    top_x: usize,
    seed: u32,
) -> Result<String, JsError> {
    js(heatmap_view(
        patients_per_stage,
        drivers_per_stage,
        noise_genes,
        noise_per_patient,
        top_x,
        u64::from(seed),
    ))
}

#[wasm_bindgen(js_name = rocView)]
pub fn roc_view_js(scores: &str, labels: &str) -> Result<String, JsError> {
    js(roc_view(scores, labels))
}
