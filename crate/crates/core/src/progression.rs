//! Stage-conditional gene frequencies, future-mutation prediction and heatmap output.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Cohort, StageLabel};
use crate::preprocess::{EncodedDataset, MutationVocabulary};

pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum ProgressionError {
    #[error("stage {0} has no training patients")]
    EmptyStage(StageLabel),
    #[error("stage {0} is not present in the matrix")]
    UnknownStage(StageLabel),
    #[error("patient `{0}` is not in the cohort")]
    UnknownPatient(String),
    #[error("heatmap parse error: {0}")]
    Parse(String),
}

/// Fraction of each stage's training patients carrying each gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGeneMatrix {
    pub stages: Vec<StageLabel>,
    pub genes: Vec<String>,
    /// `stages × genes`
    pub values: Vec<Vec<f64>>,
}

impl StageGeneMatrix {
    pub fn row(&self, stage: StageLabel) -> Option<&[f64]> {
        self.stages
            .iter()
            .position(|&s| s == stage)
            .map(|i| self.values[i].as_slice())
    }

    pub fn get(&self, stage: StageLabel, gene: &str) -> Option<f64> {
        let g = self.genes.iter().position(|x| x == gene)?;
        self.row(stage).map(|r| r[g])
    }
}

/// Matrix over the vocabulary genes from the training partition's patients.
pub fn build_stage_gene_matrix(
    train_ds: &EncodedDataset,
    vocab: &MutationVocabulary,
    cohort: &Cohort,
) -> Result<StageGeneMatrix, ProgressionError> {
    let genes = vocab.genes().to_vec();
    let mut values = vec![vec![0.0; genes.len()]; train_ds.num_classes()];
    let mut sizes = vec![0usize; train_ds.num_classes()];
    for (pid, &class) in train_ds.patient_ids.iter().zip(&train_ds.labels) {
        let patient = cohort
            .patient(pid)
            .ok_or_else(|| ProgressionError::UnknownPatient(pid.clone()))?;
        sizes[class] += 1;
        let carried: HashSet<&str> = patient.mutations.iter().map(String::as_str).collect();
        for (v, g) in values[class].iter_mut().zip(&genes) {
            if carried.contains(g.as_str()) {
                *v += 1.0;
            }
        }
    }
    for (class, row) in values.iter_mut().enumerate() {
        if sizes[class] == 0 {
            return Err(ProgressionError::EmptyStage(train_ds.class_map[class]));
        }
        row.iter_mut().for_each(|v| *v /= sizes[class] as f64);
    }
    Ok(StageGeneMatrix {
        stages: train_ds.class_map.clone(),
        genes,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FutureMutation {
    pub gene: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionPrediction {
    pub patient_id: String,
    pub predicted_stage: StageLabel,
    /// Descending probability, ties by gene symbol.
    pub future: Vec<FutureMutation>,
}

/// Genes at or above `threshold` in the predicted stage's row that the patient
/// does not already carry. The matrix supplies the scores, so any stage × gene
/// score table can stand in for plain frequencies.
pub fn predict_future(
    patient_id: &str,
    patient_genes: &[String],
    predicted_stage: StageLabel,
    matrix: &StageGeneMatrix,
    threshold: f64,
) -> Result<ProgressionPrediction, ProgressionError> {
    let row = matrix
        .row(predicted_stage)
        .ok_or(ProgressionError::UnknownStage(predicted_stage))?;
    let carried: HashSet<&str> = patient_genes.iter().map(String::as_str).collect();
    let mut future: Vec<FutureMutation> = matrix
        .genes
        .iter()
        .zip(row)
        .filter(|(g, &p)| p >= threshold && !carried.contains(g.as_str()))
        .map(|(g, &p)| FutureMutation {
            gene: g.clone(),
            probability: p,
        })
        .collect();
    future.sort_by(|a, b| b.probability.total_cmp(&a.probability).then_with(|| a.gene.cmp(&b.gene)));
    Ok(ProgressionPrediction {
        patient_id: patient_id.to_string(),
        predicted_stage,
        future,
    })
}

/// `stage,<gene...>` header then one row per stage, four decimals.
pub fn heatmap_csv(matrix: &StageGeneMatrix) -> String {
    let mut out = String::from("stage");
    for g in &matrix.genes {
        out.push(',');
        out.push_str(g);
    }
    out.push('\n');
    for (stage, row) in matrix.stages.iter().zip(&matrix.values) {
        out.push_str(&stage.to_string());
        for v in row {
            let _ = write!(out, ",{v:.4}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_heatmap_csv(text: &str) -> Result<StageGeneMatrix, ProgressionError> {
    let err = |m: String| ProgressionError::Parse(m);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err("empty file".into()))?;
    let mut cols = header.split(',');
    if cols.next() != Some("stage") {
        return Err(err("first column must be `stage`".into()));
    }
    let genes: Vec<String> = cols.map(str::to_string).collect();
    let mut stages = Vec::new();
    let mut values = Vec::new();
    for (n, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let stage = fields
            .next()
            .and_then(StageLabel::parse)
            .ok_or_else(|| err(format!("bad stage on row {}", n + 2)))?;
        let row: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|e| err(format!("row {}: {e}", n + 2))))
            .collect::<Result<_, _>>()?;
        if row.len() != genes.len() {
            return Err(err(format!("row {} has {} values", n + 2, row.len())));
        }
        stages.push(stage);
        values.push(row);
    }
    Ok(StageGeneMatrix { stages, genes, values })
}

/// Cell grid on a linear white-to-red ramp, stages down the side, genes along the bottom.
pub fn heatmap_svg(matrix: &StageGeneMatrix) -> String {
    const CELL: usize = 18;
    const LEFT: usize = 70;
    const TOP: usize = 10;
    let label_space = 8 * matrix.genes.iter().map(String::len).max().unwrap_or(0) + 10;
    let width = LEFT + CELL * matrix.genes.len() + 10;
    let height = TOP + CELL * matrix.stages.len() + label_space;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    for (r, (stage, row)) in matrix.stages.iter().zip(&matrix.values).enumerate() {
        let y = TOP + r * CELL;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">Stage {}</text>",
            LEFT - 6,
            y + CELL - 5,
            stage.roman()
        );
        for (c, &v) in row.iter().enumerate() {
            let v = v.clamp(0.0, 1.0);
            let fade = (255.0 * (1.0 - v)).round() as u8;
            let _ = writeln!(
                svg,
                "<rect x=\"{}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"rgb(255,{fade},{fade})\"><title>{}: {v:.4}</title></rect>",
                LEFT + c * CELL,
                matrix.genes[c]
            );
        }
    }
    let base = TOP + CELL * matrix.stages.len() + 4;
    for (c, g) in matrix.genes.iter().enumerate() {
        let x = LEFT + c * CELL + CELL / 2;
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{base}\" transform=\"rotate(90 {x} {base})\">{g}</text>"
        );
    }
    svg.push_str("</svg>\n");
    svg
}
