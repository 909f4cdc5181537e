use serde::{Deserialize, Serialize};

use super::{ModelDims, ModelParams, NnError, TENSOR_NAMES};
use crate::cohort::StageLabel;
use crate::preprocess::MutationVocabulary;

pub const CHECKPOINT_FORMAT: &str = "oncoseq-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Trained model plus what is needed to use it: the class-to-stage map and a
/// fingerprint of the vocabulary its embedding rows were built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub vocab_fingerprint: String,
    pub stages: Vec<StageLabel>,
    pub dims: ModelDims,
    pub class_weights: Vec<f64>,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, vocab: &MutationVocabulary, stages: &[StageLabel]) -> Self {
        let d = params.dims();
        let shapes = [
            (d.vocab, d.embed),
            (d.embed, 4 * d.hidden),
            (d.hidden, 4 * d.hidden),
            (1, 4 * d.hidden),
            (d.embed, 4 * d.hidden),
            (d.hidden, 4 * d.hidden),
            (1, 4 * d.hidden),
            (2 * d.hidden, d.dense),
            (1, d.dense),
            (d.dense, d.classes),
            (1, d.classes),
        ];
        let tensors = params
            .tensors()
            .iter()
            .zip(TENSOR_NAMES)
            .zip(shapes)
            .map(|((data, name), (rows, cols))| TensorRecord {
                name: name.to_string(),
                rows,
                cols,
                data: data.to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            vocab_fingerprint: vocab.fingerprint(),
            stages: stages.to_vec(),
            dims: d,
            class_weights: params.class_weights.clone(),
            tensors,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))
    }

    /// Rebuilds the parameters, refusing a vocabulary other than the one trained on.
    pub fn to_params(&self, vocab: &MutationVocabulary) -> Result<ModelParams, NnError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!("unsupported format `{}`", self.format)));
        }
        if self.vocab_fingerprint != vocab.fingerprint() {
            return Err(NnError::Checkpoint("vocabulary does not match checkpoint".into()));
        }
        if self.dims.vocab != vocab.size() || self.stages.len() != self.dims.classes {
            return Err(NnError::Checkpoint("dimensions disagree with vocabulary or stages".into()));
        }
        let mut params = ModelParams::zeros(self.dims);
        params.class_weights = self.class_weights.clone();
        if self.tensors.len() != TENSOR_NAMES.len() {
            return Err(NnError::Checkpoint(format!("expected {} tensors", TENSOR_NAMES.len())));
        }
        for (slot, rec) in params.tensors_mut().into_iter().zip(&self.tensors) {
            if rec.data.len() != slot.len() || rec.rows * rec.cols != slot.len() {
                return Err(NnError::Checkpoint(format!("tensor `{}` has the wrong size", rec.name)));
            }
            slot.copy_from_slice(&rec.data);
        }
        params.validate()?;
        if !params.is_finite() {
            return Err(NnError::NonFinite("checkpoint parameters".into()));
        }
        Ok(params)
    }
}
