use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, NnError};
use crate::preprocess::PAD;

/// Layer widths of the stage classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Token count including PAD and UNK.
    pub vocab: usize,
    pub embed: usize,
    /// Hidden width of each LSTM direction.
    pub hidden: usize,
    pub dense: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn new(vocab: usize, classes: usize) -> Self {
        ModelDims {
            vocab,
            embed: 256,
            hidden: 64,
            dense: 64,
            classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    /// `vocab × embed`; the PAD row stays zero.
    pub weight: Matrix,
}

/// One LSTM direction. Gate blocks are laid out along the column axis in the
/// order input, forget, cell candidate, output, each `hidden` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `input × 4·hidden`
    pub w_input: Matrix,
    /// `hidden × 4·hidden`
    pub w_recurrent: Matrix,
    /// `4·hidden`
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Candidate = 2,
    Output = 3,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_input: Matrix::zeros(input, 4 * hidden),
            w_recurrent: Matrix::zeros(hidden, 4 * hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_recurrent.rows()
    }

    pub fn input(&self) -> usize {
        self.w_input.rows()
    }

    /// Column range of a gate block.
    pub fn gate_cols(&self, gate: Gate) -> std::ops::Range<usize> {
        let h = self.hidden();
        let g = gate as usize;
        g * h..(g + 1) * h
    }

    fn check(&self) -> Result<(), NnError> {
        let h = self.hidden();
        if self.w_recurrent.cols() != 4 * h || self.w_input.cols() != 4 * h || self.bias.len() != 4 * h {
            return Err(NnError::ShapeMismatch(format!(
                "lstm blocks inconsistent with hidden width {h}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `in × out`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(input: usize, output: usize) -> Self {
        DenseParams {
            weight: Matrix::zeros(input, output),
            bias: vec![0.0; output],
        }
    }
}

/// Embedding, bidirectional LSTM, ReLU dense layer and weighted-softmax output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: EmbeddingParams,
    pub forward_lstm: LstmParams,
    pub backward_lstm: LstmParams,
    pub dense1: DenseParams,
    pub dense2: DenseParams,
    /// Per-class exponent weights of the training softmax. Not trained.
    pub class_weights: Vec<f64>,
}

/// Gradients share the parameter layout; `class_weights` is carried but never differentiated.
pub type Gradients = ModelParams;

pub const TENSOR_NAMES: [&str; 11] = [
    "embedding",
    "forward_lstm.w_input",
    "forward_lstm.w_recurrent",
    "forward_lstm.bias",
    "backward_lstm.w_input",
    "backward_lstm.w_recurrent",
    "backward_lstm.bias",
    "dense1.weight",
    "dense1.bias",
    "dense2.weight",
    "dense2.bias",
];

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        ModelParams {
            embedding: EmbeddingParams {
                weight: Matrix::zeros(dims.vocab, dims.embed),
            },
            forward_lstm: LstmParams::zeros(dims.embed, dims.hidden),
            backward_lstm: LstmParams::zeros(dims.embed, dims.hidden),
            dense1: DenseParams::zeros(2 * dims.hidden, dims.dense),
            dense2: DenseParams::zeros(dims.dense, dims.classes),
            class_weights: vec![1.0; dims.classes],
        }
    }

    /// Embeddings uniform in ±0.05, other weights uniform in ±1/√fan_in,
    /// biases zero except the forget gate at 1.
    pub fn init(dims: ModelDims, class_weights: Vec<f64>, seed: u64) -> Result<Self, NnError> {
        if class_weights.len() != dims.classes {
            return Err(NnError::ShapeMismatch(format!(
                "{} class weights for {} classes",
                class_weights.len(),
                dims.classes
            )));
        }
        if let Some((i, &w)) = class_weights.iter().enumerate().find(|(_, &w)| !(w > 0.0 && w.is_finite())) {
            return Err(NnError::NonPositiveWeight { index: i, weight: w });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::zeros(dims);
        p.class_weights = class_weights;
        let mut fill = |m: &mut [f64], bound: f64| {
            for v in m {
                *v = rng.gen_range(-bound..bound);
            }
        };
        fill(p.embedding.weight.data_mut(), 0.05);
        if dims.vocab > PAD {
            p.embedding.weight.row_mut(PAD).fill(0.0);
        }
        for lstm in [&mut p.forward_lstm, &mut p.backward_lstm] {
            fill(lstm.w_input.data_mut(), 1.0 / (dims.embed as f64).sqrt());
            fill(lstm.w_recurrent.data_mut(), 1.0 / (dims.hidden as f64).sqrt());
            let forget = lstm.gate_cols(Gate::Forget);
            lstm.bias[forget].fill(1.0);
        }
        fill(p.dense1.weight.data_mut(), 1.0 / (2.0 * dims.hidden as f64).sqrt());
        fill(p.dense2.weight.data_mut(), 1.0 / (dims.dense as f64).sqrt());
        Ok(p)
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab: self.embedding.weight.rows(),
            embed: self.embedding.weight.cols(),
            hidden: self.forward_lstm.hidden(),
            dense: self.dense1.bias.len(),
            classes: self.dense2.bias.len(),
        }
    }

    /// Zero tensors of the same shapes, for gradient accumulation.
    pub fn zeros_like(&self) -> Self {
        let mut z = ModelParams::zeros(self.dims());
        z.class_weights = self.class_weights.clone();
        z
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let d = self.dims();
        self.forward_lstm.check()?;
        self.backward_lstm.check()?;
        let ok = self.forward_lstm.input() == d.embed
            && self.backward_lstm.input() == d.embed
            && self.backward_lstm.hidden() == d.hidden
            && self.dense1.weight.shape() == (2 * d.hidden, d.dense)
            && self.dense2.weight.shape() == (d.dense, d.classes)
            && self.class_weights.len() == d.classes;
        if !ok {
            return Err(NnError::ShapeMismatch("layer shapes do not chain".into()));
        }
        if let Some((i, &w)) = self.class_weights.iter().enumerate().find(|(_, &w)| !(w > 0.0)) {
            return Err(NnError::NonPositiveWeight { index: i, weight: w });
        }
        Ok(())
    }

    /// Trainable tensors in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [&[f64]; 11] {
        [
            self.embedding.weight.data(),
            self.forward_lstm.w_input.data(),
            self.forward_lstm.w_recurrent.data(),
            &self.forward_lstm.bias,
            self.backward_lstm.w_input.data(),
            self.backward_lstm.w_recurrent.data(),
            &self.backward_lstm.bias,
            self.dense1.weight.data(),
            &self.dense1.bias,
            self.dense2.weight.data(),
            &self.dense2.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 11] {
        [
            self.embedding.weight.data_mut(),
            self.forward_lstm.w_input.data_mut(),
            self.forward_lstm.w_recurrent.data_mut(),
            &mut self.forward_lstm.bias,
            self.backward_lstm.w_input.data_mut(),
            self.backward_lstm.w_recurrent.data_mut(),
            &mut self.backward_lstm.bias,
            self.dense1.weight.data_mut(),
            &mut self.dense1.bias,
            self.dense2.weight.data_mut(),
            &mut self.dense2.bias,
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}
