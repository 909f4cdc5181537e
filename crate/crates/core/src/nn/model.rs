//! Classifier forward pass, weighted softmax and batched backpropagation.

use super::lstm::{bilstm, recur, recur_backward};
use super::{EmbeddingParams, Gradients, Matrix, ModelParams, NnError};
use crate::preprocess::PAD;

/// Which softmax weights the output layer applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Class weights scale the exponents.
    Train,
    /// Uniform weights; plain softmax.
    Inference,
}

#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub tokens: &'a [usize],
    pub label: usize,
}

/// One past the last non-PAD token.
pub fn valid_len(tokens: &[usize]) -> usize {
    tokens.iter().rposition(|&t| t != PAD).map_or(0, |i| i + 1)
}

/// Row lookup of each token id; a one-hot vector times the weight matrix.
pub fn embed(token_ids: &[usize], p: &EmbeddingParams) -> Result<Matrix, NnError> {
    let n = p.weight.rows();
    let mut out = Matrix::zeros(token_ids.len(), p.weight.cols());
    for (t, &id) in token_ids.iter().enumerate() {
        if id >= n {
            return Err(NnError::IndexOutOfRange { id, size: n });
        }
        out.row_mut(t).copy_from_slice(p.weight.row(id));
    }
    Ok(out)
}

/// `P_i = exp(v_i w_i) / Σ_j exp(v_j w_j)`, shifted by the largest product.
pub fn weighted_softmax(v: &[f64], w: &[f64]) -> Result<Vec<f64>, NnError> {
    if v.len() != w.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{} logits but {} weights",
            v.len(),
            w.len()
        )));
    }
    if let Some((index, &weight)) = w.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x.is_finite())) {
        return Err(NnError::NonPositiveWeight { index, weight });
    }
    let z: Vec<f64> = v.iter().zip(w).map(|(a, b)| a * b).collect();
    Ok(softmax(&z))
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax_at(z: &[f64], i: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = z.iter().map(|x| (x - max).exp()).sum();
    z[i] - max - total.ln()
}

fn check_tokens(tokens: &[usize], vocab: usize) -> Result<(), NnError> {
    match tokens.iter().find(|&&t| t >= vocab) {
        Some(&id) => Err(NnError::IndexOutOfRange { id, size: vocab }),
        None => Ok(()),
    }
}

struct DenseTrace {
    pre_relu: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn dense_head(pooled: &[f64], p: &ModelParams) -> DenseTrace {
    let mut pre_relu = p.dense1.bias.clone();
    p.dense1.weight.vec_mul_acc(pooled, &mut pre_relu);
    let hidden: Vec<f64> = pre_relu.iter().map(|&a| a.max(0.0)).collect();
    let mut logits = p.dense2.bias.clone();
    p.dense2.weight.vec_mul_acc(&hidden, &mut logits);
    DenseTrace {
        pre_relu,
        hidden,
        logits,
    }
}

/// Pooled bidirectional representation of one token sequence.
pub fn pooled_representation(tokens: &[usize], params: &ModelParams) -> Result<Vec<f64>, NnError> {
    check_tokens(tokens, params.dims().vocab)?;
    let len = valid_len(tokens);
    let x = embed(&tokens[..len], &params.embedding)?;
    let (_, pooled) = bilstm(&x, &params.forward_lstm, &params.backward_lstm, len)?;
    Ok(pooled)
}

/// Output-layer activations before the softmax.
pub fn logits(tokens: &[usize], params: &ModelParams) -> Result<Vec<f64>, NnError> {
    let pooled = pooled_representation(tokens, params)?;
    Ok(dense_head(&pooled, params).logits)
}

/// Class probabilities for one token sequence.
pub fn forward(tokens: &[usize], params: &ModelParams, mode: Mode) -> Result<Vec<f64>, NnError> {
    let v = logits(tokens, params)?;
    let probs = match mode {
        Mode::Train => weighted_softmax(&v, &params.class_weights)?,
        Mode::Inference => softmax(&v),
    };
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(NnError::NonFinite("forward probabilities".into()));
    }
    Ok(probs)
}

/// Input pre-activations of each distinct token in a batch, per direction.
struct TokenProjections {
    slot_of: Vec<usize>,
    ids: Vec<usize>,
    fwd: Vec<f64>,
    bwd: Vec<f64>,
}

impl TokenProjections {
    fn build(batch: &[Sample<'_>], params: &ModelParams) -> Self {
        let vocab = params.embedding.weight.rows();
        let g = 4 * params.forward_lstm.hidden();
        let mut slot_of = vec![usize::MAX; vocab];
        let mut ids = Vec::new();
        for s in batch {
            for &t in &s.tokens[..valid_len(s.tokens)] {
                if slot_of[t] == usize::MAX {
                    slot_of[t] = ids.len();
                    ids.push(t);
                }
            }
        }
        let mut fwd = Vec::with_capacity(ids.len() * g);
        let mut bwd = Vec::with_capacity(ids.len() * g);
        for &id in &ids {
            let e = params.embedding.weight.row(id);
            for (buf, lstm) in [(&mut fwd, &params.forward_lstm), (&mut bwd, &params.backward_lstm)] {
                let start = buf.len();
                buf.extend_from_slice(&lstm.bias);
                lstm.w_input.vec_mul_acc(e, &mut buf[start..start + g]);
            }
        }
        TokenProjections { slot_of, ids, fwd, bwd }
    }

    fn gather(&self, table: &[f64], tokens: &[usize], g: usize) -> Vec<f64> {
        let mut zx = Vec::with_capacity(tokens.len() * g);
        for &t in tokens {
            let s = self.slot_of[t];
            zx.extend_from_slice(&table[s * g..(s + 1) * g]);
        }
        zx
    }
}

/// Mean cross-entropy of the weighted softmax over `batch`, with exact
/// gradients through time. The PAD embedding row receives no gradient.
pub fn loss_and_grads(batch: &[Sample<'_>], params: &ModelParams) -> Result<(f64, Gradients), NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    params.validate()?;
    let dims = params.dims();
    for s in batch {
        check_tokens(s.tokens, dims.vocab)?;
        if s.label >= dims.classes {
            return Err(NnError::IndexOutOfRange { id: s.label, size: dims.classes });
        }
    }
    let h = dims.hidden;
    let g = 4 * h;
    let proj = TokenProjections::build(batch, params);
    let mut d_proj_f = vec![0.0; proj.fwd.len()];
    let mut d_proj_b = vec![0.0; proj.bwd.len()];
    let mut grads = params.zeros_like();
    let mut total_loss = 0.0;

    for s in batch {
        let len = valid_len(s.tokens);
        let tokens = &s.tokens[..len];
        let mut pooled = vec![0.0; 2 * h];
        let traces = if len > 0 {
            let f = recur(&proj.gather(&proj.fwd, tokens, g), len, &params.forward_lstm.w_recurrent, false);
            let b = recur(&proj.gather(&proj.bwd, tokens, g), len, &params.backward_lstm.w_recurrent, true);
            pooled[..h].copy_from_slice(f.last_state());
            pooled[h..].copy_from_slice(b.last_state());
            Some((f, b))
        } else {
            None
        };

        let head = dense_head(&pooled, params);
        let z: Vec<f64> = head
            .logits
            .iter()
            .zip(&params.class_weights)
            .map(|(v, w)| v * w)
            .collect();
        total_loss -= log_softmax_at(&z, s.label);
        let probs = softmax(&z);

        // dL/dz = P - onehot; z_j = v_j w_j.
        let d_logits: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(j, &p)| (p - if j == s.label { 1.0 } else { 0.0 }) * params.class_weights[j])
            .collect();
        grads.dense2.weight.add_outer(&head.hidden, &d_logits);
        add_into(&mut grads.dense2.bias, &d_logits);
        let mut d_hidden = vec![0.0; dims.dense];
        params.dense2.weight.mul_vec_acc(&d_logits, &mut d_hidden);
        for (d, &a) in d_hidden.iter_mut().zip(&head.pre_relu) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        grads.dense1.weight.add_outer(&pooled, &d_hidden);
        add_into(&mut grads.dense1.bias, &d_hidden);

        let Some((f, b)) = traces else { continue };
        let mut d_pooled = vec![0.0; 2 * h];
        params.dense1.weight.mul_vec_acc(&d_hidden, &mut d_pooled);

        for (trace, d_last, lstm, d_lstm, d_proj) in [
            (&f, &d_pooled[..h], &params.forward_lstm, &mut grads.forward_lstm, &mut d_proj_f),
            (&b, &d_pooled[h..], &params.backward_lstm, &mut grads.backward_lstm, &mut d_proj_b),
        ] {
            let mut d_states = vec![0.0; len * h];
            d_states[(len - 1) * h..].copy_from_slice(d_last);
            let dzx = recur_backward(trace, &d_states, &lstm.w_recurrent, &mut d_lstm.w_recurrent);
            for (t, &tok) in tokens.iter().enumerate() {
                let slot = proj.slot_of[tok];
                add_into(&mut d_proj[slot * g..(slot + 1) * g], &dzx[t * g..(t + 1) * g]);
            }
        }
    }

    for (d_proj, lstm, d_lstm) in [
        (&d_proj_f, &params.forward_lstm, &mut grads.forward_lstm),
        (&d_proj_b, &params.backward_lstm, &mut grads.backward_lstm),
    ] {
        for (slot, &id) in proj.ids.iter().enumerate() {
            let dz = &d_proj[slot * g..(slot + 1) * g];
            add_into(&mut d_lstm.bias, dz);
            d_lstm.w_input.add_outer(params.embedding.weight.row(id), dz);
            if id != PAD {
                lstm.w_input.mul_vec_acc(dz, grads.embedding.weight.row_mut(id));
            }
        }
    }

    let scale = 1.0 / batch.len() as f64;
    for t in grads.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= scale);
    }
    let loss = total_loss * scale;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(NnError::NonFinite("loss or gradient".into()));
    }
    Ok((loss, grads))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
