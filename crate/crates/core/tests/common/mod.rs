//! Independent reference implementations used as test oracles. They favour
//! plain loops and direct formulas over the library's fused layouts.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use oncoseq::cohort::{Cohort, StageLabel};
use oncoseq::nn::{LstmParams, ModelDims, ModelParams};
use oncoseq::preprocess::FrequencyTable;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Genes ranked by how many others beat them (higher count, or equal count and smaller symbol).
fn rank_of(counts: &BTreeMap<String, usize>) -> BTreeMap<&str, usize> {
    counts
        .iter()
        .map(|(g, &c)| {
            let beaten_by = counts
                .iter()
                .filter(|(h, &d)| d > c || (d == c && h.as_str() < g.as_str()))
                .count();
            (g.as_str(), beaten_by)
        })
        .collect()
}

/// Set of genes whose rank is below `x`.
pub fn oracle_top(counts: &BTreeMap<String, usize>, x: usize) -> BTreeSet<String> {
    rank_of(counts)
        .into_iter()
        .filter(|&(_, r)| r < x)
        .map(|(g, _)| g.to_string())
        .collect()
}

fn by_rank(counts: &BTreeMap<String, usize>, genes: &BTreeSet<String>) -> Vec<String> {
    let ranks = rank_of(counts);
    let mut v: Vec<&String> = genes.iter().collect();
    v.sort_by_key(|g| ranks[g.as_str()]);
    v.into_iter().cloned().collect()
}

/// `S = S_x ∪ ⋃_s (S_{x,s} \ S_x)` evaluated as sets, then laid out overall
/// block first and each stage's new genes after it, in rank order.
pub fn oracle_significant_set(freq: &FrequencyTable, x: usize) -> Vec<String> {
    let overall = oracle_top(&freq.overall, x);
    let mut out = by_rank(&freq.overall, &overall);
    let mut included = overall;
    for counts in freq.per_stage.values() {
        let fresh: BTreeSet<String> = oracle_top(counts, x).difference(&included).cloned().collect();
        out.extend(by_rank(counts, &fresh));
        included.extend(fresh);
    }
    out
}

/// Distinct-patient gene counts by direct enumeration.
pub fn oracle_frequencies(cohort: &Cohort) -> (BTreeMap<String, usize>, BTreeMap<StageLabel, BTreeMap<String, usize>>) {
    let genes: BTreeSet<&String> = cohort.patients.iter().flat_map(|p| &p.mutations).collect();
    let stages: BTreeSet<StageLabel> = cohort.patients.iter().map(|p| p.stage).collect();
    let carriers = |g: &str, stage: Option<StageLabel>| {
        cohort
            .patients
            .iter()
            .filter(|p| stage.map_or(true, |s| p.stage == s))
            .filter(|p| p.mutations.iter().any(|m| m == g))
            .count()
    };
    let overall = genes.iter().map(|g| (g.to_string(), carriers(g, None))).collect();
    let per_stage = stages
        .iter()
        .map(|&s| {
            let counts = genes
                .iter()
                .map(|g| (g.to_string(), carriers(g, Some(s))))
                .filter(|&(_, c)| c > 0)
                .collect();
            (s, counts)
        })
        .collect();
    (overall, per_stage)
}

/// Fraction of each stage's listed patients carrying each gene.
pub fn oracle_stage_gene(cohort: &Cohort, patient_ids: &[String], genes: &[String]) -> BTreeMap<StageLabel, Vec<f64>> {
    let mut out = BTreeMap::new();
    let members: Vec<_> = patient_ids
        .iter()
        .map(|id| cohort.patients.iter().find(|p| &p.patient_id == id).expect("patient exists"))
        .collect();
    let stages: BTreeSet<StageLabel> = members.iter().map(|p| p.stage).collect();
    for s in stages {
        let in_stage: Vec<_> = members.iter().filter(|p| p.stage == s).collect();
        let row = genes
            .iter()
            .map(|g| in_stage.iter().filter(|p| p.mutations.contains(g)).count() as f64 / in_stage.len() as f64)
            .collect();
        out.insert(s, row);
    }
    out
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn mann_whitney_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Step-by-step LSTM over `xs`. Gate `g` of unit `j` reads column `g*h + j`.
/// Returned states are aligned with the input rows.
pub fn oracle_lstm(xs: &[Vec<f64>], p: &LstmParams, reversed: bool) -> Vec<Vec<f64>> {
    let h = p.bias.len() / 4;
    let mut state = vec![0.0; h];
    let mut cell = vec![0.0; h];
    let mut out = vec![vec![0.0; h]; xs.len()];
    let order: Vec<usize> = if reversed {
        (0..xs.len()).rev().collect()
    } else {
        (0..xs.len()).collect()
    };
    for t in order {
        let x = &xs[t];
        let pre = |gate: usize, j: usize| {
            let col = gate * h + j;
            let mut a = p.bias[col];
            for (i, xi) in x.iter().enumerate() {
                a += xi * p.w_input.get(i, col);
            }
            for (i, hi) in state.iter().enumerate() {
                a += hi * p.w_recurrent.get(i, col);
            }
            a
        };
        let mut next_state = vec![0.0; h];
        let mut next_cell = vec![0.0; h];
        for j in 0..h {
            let i_gate = sigmoid(pre(0, j));
            let f_gate = sigmoid(pre(1, j));
            let g_cand = pre(2, j).tanh();
            let o_gate = sigmoid(pre(3, j));
            next_cell[j] = f_gate * cell[j] + i_gate * g_cand;
            next_state[j] = o_gate * next_cell[j].tanh();
        }
        state = next_state;
        cell = next_cell;
        out[t] = state.clone();
    }
    out
}

/// Forward half at the last non-PAD step followed by the backward half at step 0.
pub fn oracle_pooled(tokens: &[usize], p: &ModelParams) -> Vec<f64> {
    let h = p.forward_lstm.bias.len() / 4;
    let len = tokens.iter().rposition(|&t| t != 0).map_or(0, |i| i + 1);
    if len == 0 {
        return vec![0.0; 2 * h];
    }
    let xs: Vec<Vec<f64>> = tokens[..len].iter().map(|&t| p.embedding.weight.row(t).to_vec()).collect();
    let fwd = oracle_lstm(&xs, &p.forward_lstm, false);
    let bwd = oracle_lstm(&xs, &p.backward_lstm, true);
    let mut pooled = fwd[len - 1].clone();
    pooled.extend_from_slice(&bwd[0]);
    pooled
}

pub fn oracle_logits(tokens: &[usize], p: &ModelParams) -> Vec<f64> {
    let pooled = oracle_pooled(tokens, p);
    let dense = |x: &[f64], w: &oncoseq::nn::Matrix, b: &[f64]| -> Vec<f64> {
        (0..b.len())
            .map(|o| b[o] + x.iter().enumerate().map(|(i, xi)| xi * w.get(i, o)).sum::<f64>())
            .collect()
    };
    let hidden: Vec<f64> = dense(&pooled, &p.dense1.weight, &p.dense1.bias)
        .into_iter()
        .map(|a| if a > 0.0 { a } else { 0.0 })
        .collect();
    dense(&hidden, &p.dense2.weight, &p.dense2.bias)
}

/// `exp(v_i w_i) / Σ exp(v_j w_j)` without any shifting.
pub fn oracle_weighted_softmax(v: &[f64], w: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = v.iter().zip(w).map(|(a, b)| (a * b).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn oracle_probs(tokens: &[usize], p: &ModelParams, weighted: bool) -> Vec<f64> {
    let v = oracle_logits(tokens, p);
    let w = if weighted { p.class_weights.clone() } else { vec![1.0; v.len()] };
    oracle_weighted_softmax(&v, &w)
}

/// Mean cross-entropy under the class-weighted softmax.
pub fn oracle_loss(batch: &[(Vec<usize>, usize)], p: &ModelParams) -> f64 {
    batch
        .iter()
        .map(|(tokens, label)| -oracle_probs(tokens, p, true)[*label].ln())
        .sum::<f64>()
        / batch.len() as f64
}

/// Every tensor uniform in `±scale`, PAD row zero, positive class weights.
pub fn random_params(dims: ModelDims, scale: f64, rng: &mut impl Rng) -> ModelParams {
    let mut p = ModelParams::zeros(dims);
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
    p.embedding.weight.row_mut(0).fill(0.0);
    p.class_weights = (0..dims.classes).map(|_| rng.gen_range(0.3..3.0)).collect();
    p
}

/// Non-PAD tokens (UNK included) with an optional PAD tail.
pub fn random_tokens(len: usize, vocab: usize, rng: &mut impl Rng) -> Vec<usize> {
    let used = rng.gen_range(1..=len);
    let mut t: Vec<usize> = (0..used).map(|_| rng.gen_range(1..vocab)).collect();
    t.resize(len, 0);
    t
}

/// Central finite differences against analytic gradients. Returns the worst
/// `(relative error, absolute error)` over every parameter that passes through
/// the loss, or an error naming the first failing entry.
pub fn gradient_check(
    batch: &[(Vec<usize>, usize)],
    params: &ModelParams,
    eps: f64,
    rel_tol: f64,
    abs_floor: f64,
) -> Result<(f64, f64), String> {
    use oncoseq::nn::{loss_and_grads, Sample, TENSOR_NAMES};
    let samples: Vec<Sample> = batch.iter().map(|(t, l)| Sample { tokens: t, label: *l }).collect();
    let (loss, grads) = loss_and_grads(&samples, params).map_err(|e| e.to_string())?;
    let reference = oracle_loss(batch, params);
    if (loss - reference).abs() > 1e-10 * reference.abs().max(1.0) {
        return Err(format!("loss {loss} differs from oracle {reference}"));
    }
    let embed = params.dims().embed;
    let mut worst = (0.0f64, 0.0f64);
    let analytic = grads.tensors().map(<[f64]>::to_vec);
    for (ti, name) in TENSOR_NAMES.iter().enumerate() {
        for k in 0..analytic[ti].len() {
            let a = analytic[ti][k];
            // The PAD embedding row is frozen: no gradient regardless of the loss.
            if ti == 0 && k < embed {
                if a != 0.0 {
                    return Err(format!("PAD row gradient {a} at {k}"));
                }
                continue;
            }
            let mut plus = params.clone();
            plus.tensors_mut()[ti][k] += eps;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][k] -= eps;
            let numeric = (oracle_loss(batch, &plus) - oracle_loss(batch, &minus)) / (2.0 * eps);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
            if abs > abs_floor && rel > rel_tol {
                return Err(format!(
                    "{name}[{k}]: analytic {a:e}, numeric {numeric:e}, rel {rel:e}"
                ));
            }
            // Report relative error wherever the gradient itself is well above the floor.
            if a.abs().max(numeric.abs()) > 100.0 * abs_floor {
                worst.0 = worst.0.max(rel);
            }
            worst.1 = worst.1.max(abs);
        }
    }
    Ok(worst)
}
