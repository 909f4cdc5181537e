//! Frequency statistics, significant-mutation selection, class weighting,
//! token encoding and the stratified train/test split.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cohort::{Cohort, StageLabel};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
/// First token id assigned to a vocabulary gene.
pub const FIRST_GENE_ID: usize = 2;
pub const MAX_LEN_CAP: usize = 512;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("every stage fell below the minimum stage fraction")]
    AllStagesRemoved,
    #[error("class size for stage {0} is zero")]
    ZeroClassSize(StageLabel),
    #[error("stage {0} has fewer than two patients, cannot split")]
    ClassTooSmall(StageLabel),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// How genes outside the significant set are treated during encoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unselected {
    /// Removed from the sequence entirely.
    #[default]
    Drop,
    /// Kept in place as the UNK token.
    Unk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Size of each top-x list. `usize::MAX` disables filtering.
    pub top_x: usize,
    pub min_stage_fraction: f64,
    /// Minimum patients for a cancer type to be run at all.
    pub min_class_size: usize,
    pub split_fraction: f64,
    pub seed: u64,
    pub unselected: Unselected,
    /// Fixed padding length; `None` uses the 95th percentile of training lengths.
    pub max_len: Option<usize>,
    /// Duplicate minority-class training samples up to the majority size.
    pub oversample: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            top_x: 200,
            min_stage_fraction: 0.10,
            min_class_size: 300,
            split_fraction: 0.80,
            seed: 0,
            unselected: Unselected::Drop,
            max_len: None,
            oversample: false,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let bad = |m: &str| Err(PreprocessError::InvalidConfig(m.to_string()));
        if self.top_x == 0 {
            return bad("top_x must be at least 1");
        }
        if !(0.0..1.0).contains(&self.min_stage_fraction) {
            return bad("min_stage_fraction must lie in [0, 1)");
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split_fraction must lie in (0, 1)");
        }
        if self.max_len == Some(0) {
            return bad("max_len must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    /// Gene to number of distinct patients carrying it.
    pub overall: BTreeMap<String, usize>,
    pub per_stage: BTreeMap<StageLabel, BTreeMap<String, usize>>,
    pub stage_sizes: BTreeMap<StageLabel, usize>,
}

pub fn count_frequencies(cohort: &Cohort) -> Result<FrequencyTable, PreprocessError> {
    if cohort.is_empty() {
        return Err(PreprocessError::EmptyCohort);
    }
    let mut table = FrequencyTable::default();
    for p in &cohort.patients {
        *table.stage_sizes.entry(p.stage).or_insert(0) += 1;
        let stage_counts = table.per_stage.entry(p.stage).or_default();
        let distinct: BTreeSet<&String> = p.mutations.iter().collect();
        for g in distinct {
            *table.overall.entry(g.clone()).or_insert(0) += 1;
            *stage_counts.entry(g.clone()).or_insert(0) += 1;
        }
    }
    Ok(table)
}

/// Removes stages holding strictly less than `min_stage_fraction` of all patients.
pub fn filter_small_stages(cohort: &Cohort, cfg: &PreprocessConfig) -> Result<Cohort, PreprocessError> {
    if cohort.is_empty() {
        return Err(PreprocessError::EmptyCohort);
    }
    let total = cohort.len() as f64;
    let keep: BTreeSet<StageLabel> = cohort
        .stage_sizes()
        .into_iter()
        .filter(|&(_, n)| n as f64 / total >= cfg.min_stage_fraction)
        .map(|(s, _)| s)
        .collect();
    let patients: Vec<_> = cohort
        .patients
        .iter()
        .filter(|p| keep.contains(&p.stage))
        .cloned()
        .collect();
    if patients.is_empty() {
        return Err(PreprocessError::AllStagesRemoved);
    }
    Ok(Cohort { patients })
}

/// The `x` most frequent genes: descending count, ascending symbol on ties.
pub fn top_genes(counts: &BTreeMap<String, usize>, x: usize) -> Vec<String> {
    let mut ranked: Vec<(&String, usize)> = counts.iter().map(|(g, &c)| (g, c)).collect();
    // BTreeMap iteration is already symbol-ascending; a stable sort keeps it on ties.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked.into_iter().take(x).map(|(g, _)| g.clone()).collect()
}

/// Ordered significant-mutation set with reserved PAD/UNK ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationVocabulary {
    genes: Vec<String>,
    index: HashMap<String, usize>,
    top_x: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    genes: Vec<String>,
    top_x: usize,
}

impl MutationVocabulary {
    /// Duplicate genes keep their first position.
    pub fn new(genes: impl IntoIterator<Item = String>, top_x: usize) -> Self {
        let mut vocab = MutationVocabulary {
            genes: Vec::new(),
            index: HashMap::new(),
            top_x,
        };
        for g in genes {
            if !vocab.index.contains_key(&g) {
                vocab.index.insert(g.clone(), vocab.genes.len() + FIRST_GENE_ID);
                vocab.genes.push(g);
            }
        }
        vocab
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn top_x(&self) -> usize {
        self.top_x
    }

    /// Number of token ids, including PAD and UNK.
    pub fn size(&self) -> usize {
        self.genes.len() + FIRST_GENE_ID
    }

    pub fn contains(&self, gene: &str) -> bool {
        self.index.contains_key(gene)
    }

    /// Token id for a gene, UNK when outside the set.
    pub fn id(&self, gene: &str) -> usize {
        self.index.get(gene).copied().unwrap_or(UNK)
    }

    pub fn gene(&self, id: usize) -> Option<&str> {
        id.checked_sub(FIRST_GENE_ID)
            .and_then(|i| self.genes.get(i))
            .map(String::as_str)
    }

    /// Gene symbols for every non-PAD, non-UNK token.
    pub fn decode(&self, tokens: &[usize]) -> Vec<String> {
        tokens
            .iter()
            .filter_map(|&t| self.gene(t).map(str::to_string))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&VocabularyFile {
            genes: self.genes.clone(),
            top_x: self.top_x,
        })
        .expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let f: VocabularyFile = serde_json::from_str(text)?;
        Ok(MutationVocabulary::new(f.genes, f.top_x))
    }

    /// Hex SHA-256 over the ordered gene list; checkpoints record it.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for g in &self.genes {
            h.update(g.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Overall top-x genes, followed by each stage's top-x genes (ascending stage)
/// that are not already included.
pub fn build_significant_set(freq: &FrequencyTable, cfg: &PreprocessConfig) -> MutationVocabulary {
    let mut genes = top_genes(&freq.overall, cfg.top_x);
    for counts in freq.per_stage.values() {
        genes.extend(top_genes(counts, cfg.top_x));
    }
    MutationVocabulary::new(genes, cfg.top_x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub counts: BTreeMap<StageLabel, usize>,
    pub weights: BTreeMap<StageLabel, f64>,
}

impl ClassWeights {
    /// Weights in ascending stage order, which is class-id order.
    pub fn as_vec(&self) -> Vec<f64> {
        self.weights.values().copied().collect()
    }
}

/// `w_i = sum(c) / (2 c_i)`.
pub fn compute_class_weights(
    stage_sizes: &BTreeMap<StageLabel, usize>,
) -> Result<ClassWeights, PreprocessError> {
    if let Some((&s, _)) = stage_sizes.iter().find(|(_, &c)| c == 0) {
        return Err(PreprocessError::ZeroClassSize(s));
    }
    let total: usize = stage_sizes.values().sum();
    let weights = stage_sizes
        .iter()
        .map(|(&s, &c)| (s, total as f64 / (2 * c) as f64))
        .collect();
    Ok(ClassWeights {
        counts: stage_sizes.clone(),
        weights,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedDataset {
    pub patient_ids: Vec<String>,
    /// Token ids, each padded or truncated to `max_len`.
    pub sequences: Vec<Vec<usize>>,
    /// Token count before padding, at most `max_len`.
    pub lengths: Vec<usize>,
    /// Contiguous class ids.
    pub labels: Vec<usize>,
    /// Stage for each class id, ascending.
    pub class_map: Vec<StageLabel>,
    pub max_len: usize,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_map.len()
    }

    pub fn class_of(&self, stage: StageLabel) -> Option<usize> {
        self.class_map.iter().position(|&s| s == stage)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Class sizes keyed by stage, the input of [`compute_class_weights`].
    pub fn stage_sizes(&self) -> BTreeMap<StageLabel, usize> {
        self.class_map
            .iter()
            .copied()
            .zip(self.class_counts())
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            patient_ids: indices.iter().map(|&i| self.patient_ids[i].clone()).collect(),
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            lengths: indices.iter().map(|&i| self.lengths[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_map: self.class_map.clone(),
            max_len: self.max_len,
        }
    }

    /// Re-pads every sequence to a new length, truncating from the end.
    pub fn with_max_len(&self, max_len: usize) -> EncodedDataset {
        let mut out = self.clone();
        out.max_len = max_len;
        for (seq, len) in out.sequences.iter_mut().zip(out.lengths.iter_mut()) {
            seq.resize(max_len, PAD);
            *len = (*len).min(max_len);
        }
        out
    }
}

pub fn encode(cohort: &Cohort, vocab: &MutationVocabulary, max_len: usize) -> EncodedDataset {
    encode_with(cohort, vocab, max_len, Unselected::Unk)
}

/// Encodes every patient. Class ids follow the ascending stages present in the cohort.
pub fn encode_with(
    cohort: &Cohort,
    vocab: &MutationVocabulary,
    max_len: usize,
    unselected: Unselected,
) -> EncodedDataset {
    let class_map: Vec<StageLabel> = cohort.stage_sizes().into_keys().collect();
    let mut ds = EncodedDataset {
        patient_ids: Vec::with_capacity(cohort.len()),
        sequences: Vec::with_capacity(cohort.len()),
        lengths: Vec::with_capacity(cohort.len()),
        labels: Vec::with_capacity(cohort.len()),
        class_map,
        max_len,
    };
    for p in &cohort.patients {
        let mut seq: Vec<usize> = p
            .mutations
            .iter()
            .map(|g| vocab.id(g))
            .filter(|&t| unselected == Unselected::Unk || t != UNK)
            .take(max_len)
            .collect();
        ds.lengths.push(seq.len());
        seq.resize(max_len, PAD);
        ds.sequences.push(seq);
        ds.patient_ids.push(p.patient_id.clone());
        ds.labels.push(ds.class_of(p.stage).expect("stage is in class map"));
    }
    ds
}

/// Nearest-rank 95th percentile, clamped to `1..=MAX_LEN_CAP`.
pub fn percentile_max_len(lengths: &[usize]) -> usize {
    if lengths.is_empty() {
        return 1;
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let rank = (0.95 * sorted.len() as f64).ceil() as usize;
    sorted[rank.saturating_sub(1)].clamp(1, MAX_LEN_CAP)
}

/// Patient ids per partition, persisted for auditing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Stratified shuffled split of row indices. Each class keeps
/// `floor(fraction * n)` rows for training, at least one and at most `n - 1`.
pub fn split_indices(
    labels: &[usize],
    class_map: &[StageLabel],
    cfg: &PreprocessConfig,
) -> Result<(Vec<usize>, Vec<usize>), PreprocessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, &stage) in class_map.iter().enumerate() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let n = members.len();
        if n < 2 {
            return Err(PreprocessError::ClassTooSmall(stage));
        }
        members.shuffle(&mut rng);
        let n_train = ((cfg.split_fraction * n as f64).floor() as usize).clamp(1, n - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((train, test))
}

pub fn split(
    ds: &EncodedDataset,
    cfg: &PreprocessConfig,
) -> Result<(EncodedDataset, EncodedDataset), PreprocessError> {
    let (train, test) = split_indices(&ds.labels, &ds.class_map, cfg)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

pub fn manifest(train: &EncodedDataset, test: &EncodedDataset, seed: u64) -> SplitManifest {
    SplitManifest {
        seed,
        train: train.patient_ids.clone(),
        test: test.patient_ids.clone(),
    }
}

/// Resamples minority classes with replacement until every class matches the largest.
pub fn oversample(ds: &EncodedDataset, seed: u64) -> EncodedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6f76_6572);
    let counts = ds.class_counts();
    let target = counts.iter().copied().max().unwrap_or(0);
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    for (class, &n) in counts.iter().enumerate() {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        for _ in n..target {
            indices.push(members[rng.gen_range(0..members.len())]);
        }
    }
    ds.subset(&indices)
}
