//! Cancer stage classification from somatic mutation sequences.
//!
//! The pipeline filters a cohort down to its most frequent mutations, trains a
//! bidirectional LSTM stage classifier with class-weighted softmax, evaluates
//! it with per-stage ROC curves, predicts which mutations a patient is likely
//! to acquire next, and looks up drugs targeting those genes.

pub mod cohort;
pub mod drugrec;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod progression;
pub mod synth;
pub mod train;

pub use cohort::{Cohort, Patient, StageLabel};
pub use preprocess::{MutationVocabulary, PreprocessConfig};
pub use train::TrainConfig;
