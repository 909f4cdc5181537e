//! `oncoseq` command-line pipeline.
//!
//! Exit codes: 0 success, 1 numeric or model failure, 2 input or configuration failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "oncoseq", version, about = "Mutation-sequence stage classification pipeline")]
pub struct Cli {
    /// TOML file with default values for any tunable flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct PreprocessArgs {
    /// Size of each top-x mutation list, or `all` to keep every gene.
    #[arg(long)]
    pub top_x: Option<String>,
    /// Drop stages holding less than this share of patients.
    #[arg(long)]
    pub min_stage_fraction: Option<f64>,
    /// Minimum patients for the selected cancer type.
    #[arg(long)]
    pub min_class_size: Option<usize>,
    /// Share of each stage used for training.
    #[arg(long)]
    pub split_fraction: Option<f64>,
    /// Fixed sequence length; defaults to the 95th percentile of training lengths.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Cancer type to run when the cohort holds several.
    #[arg(long)]
    pub cancer_type: Option<String>,
    /// `drop` removes unselected genes, `unk` keeps them as an unknown token.
    #[arg(long)]
    pub unselected: Option<String>,
    /// Resample minority stages in the training split.
    #[arg(long)]
    pub oversample: bool,
}

#[derive(Args, Debug, Default, Clone)]
pub struct TrainArgs {
    /// Passes over the training split.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Samples per gradient step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    /// Embedding width.
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// LSTM state size per direction.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Width of the hidden dense layer.
    #[arg(long)]
    pub dense: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic cohort with planted stage drivers.
    Synth {
        #[arg(long, default_value_t = 3)]
        stages: u8,
        #[arg(long, default_value_t = 100)]
        patients_per_stage: usize,
        #[arg(long, default_value_t = 5)]
        drivers_per_stage: usize,
        #[arg(long, default_value_t = 0.8)]
        driver_prob: f64,
        #[arg(long, default_value_t = 200)]
        noise_genes: usize,
        #[arg(long, default_value_t = 10)]
        noise_per_patient: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter, select significant mutations, encode and split a cohort.
    Preprocess {
        #[arg(long)]
        mutations: PathBuf,
        #[arg(long)]
        clinical: PathBuf,
        #[command(flatten)]
        pre: PreprocessArgs,
        /// RNG seed for the split, initialisation and shuffling.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the stage classifier on a preprocessed run directory.
    Train {
        /// Preprocess output directory; defaults to --out.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        /// RNG seed for the split, initialisation and shuffling.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy, confusion matrix and per-stage ROC curves on the test split.
    Evaluate {
        /// Preprocess/train output directory; defaults to --out.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Defaults to checkpoint.json in the data directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Worker threads for inference.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Future mutations, stage/gene heatmap and drug recommendations.
    Predict {
        /// Preprocess/train output directory; defaults to --out.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Defaults to checkpoint.json in the data directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Primary drug/target table.
        #[arg(long)]
        drug_db: Option<PathBuf>,
        /// Table used to validate primary drug/target pairs.
        #[arg(long)]
        validation_db: Option<PathBuf>,
        /// Skip drug recommendations.
        #[arg(long)]
        no_drugs: bool,
        /// Skip the SVG heatmap.
        #[arg(long)]
        no_svg: bool,
        /// Minimum occurrence probability for a predicted mutation.
        #[arg(long)]
        threshold: Option<f64>,
        /// Worker threads for inference.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare accuracy across top-x settings on a shared split.
    Ablate {
        #[arg(long)]
        mutations: PathBuf,
        #[arg(long)]
        clinical: PathBuf,
        /// Comma-separated top-x values; `all` means no filtering.
        #[arg(long)]
        grid: Option<String>,
        #[command(flatten)]
        pre: PreprocessArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// RNG seed for the split, initialisation and shuffling.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for inference.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
