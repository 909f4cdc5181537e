use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::de::DeserializeOwned;
use serde::Serialize;

use oncoseq::cohort::{Cohort, CohortError, DiscardSummary};
use oncoseq::drugrec::{load_drug_table, recommend, recommendations_json, DrugError, DrugSource};
use oncoseq::nn::{Checkpoint, ModelParams, NnError};
use oncoseq::pipeline::{
    ablation_csv, ablation_run, fit, prepare, predict_progressions, select_cancer_type, ModelShape,
    PipelineConfig, PipelineError, Prepared,
};
use oncoseq::preprocess::{ClassWeights, EncodedDataset, PreprocessError, SplitManifest, Unselected};
use oncoseq::progression::{build_stage_gene_matrix, heatmap_csv, heatmap_svg, ProgressionError};
use oncoseq::synth::{generate, GeneratorConfig};
use oncoseq::train::{evaluate_with_threads, loss_csv, TrainError};
use oncoseq::{MutationVocabulary, PreprocessConfig, TrainConfig};

use crate::config::{parse_grid, parse_top_x, FileConfig};
use crate::{Cli, Command, PreprocessArgs, TrainArgs};

pub const MUTATIONS_TSV: &str = "mutations.tsv";
pub const CLINICAL_TSV: &str = "clinical.tsv";
pub const COHORT_MUTATIONS_TSV: &str = "cohort_mutations.tsv";
pub const COHORT_CLINICAL_TSV: &str = "cohort_clinical.tsv";
pub const VOCAB_JSON: &str = "vocab.json";
pub const SPLIT_JSON: &str = "split.json";
pub const TRAIN_JSON: &str = "train.json";
pub const TEST_JSON: &str = "test.json";
pub const WEIGHTS_JSON: &str = "class_weights.json";
pub const CHECKPOINT_JSON: &str = "checkpoint.json";

/// A command failure tagged with its exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad input files, flags or configuration.
    Input(anyhow::Error),
    /// Numeric or model failure.
    Model(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Model(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Model(e) => e,
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn input(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(e.into())
}

fn input_msg(msg: String) -> Failure {
    Failure::Input(anyhow!(msg))
}

impl From<CohortError> for Failure {
    fn from(e: CohortError) -> Self {
        Failure::Input(e.into())
    }
}

impl From<DrugError> for Failure {
    fn from(e: DrugError) -> Self {
        Failure::Input(e.into())
    }
}

impl From<PreprocessError> for Failure {
    fn from(e: PreprocessError) -> Self {
        Failure::Input(e.into())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) | TrainError::EmptyTestSet | TrainError::ClassMismatch { .. } => {
                Failure::Input(e.into())
            }
            TrainError::Nn(inner) => inner.into(),
            _ => Failure::Model(e.into()),
        }
    }
}

impl From<NnError> for Failure {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Checkpoint(_) => Failure::Input(e.into()),
            _ => Failure::Model(e.into()),
        }
    }
}

impl From<ProgressionError> for Failure {
    fn from(e: ProgressionError) -> Self {
        Failure::Input(e.into())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Preprocess(e) => e.into(),
            PipelineError::Train(e) => e.into(),
            PipelineError::Nn(e) => e.into(),
            PipelineError::Progression(e) => e.into(),
            PipelineError::Input(m) => input_msg(m),
        }
    }
}

fn progress(msg: impl AsRef<str>) {
    eprintln!("[oncoseq] {}", msg.as_ref());
}

fn require_file(path: &Path) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(input_msg(format!("input file not found: {}", path.display())))
    }
}

fn read_text(path: &Path) -> Outcome<String> {
    require_file(path)?;
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Input)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .with_context(|| format!("malformed JSON in {}", path.display()))
        .map_err(Failure::Input)
}

struct OutDir(PathBuf);

impl OutDir {
    fn create(path: &Path) -> Outcome<Self> {
        fs::create_dir_all(path)
            .with_context(|| format!("cannot create output directory {}", path.display()))
            .map_err(Failure::Input)?;
        Ok(OutDir(path.to_path_buf()))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Outcome {
        let path = self.path(name);
        fs::write(&path, contents)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Failure::Input)
    }

    fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Outcome {
        let text = serde_json::to_string_pretty(value).map_err(input)?;
        self.write(name, &text)
    }
}

pub fn dispatch(cli: Cli) -> Outcome {
    let file = FileConfig::load(cli.config.as_deref()).map_err(Failure::Input)?;
    match cli.command {
        Command::Synth {
            stages,
            patients_per_stage,
            drivers_per_stage,
            driver_prob,
            noise_genes,
            noise_per_patient,
            seed,
            out,
        } => cmd_synth(
            &GeneratorConfig {
                n_stages: stages,
                patients_per_stage,
                drivers_per_stage,
                driver_expression_prob: driver_prob,
                n_noise_genes: noise_genes,
                noise_genes_per_patient: noise_per_patient,
                seed,
            },
            &out,
        ),
        Command::Preprocess {
            mutations,
            clinical,
            pre,
            seed,
            out,
        } => {
            let cfg = resolve_preprocess(&pre, seed, &file)?;
            let cancer_type = pre.cancer_type.clone().or_else(|| file.cancer_type.clone());
            cmd_preprocess(&mutations, &clinical, &cfg, cancer_type.as_deref(), &out)
        }
        Command::Train { data, train, seed, out } => {
            let (train_cfg, shape) = resolve_train(&train, seed, &file)?;
            cmd_train(data.as_deref().unwrap_or(&out), &train_cfg, shape, &out)
        }
        Command::Evaluate {
            data,
            checkpoint,
            threads,
            out,
        } => {
            let data = data.unwrap_or_else(|| out.clone());
            let checkpoint = checkpoint.unwrap_or_else(|| data.join(CHECKPOINT_JSON));
            cmd_evaluate(&data, &checkpoint, resolve_threads(threads, &file)?, &out)
        }
        Command::Predict {
            data,
            checkpoint,
            drug_db,
            validation_db,
            no_drugs,
            no_svg,
            threshold,
            threads,
            out,
        } => {
            let data = data.unwrap_or_else(|| out.clone());
            let checkpoint = checkpoint.unwrap_or_else(|| data.join(CHECKPOINT_JSON));
            let drugs = if no_drugs {
                None
            } else {
                let primary =
                    drug_db.ok_or_else(|| input_msg("--drug-db is required unless --no-drugs is given".into()))?;
                Some((primary, validation_db))
            };
            let threshold = threshold.or(file.threshold).unwrap_or(oncoseq::progression::DEFAULT_THRESHOLD);
            if !(0.0..=1.0).contains(&threshold) {
                return Err(input_msg(format!("threshold {threshold} must lie in [0, 1]")));
            }
            let opts = PredictOptions {
                threshold,
                threads: resolve_threads(threads, &file)?,
                svg: !no_svg,
                drugs,
            };
            cmd_predict(&data, &checkpoint, &opts, &out)
        }
        Command::Ablate {
            mutations,
            clinical,
            grid,
            pre,
            train,
            seed,
            threads,
            out,
        } => {
            let raw_grid = grid.or_else(|| file.grid.clone()).unwrap_or_else(|| "50,100,200".into());
            let grid = parse_grid(&raw_grid).map_err(|e| input_msg(format!("--grid: {e}")))?;
            let preprocess = resolve_preprocess(&pre, seed, &file)?;
            let (train_cfg, model) = resolve_train(&train, seed, &file)?;
            let cfg = PipelineConfig {
                preprocess,
                train: train_cfg,
                model,
                threads: resolve_threads(threads, &file)?,
                ..Default::default()
            };
            let cancer_type = pre.cancer_type.clone().or_else(|| file.cancer_type.clone());
            cmd_ablate(&mutations, &clinical, &grid, &cfg, cancer_type.as_deref(), &out)
        }
    }
}

fn resolve_preprocess(args: &PreprocessArgs, seed: Option<u64>, file: &FileConfig) -> Outcome<PreprocessConfig> {
    let mut cfg = PreprocessConfig::default();
    if let Some(raw) = args.top_x.as_ref().or(file.top_x.as_ref()) {
        cfg.top_x = parse_top_x(raw).map_err(|e| input_msg(format!("--top-x: {e}")))?;
    }
    if let Some(s) = seed.or(file.seed) {
        cfg.seed = s;
    }
    if let Some(v) = args.min_stage_fraction.or(file.min_stage_fraction) {
        cfg.min_stage_fraction = v;
    }
    if let Some(v) = args.min_class_size.or(file.min_class_size) {
        cfg.min_class_size = v;
    }
    if let Some(v) = args.split_fraction.or(file.split_fraction) {
        cfg.split_fraction = v;
    }
    cfg.max_len = args.max_len.or(file.max_len);
    if let Some(raw) = args.unselected.as_ref().or(file.unselected.as_ref()) {
        cfg.unselected = match raw.to_ascii_lowercase().as_str() {
            "drop" => Unselected::Drop,
            "unk" => Unselected::Unk,
            other => return Err(input_msg(format!("--unselected must be `drop` or `unk`, got `{other}`"))),
        };
    }
    cfg.oversample = args.oversample || file.oversample.unwrap_or(false);
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_train(args: &TrainArgs, seed: Option<u64>, file: &FileConfig) -> Outcome<(TrainConfig, ModelShape)> {
    let mut cfg = TrainConfig::default();
    if let Some(s) = seed.or(file.seed) {
        cfg.seed = s;
    }
    if let Some(v) = args.epochs.or(file.epochs) {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size.or(file.batch_size) {
        cfg.batch_size = v;
    }
    if let Some(v) = args.learning_rate.or(file.learning_rate) {
        cfg.learning_rate = v;
    }
    cfg.validate()?;
    let mut shape = ModelShape::default();
    if let Some(v) = args.embed_dim.or(file.embed_dim) {
        shape.embed = v;
    }
    if let Some(v) = args.hidden.or(file.hidden) {
        shape.hidden = v;
    }
    if let Some(v) = args.dense.or(file.dense) {
        shape.dense = v;
    }
    if shape.embed == 0 || shape.hidden == 0 || shape.dense == 0 {
        return Err(input_msg("model dimensions must be at least 1".into()));
    }
    Ok((cfg, shape))
}

fn resolve_threads(flag: Option<usize>, file: &FileConfig) -> Outcome<usize> {
    match flag.or(file.threads).unwrap_or(1) {
        0 => Err(input_msg("--threads must be at least 1".into())),
        n => Ok(n),
    }
}

fn load_cohort(
    mutations: &Path,
    clinical: &Path,
    cancer_type: Option<&str>,
    min_class_size: usize,
) -> Outcome<(Cohort, DiscardSummary)> {
    require_file(mutations)?;
    require_file(clinical)?;
    let (cohort, discards) = Cohort::read_tsv(mutations, clinical)?;
    progress(format!(
        "loaded {} patients ({} mutation rows without clinical data, {} patients without mutations)",
        cohort.len(),
        discards.unmatched_mutations,
        discards.no_mutations
    ));
    Ok((select_cancer_type(&cohort, cancer_type, min_class_size)?, discards))
}

fn cmd_synth(cfg: &GeneratorConfig, out: &Path) -> Outcome {
    let (cohort, truth) = generate(cfg).map_err(input)?;
    let dir = OutDir::create(out)?;
    cohort
        .write_tsv(&dir.path(MUTATIONS_TSV), &dir.path(CLINICAL_TSV))
        .context("cannot write synthetic cohort")
        .map_err(Failure::Input)?;
    dir.write("manifest.json", &truth.to_json())?;
    progress(format!("wrote {} synthetic patients to {}", cohort.len(), out.display()));
    Ok(())
}

fn cmd_preprocess(
    mutations: &Path,
    clinical: &Path,
    cfg: &PreprocessConfig,
    cancer_type: Option<&str>,
    out: &Path,
) -> Outcome {
    let (cohort, discards) = load_cohort(mutations, clinical, cancer_type, cfg.min_class_size)?;
    let prepared = prepare(&cohort, cfg)?;
    progress(format!(
        "{} significant genes, {} training and {} test patients, max length {}",
        prepared.vocab.genes().len(),
        prepared.train.len(),
        prepared.test.len(),
        prepared.train.max_len
    ));
    write_prepared(&prepared, cfg, &discards, out)
}

fn write_prepared(
    prepared: &Prepared,
    cfg: &PreprocessConfig,
    discards: &DiscardSummary,
    out: &Path,
) -> Outcome {
    let dir = OutDir::create(out)?;
    dir.write(VOCAB_JSON, &prepared.vocab.to_json())?;
    dir.write_json(SPLIT_JSON, &prepared.manifest)?;
    dir.write_json(TRAIN_JSON, &prepared.train)?;
    dir.write_json(TEST_JSON, &prepared.test)?;
    dir.write_json(WEIGHTS_JSON, &prepared.weights)?;
    dir.write_json("discards.json", discards)?;
    dir.write_json("preprocess_config.json", cfg)?;
    prepared
        .cohort
        .write_tsv(&dir.path(COHORT_MUTATIONS_TSV), &dir.path(COHORT_CLINICAL_TSV))
        .context("cannot write filtered cohort")
        .map_err(Failure::Input)
}

struct RunData {
    vocab: MutationVocabulary,
    train: EncodedDataset,
    test: EncodedDataset,
}

fn load_run_data(data: &Path) -> Outcome<RunData> {
    let vocab = MutationVocabulary::from_json(&read_text(&data.join(VOCAB_JSON))?)
        .with_context(|| format!("malformed vocabulary in {}", data.join(VOCAB_JSON).display()))
        .map_err(Failure::Input)?;
    Ok(RunData {
        vocab,
        train: read_json(&data.join(TRAIN_JSON))?,
        test: read_json(&data.join(TEST_JSON))?,
    })
}

fn load_checkpoint(path: &Path, vocab: &MutationVocabulary, ds: &EncodedDataset) -> Outcome<ModelParams> {
    let ckpt = Checkpoint::from_json(&read_text(path)?)?;
    if ckpt.stages != ds.class_map {
        return Err(input_msg(format!(
            "checkpoint {} was trained on different stages than the dataset",
            path.display()
        )));
    }
    Ok(ckpt.to_params(vocab)?)
}

fn cmd_train(data: &Path, cfg: &TrainConfig, shape: ModelShape, out: &Path) -> Outcome {
    let run = load_run_data(data)?;
    let weights: ClassWeights = read_json(&data.join(WEIGHTS_JSON))?;
    let manifest: SplitManifest = read_json(&data.join(SPLIT_JSON))?;
    let prepared = Prepared {
        cohort: Cohort::default(),
        frequencies: Default::default(),
        vocab: run.vocab,
        train: run.train,
        test: run.test,
        weights,
        manifest,
    };
    let pipeline = PipelineConfig {
        train: cfg.clone(),
        model: shape,
        ..Default::default()
    };
    progress(format!(
        "training on {} sequences for {} epochs (embed {}, hidden {}, dense {})",
        prepared.train.len(),
        cfg.epochs,
        shape.embed,
        shape.hidden,
        shape.dense
    ));
    let (params, history) = fit(&prepared, &pipeline)?;
    if let Some(last) = history.last() {
        progress(format!("final mean training loss {last:.6}"));
    }
    let dir = OutDir::create(out)?;
    let ckpt = Checkpoint::new(&params, &prepared.vocab, &prepared.train.class_map);
    dir.write(CHECKPOINT_JSON, &ckpt.to_json())?;
    dir.write("loss.csv", &loss_csv(&history))?;
    dir.write_json("train_config.json", &pipeline)
}

fn cmd_evaluate(data: &Path, checkpoint: &Path, threads: usize, out: &Path) -> Outcome {
    let run = load_run_data(data)?;
    if run.test.is_empty() {
        return Err(TrainError::EmptyTestSet.into());
    }
    let params = load_checkpoint(checkpoint, &run.vocab, &run.test)?;
    let report = evaluate_with_threads(&run.test, &params, threads)?;
    let dir = OutDir::create(out)?;
    dir.write("report.json", &report.to_json())?;
    for (k, stage) in report.class_map.iter().enumerate() {
        dir.write(&format!("roc_stage_{}.csv", stage.ordinal()), &report.roc_csv(k))?;
    }
    progress(format!(
        "accuracy {:.4}, mean AUC {:.4} on {} test patients",
        report.accuracy,
        report.mean_auc(),
        report.n_test
    ));
    Ok(())
}

struct PredictOptions {
    threshold: f64,
    threads: usize,
    svg: bool,
    /// Primary table and optional validation table.
    drugs: Option<(PathBuf, Option<PathBuf>)>,
}

fn cmd_predict(data: &Path, checkpoint: &Path, opts: &PredictOptions, out: &Path) -> Outcome {
    let run = load_run_data(data)?;
    let cohort_mut = data.join(COHORT_MUTATIONS_TSV);
    let cohort_clin = data.join(COHORT_CLINICAL_TSV);
    require_file(&cohort_mut)?;
    require_file(&cohort_clin)?;
    let (cohort, _) = Cohort::read_tsv(&cohort_mut, &cohort_clin)?;
    let drug_tables = match &opts.drugs {
        Some((primary, validation)) => {
            require_file(primary)?;
            let primary = load_drug_table(primary, DrugSource::PrimaryDb)?;
            let validation = match validation {
                Some(v) => {
                    require_file(v)?;
                    load_drug_table(v, DrugSource::ValidationDb)?
                }
                None => Vec::new(),
            };
            Some((primary, validation))
        }
        None => None,
    };
    let params = load_checkpoint(checkpoint, &run.vocab, &run.test)?;
    let matrix = build_stage_gene_matrix(&run.train, &run.vocab, &cohort)?;
    let predictions = predict_progressions(&run.test, &cohort, &params, &matrix, opts.threshold, opts.threads)?;

    let dir = OutDir::create(out)?;
    dir.write_json("predictions.json", &predictions)?;
    dir.write("heatmap.csv", &heatmap_csv(&matrix))?;
    if opts.svg {
        dir.write("heatmap.svg", &heatmap_svg(&matrix))?;
    }
    progress(format!("predicted future mutations for {} test patients", predictions.len()));
    if let Some((primary, validation)) = drug_tables {
        let mut genes: Vec<String> = predictions
            .iter()
            .flat_map(|p| p.future.iter().map(|f| f.gene.clone()))
            .collect();
        genes.sort();
        genes.dedup();
        let recs = recommend(&genes, &primary, &validation);
        dir.write("recommendations.json", &recommendations_json(&recs))?;
        progress(format!("drug recommendations for {} genes", recs.len()));
    }
    Ok(())
}

fn cmd_ablate(
    mutations: &Path,
    clinical: &Path,
    grid: &[usize],
    cfg: &PipelineConfig,
    cancer_type: Option<&str>,
    out: &Path,
) -> Outcome {
    let (cohort, _) = load_cohort(mutations, clinical, cancer_type, cfg.preprocess.min_class_size)?;
    progress(format!("ablation over {} top-x settings", grid.len()));
    let rows = ablation_run(&cohort, grid, cfg)?;
    let dir = OutDir::create(out)?;
    dir.write("ablation.csv", &ablation_csv(&rows))?;
    dir.write_json("ablation_config.json", cfg)
}
