//! Synthetic cohorts with planted, cumulative stage drivers.
//!
//! A stage-`s` patient carries each driver of stages `1..=s` independently
//! with `driver_expression_prob`, plus a few uniformly drawn background genes.
//! The sequence lists stage-1 drivers, then stage-2 drivers and so on, then
//! background genes, shuffled within each group.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Cohort, Patient, StageLabel};

pub const SYNTH_CANCER_TYPE: &str = "SYN";

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid generator configuration: {0}")]
    ConfigInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_stages: u8,
    pub patients_per_stage: usize,
    pub drivers_per_stage: usize,
    pub driver_expression_prob: f64,
    pub n_noise_genes: usize,
    pub noise_genes_per_patient: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_stages: 3,
            patients_per_stage: 100,
            drivers_per_stage: 5,
            driver_expression_prob: 0.8,
            n_noise_genes: 200,
            noise_genes_per_patient: 10,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::ConfigInvalid(m.to_string()));
        if !(2..=4).contains(&self.n_stages) {
            return bad("n_stages must be between 2 and 4");
        }
        if self.patients_per_stage == 0 || self.drivers_per_stage == 0 {
            return bad("patients_per_stage and drivers_per_stage must be at least 1");
        }
        if !(self.driver_expression_prob > 0.0 && self.driver_expression_prob <= 1.0) {
            return bad("driver_expression_prob must lie in (0, 1]");
        }
        if self.noise_genes_per_patient > self.n_noise_genes {
            return bad("noise_genes_per_patient exceeds n_noise_genes");
        }
        Ok(())
    }

    pub fn driver_gene(stage: u8, j: usize) -> String {
        format!("DRV{stage}_{j:03}")
    }

    pub fn noise_gene(j: usize) -> String {
        format!("BKG{j:05}")
    }
}

/// Planted truth written next to a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GeneratorConfig,
    /// Driver genes keyed by stage ordinal.
    pub drivers: BTreeMap<u8, Vec<String>>,
    pub noise_genes: Vec<String>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn is_driver(&self, gene: &str) -> bool {
        self.drivers.values().any(|d| d.iter().any(|g| g == gene))
    }
}

pub fn generate(cfg: &GeneratorConfig) -> Result<(Cohort, GroundTruth), SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let drivers: BTreeMap<u8, Vec<String>> = (1..=cfg.n_stages)
        .map(|s| (s, (0..cfg.drivers_per_stage).map(|j| GeneratorConfig::driver_gene(s, j)).collect()))
        .collect();
    let noise: Vec<String> = (0..cfg.n_noise_genes).map(GeneratorConfig::noise_gene).collect();

    let mut patients = Vec::with_capacity(cfg.patients_per_stage * usize::from(cfg.n_stages));
    for stage in 1..=cfg.n_stages {
        for _ in 0..cfg.patients_per_stage {
            let mut mutations = Vec::new();
            // A patient must carry something; redraw the drivers when nothing would remain.
            while mutations.is_empty() {
                for s in 1..=stage {
                    let mut group: Vec<String> = drivers[&s]
                        .iter()
                        .filter(|_| rng.gen_bool(cfg.driver_expression_prob))
                        .cloned()
                        .collect();
                    group.shuffle(&mut rng);
                    mutations.extend(group);
                }
                if cfg.noise_genes_per_patient > 0 {
                    break;
                }
            }
            let mut background: Vec<String> = index::sample(&mut rng, noise.len(), cfg.noise_genes_per_patient)
                .into_iter()
                .map(|i| noise[i].clone())
                .collect();
            background.shuffle(&mut rng);
            mutations.extend(background);
            patients.push(Patient {
                patient_id: format!("SYN{:05}", patients.len() + 1),
                cancer_type: SYNTH_CANCER_TYPE.to_string(),
                stage: StageLabel::new(stage).expect("validated stage count"),
                mutations,
            });
        }
    }
    Ok((
        Cohort { patients },
        GroundTruth {
            config: cfg.clone(),
            drivers,
            noise_genes: noise,
        },
    ))
}
