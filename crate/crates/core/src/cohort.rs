//! Mutation and clinical TSV ingest, and the joined [`Cohort`].
//!
//! Both inputs are UTF-8, tab separated, with a required header line.
//! Lines starting with `#` are comments. Unknown columns are ignored.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("unknown stage `{value}` at line {line}")]
    UnknownStage { value: String, line: usize },
    #[error("conflicting clinical rows for patient `{0}`")]
    DuplicateClinical(String),
}

/// Ordinal cancer stage, 1 through 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct StageLabel(u8);

impl StageLabel {
    pub fn new(ordinal: u8) -> Option<Self> {
        (1..=4).contains(&ordinal).then_some(StageLabel(ordinal))
    }

    pub fn ordinal(self) -> u8 {
        self.0
    }

    /// Accepts `1`, `I`, `Stage I`, `stage1`, `Stage 1` in any case. A trailing
    /// substage letter (`Stage IIA`) is folded into its stage.
    pub fn parse(raw: &str) -> Option<Self> {
        let mut s = raw.trim().to_ascii_uppercase();
        if let Some(rest) = s.strip_prefix("STAGE") {
            s = rest.trim_start().to_string();
        }
        if s.len() > 1 && matches!(s.as_bytes()[s.len() - 1], b'A' | b'B' | b'C') {
            s.pop();
        }
        let ordinal = match s.as_str() {
            "1" | "I" => 1,
            "2" | "II" => 2,
            "3" | "III" => 3,
            "4" | "IV" => 4,
            _ => return None,
        };
        StageLabel::new(ordinal)
    }

    pub fn roman(self) -> &'static str {
        ["I", "II", "III", "IV"][usize::from(self.0 - 1)]
    }
}

impl TryFrom<u8> for StageLabel {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        StageLabel::new(value).ok_or_else(|| format!("stage ordinal {value} outside 1..=4"))
    }
}

impl From<StageLabel> for u8 {
    fn from(s: StageLabel) -> u8 {
        s.0
    }
}

impl fmt::Display for StageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationRecord {
    pub patient_id: String,
    pub gene: String,
    pub sample_order: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClinicalRecord {
    pub patient_id: String,
    pub cancer_type: String,
    pub stage: StageLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patient {
    pub patient_id: String,
    pub cancer_type: String,
    pub stage: StageLabel,
    /// Gene symbols in sequence order.
    pub mutations: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cohort {
    pub patients: Vec<Patient>,
}

/// Counts of what the clinical/mutation join dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardSummary {
    /// Mutation rows whose patient has no clinical record.
    pub unmatched_mutations: usize,
    /// Clinical patients without any mutation rows.
    pub no_mutations: usize,
    /// Distinct patients seen in the mutation table but not the clinical table.
    pub no_clinical: usize,
}

pub(crate) struct TsvTable {
    pub(crate) columns: HashMap<String, usize>,
    /// (1-based line number, fields)
    pub(crate) rows: Vec<(usize, Vec<String>)>,
}

impl TsvTable {
    pub(crate) fn read(path: &Path) -> Result<Self, CohortError> {
        let text = fs::read_to_string(path).map_err(|source| CohortError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub(crate) fn parse(text: &str) -> Result<Self, CohortError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
            .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
        let columns = match lines.next() {
            Some((_, header)) => header
                .split('\t')
                .enumerate()
                .map(|(i, name)| (name.trim().to_string(), i))
                .collect(),
            None => HashMap::new(),
        };
        let rows = lines
            .map(|(n, l)| (n, l.split('\t').map(|f| f.trim().to_string()).collect()))
            .collect();
        Ok(TsvTable { columns, rows })
    }

    pub(crate) fn column(&self, name: &str) -> Result<usize, CohortError> {
        self.columns
            .get(name)
            .copied()
            .ok_or_else(|| CohortError::MissingColumn(name.to_string()))
    }
}

pub(crate) fn field<'a>(fields: &'a [String], idx: usize, line: usize, name: &str) -> Result<&'a str, CohortError> {
    match fields.get(idx) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(CohortError::MalformedRow {
            line,
            reason: format!("empty or missing `{name}`"),
        }),
    }
}

pub fn parse_mutations(path: &Path) -> Result<Vec<MutationRecord>, CohortError> {
    parse_mutations_str(&TsvTable::read(path)?)
}

pub fn parse_mutations_text(text: &str) -> Result<Vec<MutationRecord>, CohortError> {
    parse_mutations_str(&TsvTable::parse(text)?)
}

fn parse_mutations_str(table: &TsvTable) -> Result<Vec<MutationRecord>, CohortError> {
    let pid = table.column("patient_id")?;
    let gene = table.column("gene")?;
    let order = table.columns.get("sample_order").copied();
    table
        .rows
        .iter()
        .map(|(line, fields)| {
            let g = field(fields, gene, *line, "gene")?;
            if g.chars().any(char::is_whitespace) {
                return Err(CohortError::MalformedRow {
                    line: *line,
                    reason: format!("gene symbol `{g}` contains whitespace"),
                });
            }
            let sample_order = match order.and_then(|i| fields.get(i)).filter(|v| !v.is_empty()) {
                Some(v) => v.parse().map_err(|_| CohortError::MalformedRow {
                    line: *line,
                    reason: format!("sample_order `{v}` is not a non-negative integer"),
                })?,
                None => 0,
            };
            Ok(MutationRecord {
                patient_id: field(fields, pid, *line, "patient_id")?.to_string(),
                gene: g.to_string(),
                sample_order,
            })
        })
        .collect()
}

pub fn parse_clinical(path: &Path) -> Result<Vec<ClinicalRecord>, CohortError> {
    parse_clinical_str(&TsvTable::read(path)?)
}

pub fn parse_clinical_text(text: &str) -> Result<Vec<ClinicalRecord>, CohortError> {
    parse_clinical_str(&TsvTable::parse(text)?)
}

fn parse_clinical_str(table: &TsvTable) -> Result<Vec<ClinicalRecord>, CohortError> {
    let pid = table.column("patient_id")?;
    let ctype = table.column("cancer_type")?;
    let stage = table.column("stage")?;
    table
        .rows
        .iter()
        .map(|(line, fields)| {
            let raw = fields.get(stage).map(String::as_str).unwrap_or("");
            let stage = StageLabel::parse(raw).ok_or_else(|| CohortError::UnknownStage {
                value: raw.to_string(),
                line: *line,
            })?;
            Ok(ClinicalRecord {
                patient_id: field(fields, pid, *line, "patient_id")?.to_string(),
                cancer_type: field(fields, ctype, *line, "cancer_type")?.to_string(),
                stage,
            })
        })
        .collect()
}

/// Joins mutations onto clinical records. Patient order follows the clinical
/// table; each mutation sequence is sorted by `sample_order`, stable on file order.
pub fn build_cohort(
    mutations: &[MutationRecord],
    clinical: &[ClinicalRecord],
) -> Result<(Cohort, DiscardSummary), CohortError> {
    let mut seen: HashMap<&str, &ClinicalRecord> = HashMap::new();
    let mut order = Vec::new();
    for rec in clinical {
        match seen.get(rec.patient_id.as_str()) {
            Some(prev) if *prev != rec => {
                return Err(CohortError::DuplicateClinical(rec.patient_id.clone()))
            }
            Some(_) => {}
            None => {
                seen.insert(&rec.patient_id, rec);
                order.push(rec);
            }
        }
    }

    let mut by_patient: HashMap<&str, Vec<&MutationRecord>> = HashMap::new();
    let mut summary = DiscardSummary::default();
    let mut orphans = HashSet::new();
    for m in mutations {
        if seen.contains_key(m.patient_id.as_str()) {
            by_patient.entry(&m.patient_id).or_default().push(m);
        } else {
            summary.unmatched_mutations += 1;
            orphans.insert(m.patient_id.as_str());
        }
    }
    summary.no_clinical = orphans.len();

    let mut patients = Vec::with_capacity(order.len());
    for rec in order {
        let Some(mut muts) = by_patient.remove(rec.patient_id.as_str()) else {
            summary.no_mutations += 1;
            continue;
        };
        muts.sort_by_key(|m| m.sample_order);
        patients.push(Patient {
            patient_id: rec.patient_id.clone(),
            cancer_type: rec.cancer_type.clone(),
            stage: rec.stage,
            mutations: muts.into_iter().map(|m| m.gene.clone()).collect(),
        });
    }
    Ok((Cohort { patients }, summary))
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    /// Patients per stage, ascending by stage.
    pub fn stage_sizes(&self) -> BTreeMap<StageLabel, usize> {
        let mut sizes = BTreeMap::new();
        for p in &self.patients {
            *sizes.entry(p.stage).or_insert(0) += 1;
        }
        sizes
    }

    /// Patients per cancer type code.
    pub fn cancer_type_sizes(&self) -> BTreeMap<String, usize> {
        let mut sizes = BTreeMap::new();
        for p in &self.patients {
            *sizes.entry(p.cancer_type.clone()).or_insert(0) += 1;
        }
        sizes
    }

    /// Cancer types with at least `min_class_size` patients.
    pub fn eligible_cancer_types(&self, min_class_size: usize) -> Vec<String> {
        self.cancer_type_sizes()
            .into_iter()
            .filter(|(_, n)| *n >= min_class_size)
            .map(|(t, _)| t)
            .collect()
    }

    pub fn restrict_to_type(&self, cancer_type: &str) -> Cohort {
        Cohort {
            patients: self
                .patients
                .iter()
                .filter(|p| p.cancer_type == cancer_type)
                .cloned()
                .collect(),
        }
    }

    pub fn patient(&self, id: &str) -> Option<&Patient> {
        self.patients.iter().find(|p| p.patient_id == id)
    }

    /// Checks the structural invariants, returning a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let mut ids = HashSet::new();
        for p in &self.patients {
            if !ids.insert(p.patient_id.as_str()) {
                return Err(format!("duplicate patient `{}`", p.patient_id));
            }
            if p.mutations.is_empty() {
                return Err(format!("patient `{}` has no mutations", p.patient_id));
            }
            if p.cancer_type.is_empty() {
                return Err(format!("patient `{}` has empty cancer type", p.patient_id));
            }
            if let Some(g) = p
                .mutations
                .iter()
                .find(|g| g.is_empty() || g.chars().any(char::is_whitespace))
            {
                return Err(format!("patient `{}` has invalid gene `{g}`", p.patient_id));
            }
        }
        Ok(())
    }

    pub fn mutations_tsv(&self) -> String {
        let mut out = String::from("patient_id\tgene\tsample_order\n");
        for p in &self.patients {
            for g in &p.mutations {
                out.push_str(&format!("{}\t{}\t0\n", p.patient_id, g));
            }
        }
        out
    }

    pub fn clinical_tsv(&self) -> String {
        let mut out = String::from("patient_id\tcancer_type\tstage\n");
        for p in &self.patients {
            out.push_str(&format!(
                "{}\t{}\tStage {}\n",
                p.patient_id,
                p.cancer_type,
                p.stage.roman()
            ));
        }
        out
    }

    /// Writes the two TSV tables, re-parseable by [`parse_mutations`] and [`parse_clinical`].
    pub fn write_tsv(&self, mutations: &Path, clinical: &Path) -> std::io::Result<()> {
        fs::File::create(mutations)?.write_all(self.mutations_tsv().as_bytes())?;
        fs::File::create(clinical)?.write_all(self.clinical_tsv().as_bytes())?;
        Ok(())
    }

    pub fn read_tsv(mutations: &Path, clinical: &Path) -> Result<(Cohort, DiscardSummary), CohortError> {
        build_cohort(&parse_mutations(mutations)?, &parse_clinical(clinical)?)
    }
}
