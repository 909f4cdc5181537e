//! Drug/target table loading and cross-validated treatment recommendations.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{field, CohortError, TsvTable};

#[derive(Debug, Error)]
pub enum DrugError {
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
}

impl From<CohortError> for DrugError {
    fn from(e: CohortError) -> Self {
        match e {
            CohortError::Io { path, source } => DrugError::Io { path, source },
            CohortError::MissingColumn(c) => DrugError::MissingColumn(c),
            CohortError::MalformedRow { line, reason } => DrugError::MalformedRow { line, reason },
            other => DrugError::MalformedRow {
                line: 0,
                reason: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrugSource {
    PrimaryDb,
    ValidationDb,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DrugTargetRecord {
    /// Lowercased.
    pub drug_name: String,
    pub gene: String,
    pub action: String,
    pub source: DrugSource,
}

pub fn load_drug_table(path: &Path, source: DrugSource) -> Result<Vec<DrugTargetRecord>, DrugError> {
    records_from(&TsvTable::read(path)?, source)
}

pub fn parse_drug_table(text: &str, source: DrugSource) -> Result<Vec<DrugTargetRecord>, DrugError> {
    records_from(&TsvTable::parse(text)?, source)
}

/// Normalizes names and collapses exact duplicates, keeping first-seen order.
fn records_from(table: &TsvTable, source: DrugSource) -> Result<Vec<DrugTargetRecord>, DrugError> {
    let drug = table.column("drug_name")?;
    let gene = table.column("gene")?;
    let action = table.columns.get("action").copied();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, fields) in &table.rows {
        let rec = DrugTargetRecord {
            drug_name: field(fields, drug, *line, "drug_name")?.to_lowercase(),
            gene: field(fields, gene, *line, "gene")?.to_string(),
            action: action
                .and_then(|i| fields.get(i))
                .map(|a| a.to_lowercase())
                .unwrap_or_default(),
            source,
        };
        if seen.insert(rec.clone()) {
            out.push(rec);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrugSuggestion {
    pub drug_name: String,
    /// Distinct actions joined with `; `.
    pub action: String,
    /// The same drug/gene pair is also in the validation table.
    pub validated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub gene: String,
    /// Validated first, then by drug name.
    pub drugs: Vec<DrugSuggestion>,
}

/// One entry per requested gene (duplicates in `genes` collapse), listing every
/// primary-table drug that targets it.
pub fn recommend(
    genes: &[String],
    primary: &[DrugTargetRecord],
    validation: &[DrugTargetRecord],
) -> Vec<Recommendation> {
    let validated: HashSet<(&str, &str)> = validation
        .iter()
        .map(|r| (r.drug_name.as_str(), r.gene.as_str()))
        .collect();
    let mut by_gene: BTreeMap<&str, BTreeMap<&str, BTreeSet<&str>>> = BTreeMap::new();
    for r in primary {
        by_gene
            .entry(&r.gene)
            .or_default()
            .entry(&r.drug_name)
            .or_default()
            .insert(&r.action);
    }
    let mut listed = HashSet::new();
    genes
        .iter()
        .filter(|g| listed.insert(g.as_str()))
        .map(|g| {
            let mut drugs: Vec<DrugSuggestion> = by_gene
                .get(g.as_str())
                .into_iter()
                .flatten()
                .map(|(drug, actions)| DrugSuggestion {
                    drug_name: drug.to_string(),
                    action: actions
                        .iter()
                        .filter(|a| !a.is_empty())
                        .copied()
                        .collect::<Vec<_>>()
                        .join("; "),
                    validated: validated.contains(&(drug, g.as_str())),
                })
                .collect();
            drugs.sort_by(|a, b| b.validated.cmp(&a.validated).then_with(|| a.drug_name.cmp(&b.drug_name)));
            Recommendation {
                gene: g.clone(),
                drugs,
            }
        })
        .collect()
}

pub fn recommendations_json(recs: &[Recommendation]) -> String {
    serde_json::to_string_pretty(recs).expect("recommendations serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "drug_name\tgene\taction\n";

    #[test]
    fn row_is_normalized() {
        let recs = parse_drug_table(&format!("{HEADER}Alpelisib\tPIK3CA\tinhibitor\n"), DrugSource::PrimaryDb)
            .unwrap();
        assert_eq!(
            recs,
            vec![DrugTargetRecord {
                drug_name: "alpelisib".into(),
                gene: "PIK3CA".into(),
                action: "inhibitor".into(),
                source: DrugSource::PrimaryDb,
            }]
        );
    }

    #[test]
    fn duplicates_collapse() {
        let text = format!("{HEADER}Alpelisib\tPIK3CA\tinhibitor\nALPELISIB\tPIK3CA\tInhibitor\n");
        assert_eq!(parse_drug_table(&text, DrugSource::PrimaryDb).unwrap().len(), 1);
    }

    #[test]
    fn action_optional_and_columns_required() {
        let recs = parse_drug_table("drug_name\tgene\nX\tG\n", DrugSource::ValidationDb).unwrap();
        assert_eq!(recs[0].action, "");
        assert!(matches!(
            parse_drug_table("drug\tgene\nX\tG\n", DrugSource::PrimaryDb),
            Err(DrugError::MissingColumn(c)) if c == "drug_name"
        ));
        assert!(matches!(
            parse_drug_table("drug_name\tgene\nX\n", DrugSource::PrimaryDb),
            Err(DrugError::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn validation_flag_and_empty_genes() {
        let primary = parse_drug_table(
            &format!("{HEADER}b\tG1\tinhibitor\na\tG1\tagonist\nc\tG1\tinhibitor\nc\tG1\tbinder\n"),
            DrugSource::PrimaryDb,
        )
        .unwrap();
        let validation = parse_drug_table(&format!("{HEADER}b\tG1\t\na\tG2\t\n"), DrugSource::ValidationDb).unwrap();
        let recs = recommend(&["G1".into(), "G9".into(), "G1".into()], &primary, &validation);
        assert_eq!(recs.len(), 2);
        let names: Vec<_> = recs[0].drugs.iter().map(|d| (d.drug_name.as_str(), d.validated)).collect();
        assert_eq!(names, [("b", true), ("a", false), ("c", false)]);
        assert_eq!(recs[0].drugs[2].action, "binder; inhibitor");
        assert_eq!(recs[1].gene, "G9");
        assert!(recs[1].drugs.is_empty());
    }
}
