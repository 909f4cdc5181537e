mod common;

use std::collections::BTreeSet;

use common::{fixture, oracle_stage_gene};
use oncoseq::cohort::{Cohort, StageLabel};
use oncoseq::drugrec::{load_drug_table, parse_drug_table, recommend, DrugSource};
use oncoseq::preprocess::{encode_with, MutationVocabulary, Unselected};
use oncoseq::progression::{
    build_stage_gene_matrix, heatmap_csv, parse_heatmap_csv, predict_future, StageGeneMatrix,
};
use proptest::prelude::*;

fn five() -> Cohort {
    Cohort::read_tsv(&fixture("five_mutations.tsv"), &fixture("five_clinical.tsv")).unwrap().0
}

fn five_matrix() -> StageGeneMatrix {
    let cohort = five();
    let vocab = MutationVocabulary::new(["TP53", "PIK3CA", "CDH1"].map(String::from), 3);
    let ds = encode_with(&cohort, &vocab, 8, Unselected::Drop);
    build_stage_gene_matrix(&ds, &vocab, &cohort).unwrap()
}

#[test]
fn five_patient_matrix_matches_recount() {
    let cohort = five();
    let m = five_matrix();
    let ids: Vec<String> = cohort.patients.iter().map(|p| p.patient_id.clone()).collect();
    let want = oracle_stage_gene(&cohort, &ids, &m.genes);
    for (s, row) in want {
        assert_eq!(m.row(s).unwrap(), row.as_slice());
    }
}

#[test]
fn heatmap_csv_matches_hand_written_golden() {
    let golden = std::fs::read_to_string(fixture("heatmap_2x3.csv")).unwrap();
    let m = five_matrix();
    assert_eq!(heatmap_csv(&m), golden);
    let back = parse_heatmap_csv(&golden).unwrap();
    assert_eq!(heatmap_csv(&back), golden);
    for (a, b) in back.values.iter().flatten().zip(m.values.iter().flatten()) {
        assert!((a - b).abs() <= 5e-5);
    }
}

#[test]
fn five_row_drug_table_collapses_duplicate() {
    let recs = load_drug_table(&fixture("drugs_5.tsv"), DrugSource::PrimaryDb).unwrap();
    assert_eq!(recs.len(), 4);
}

#[test]
fn pik3ca_fixture_recommendation() {
    let primary = load_drug_table(&fixture("drugs_primary.tsv"), DrugSource::PrimaryDb).unwrap();
    let validation = load_drug_table(&fixture("drugs_validation.tsv"), DrugSource::ValidationDb).unwrap();
    let recs = recommend(&["PIK3CA".into(), "BRCA1".into(), "CDH1".into()], &primary, &validation);
    let names: Vec<&str> = recs[0].drugs.iter().map(|d| d.drug_name.as_str()).collect();
    assert_eq!(names, ["alpelisib", "copanlisib", "pilaralisib"]);
    assert!(recs[0].drugs.iter().all(|d| d.validated));
    assert_eq!(recs[1].drugs.len(), 1);
    assert!(!recs[1].drugs[0].validated);
    assert!(recs[2].drugs.is_empty());
}

const TABLE_ROWS: [&str; 6] = [
    "Alpelisib\tPIK3CA\tinhibitor",
    "Copanlisib\tPIK3CA\tinhibitor",
    "Olaparib\tBRCA1\tinhibitor",
    "Olaparib\tBRCA2\tinhibitor",
    "Tamoxifen\tESR1\tantagonist",
    "Fulvestrant\tESR1\tantagonist",
];

proptest! {
    #[test]
    fn recommendations_ignore_row_order(
        primary_order in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
        validation_rows in prop::collection::vec(0usize..6, 0..6),
    ) {
        let table = |idx: &[usize]| {
            let mut text = String::from("drug_name\tgene\taction\n");
            for &i in idx {
                text.push_str(TABLE_ROWS[i]);
                text.push('\n');
            }
            text
        };
        let sorted: Vec<usize> = (0..6).collect();
        let mut val_sorted = validation_rows.clone();
        val_sorted.sort_unstable();
        let genes: Vec<String> = ["ESR1", "PIK3CA", "BRCA2", "KRAS"].map(String::from).to_vec();
        let a = recommend(
            &genes,
            &parse_drug_table(&table(&primary_order), DrugSource::PrimaryDb).unwrap(),
            &parse_drug_table(&table(&validation_rows), DrugSource::ValidationDb).unwrap(),
        );
        let b = recommend(
            &genes,
            &parse_drug_table(&table(&sorted), DrugSource::PrimaryDb).unwrap(),
            &parse_drug_table(&table(&val_sorted), DrugSource::ValidationDb).unwrap(),
        );
        prop_assert_eq!(a, b);
    }

    #[test]
    fn future_never_repeats_carried_genes(
        values in prop::collection::vec(0.0f64..1.0, 8),
        carried in prop::collection::btree_set(0usize..8, 0..8),
        threshold in 0.0f64..1.0,
    ) {
        let genes: Vec<String> = (0..8).map(|i| format!("G{i}")).collect();
        let stage = StageLabel::new(2).unwrap();
        let m = StageGeneMatrix { stages: vec![stage], genes: genes.clone(), values: vec![values.clone()] };
        let mine: Vec<String> = carried.iter().map(|&i| genes[i].clone()).collect();
        let pred = predict_future("P", &mine, stage, &m, threshold).unwrap();
        let listed: BTreeSet<&str> = pred.future.iter().map(|f| f.gene.as_str()).collect();
        for (i, g) in genes.iter().enumerate() {
            let expected = values[i] >= threshold && !carried.contains(&i);
            prop_assert_eq!(listed.contains(g.as_str()), expected);
        }
        prop_assert!(pred.future.windows(2).all(|w| w[0].probability >= w[1].probability));
    }
}
