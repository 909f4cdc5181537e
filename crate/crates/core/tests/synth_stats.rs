use oncoseq::synth::{generate, GeneratorConfig};
use proptest::prelude::*;

#[test]
fn driver_frequency_tracks_expression_probability() {
    let cfg = GeneratorConfig {
        n_stages: 2,
        patients_per_stage: 500,
        driver_expression_prob: 0.8,
        seed: 21,
        ..Default::default()
    };
    let (cohort, truth) = generate(&cfg).unwrap();
    // Every patient is exposed to the stage-1 drivers, so each is a 1000-patient sample.
    for gene in &truth.drivers[&1] {
        let freq = cohort.patients.iter().filter(|p| p.mutations.contains(gene)).count() as f64 / 1000.0;
        assert!((freq - 0.8).abs() <= 0.05, "{gene}: {freq}");
    }
    for gene in &truth.drivers[&2] {
        assert!(cohort.patients.iter().filter(|p| p.stage.ordinal() == 1).all(|p| !p.mutations.contains(gene)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn patients_are_nonempty_and_noise_count_exact(
        stages in 2u8..=4,
        drivers in 1usize..4,
        prob in 0.05f64..1.0,
        noise_pp in 0usize..5,
        seed in any::<u64>(),
    ) {
        let cfg = GeneratorConfig {
            n_stages: stages,
            patients_per_stage: 6,
            drivers_per_stage: drivers,
            driver_expression_prob: prob,
            n_noise_genes: 10,
            noise_genes_per_patient: noise_pp,
            seed,
        };
        let (cohort, truth) = generate(&cfg).unwrap();
        prop_assert_eq!(cohort.len(), 6 * usize::from(stages));
        for p in &cohort.patients {
            prop_assert!(!p.mutations.is_empty());
            let noise = p.mutations.iter().filter(|g| !truth.is_driver(g)).count();
            prop_assert_eq!(noise, noise_pp);
            let allowed = |g: &String| truth.drivers.iter().any(|(&s, d)| s <= p.stage.ordinal() && d.contains(g));
            prop_assert!(p.mutations.iter().filter(|g| truth.is_driver(g)).all(allowed));
        }
    }
}
