use std::collections::BTreeSet;

use proptest::prelude::*;

use vimp::harness::{run_plan, run_replicates, score, ExperimentPlan, MetricsSummary};
use vimp::regress::RegressorSpec;
use vimp::simgen::{generate, Link, ScenarioKind, ScenarioSpec};
use vimp::{Method, RngStream};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn active_set_ignores_seed(a in any::<u64>(), b in any::<u64>()) {
        for kind in [ScenarioKind::LinearA, ScenarioKind::AdditiveB, ScenarioKind::InteractionC, ScenarioKind::SingleIndexD] {
            let x = generate(&ScenarioSpec::new(kind, 20, RngStream::new(a, 0))).unwrap();
            let y = generate(&ScenarioSpec::new(kind, 20, RngStream::new(b, 0))).unwrap();
            prop_assert_eq!(x.active_set, y.active_set);
        }
    }

    #[test]
    fn scores_invariant_under_relabeling(
        selected in prop::collection::btree_set(0usize..12, 0..12),
        active in prop::collection::btree_set(0usize..12, 0..12),
        shift in 0usize..12,
    ) {
        let tested: Vec<usize> = (0..12).collect();
        let relabel = |s: &BTreeSet<usize>| s.iter().map(|j| (j + shift) % 12).collect::<BTreeSet<_>>();
        let a = score(&selected, &active, &tested);
        let b = score(&relabel(&selected), &relabel(&active), &tested);
        prop_assert_eq!(a, b);
        for v in [a.accuracy, a.precision, a.recall, a.specificity, a.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn single_index_response_stays_near_unit_interval(seed in any::<u64>()) {
        let spec = ScenarioSpec::new(ScenarioKind::SingleIndexD, 200, RngStream::new(seed, 0));
        let g = generate(&spec).unwrap();
        prop_assert_eq!(spec.link, Link::Sigmoid);
        prop_assert!(g.data.y().iter().all(|y| (y - 0.5).abs() <= 0.5 + 6.0 * spec.noise_sd));
    }
}

#[test]
fn design_columns_are_standardized_at_large_n() {
    let n = 100_000;
    let g = generate(&ScenarioSpec::new(ScenarioKind::LinearA, n, RngStream::new(1, 0))).unwrap();
    let band_mean = 5.0 / (n as f64).sqrt();
    // Var of a sample variance of N(0, 1) data is 2/(n − 1)
    let band_var = 5.0 * (2.0 / n as f64).sqrt();
    for j in 0..g.data.p() {
        let col = g.data.column(j);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < band_mean, "column {j} mean {mean}");
        assert!((var - 1.0).abs() < band_var, "column {j} var {var}");
    }
}

#[test]
fn pooled_mean_p_lies_between_half_run_means() {
    let plan = ExperimentPlan::new(
        ScenarioSpec::new(ScenarioKind::LinearA, 200, RngStream::default()),
        [Method::Gcm, Method::Loco].into(),
        RegressorSpec::ols(),
        8,
        RngStream::new(3, 0),
    );
    let outcomes = run_replicates(&plan).unwrap();
    let pooled = MetricsSummary::from_outcomes(&plan, &outcomes);
    let first = MetricsSummary::from_outcomes(&plan, &outcomes[..4]);
    let second = MetricsSummary::from_outcomes(&plan, &outcomes[4..]);
    for (m, metrics) in &pooled.methods {
        for (slot, &mean) in metrics.mean_p.iter().enumerate() {
            let (a, b) = (first.methods[m].mean_p[slot], second.methods[m].mean_p[slot]);
            assert!(mean >= a.min(b) - 1e-12 && mean <= a.max(b) + 1e-12);
        }
    }
    assert_eq!(pooled.without_timings(), run_plan(&plan).unwrap().without_timings());
}
