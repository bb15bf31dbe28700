//! Monte Carlo driver: simulate, select, score against the ground truth.
//!
//! Replicate `r` draws its data from stream `(base_seed.seed, r)`; feature
//! selection uses substream 1 of that stream and the coin-flip baseline
//! substream 2. Replicates run in parallel and are reduced in index order.

mod are;
mod condition;
mod ks;
mod metrics;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{select_features, LazyConfig, SelectionConfig};
use crate::regress::RegressorSpec;
use crate::report::{ImportanceReport, Method};
use crate::rng::RngStream;
use crate::simgen::{generate, GeneratedData, ScenarioSpec};

pub use are::{empirical_are, population_moments, AreComparison};
pub use condition::{condition_b_report, ConditionBReport, ConditionBRow};
pub use ks::{ks_uniform, KsResult};
pub use metrics::{score, MeanSd, MethodMetrics, MetricsSummary, RateSummary, Scores};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub scenario: ScenarioSpec,
    pub methods: BTreeSet<Method>,
    pub regressor: RegressorSpec,
    pub replicates: usize,
    /// Selection level; 1 selects every feature.
    pub alpha: f64,
    pub crossfit_k: usize,
    pub base_seed: RngStream,
    pub permutations: usize,
    pub lazy: LazyConfig,
    pub one_sided: bool,
    /// Features to test and score; `None` means all.
    pub features: Option<Vec<usize>>,
}

impl ExperimentPlan {
    pub fn new(
        scenario: ScenarioSpec,
        methods: BTreeSet<Method>,
        regressor: RegressorSpec,
        replicates: usize,
        base_seed: RngStream,
    ) -> Self {
        Self {
            scenario,
            methods,
            regressor,
            replicates,
            alpha: 0.05,
            crossfit_k: 1,
            base_seed,
            permutations: 10,
            lazy: LazyConfig::default(),
            one_sided: false,
            features: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods requested"));
        }
        self.scenario.validate()?;
        self.regressor.validate()?;
        if let Some(f) = &self.features {
            if let Some(&bad) = f.iter().find(|&&j| j >= self.scenario.p) {
                return Err(Error::invalid(format!(
                    "feature {bad} out of range for p = {}",
                    self.scenario.p
                )));
            }
        }
        Ok(())
    }

    /// Scenario of replicate `r`, seeded by stream `(base_seed.seed, r)`.
    pub fn replicate_scenario(&self, r: usize) -> ScenarioSpec {
        let mut spec = self.scenario.clone();
        spec.seed = self.replicate_stream(r);
        spec
    }

    pub fn replicate_stream(&self, r: usize) -> RngStream {
        RngStream::new(self.base_seed.seed, r as u64)
    }

    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            regressor: self.regressor.clone(),
            crossfit_k: self.crossfit_k,
            permutations: self.permutations,
            lazy: self.lazy,
            one_sided: self.one_sided,
            features: self.features.clone(),
        }
    }

    pub fn tested_features(&self) -> Vec<usize> {
        self.features
            .clone()
            .unwrap_or_else(|| (0..self.scenario.p).collect())
    }
}

/// One simulated replicate and its selection report.
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub generated: GeneratedData,
    pub report: ImportanceReport,
}

/// Runs every replicate of `plan`, in index order.
pub fn run_replicates(plan: &ExperimentPlan) -> Result<Vec<ReplicateOutcome>> {
    plan.validate()?;
    let config = plan.selection_config();
    // the report's own selected sets need alpha < 1; scoring uses plan.alpha
    let report_alpha = plan.alpha.min(0.5);
    (0..plan.replicates)
        .into_par_iter()
        .map(|r| {
            let run = || -> Result<ReplicateOutcome> {
                let generated = generate(&plan.replicate_scenario(r))?;
                let report = select_features(
                    &generated.data,
                    &plan.methods,
                    report_alpha,
                    &config,
                    &plan.replicate_stream(r).substream(1),
                )?;
                Ok(ReplicateOutcome {
                    index: r,
                    generated,
                    report,
                })
            };
            run().map_err(|e| Error::Replicate {
                index: r,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Aggregated selection metrics over all replicates of `plan`.
pub fn run_plan(plan: &ExperimentPlan) -> Result<MetricsSummary> {
    let outcomes = run_replicates(plan)?;
    Ok(MetricsSummary::from_outcomes(plan, &outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::ScenarioKind;

    fn small_plan(methods: &[Method], replicates: usize) -> ExperimentPlan {
        let mut scenario = ScenarioSpec::new(ScenarioKind::LinearA, 200, RngStream::default());
        scenario.noise_sd = 0.5;
        ExperimentPlan::new(
            scenario,
            methods.iter().copied().collect(),
            RegressorSpec::ols(),
            replicates,
            RngStream::new(11, 0),
        )
    }

    #[test]
    fn alpha_one_selects_everything() {
        let mut plan = small_plan(&[Method::Gcm], 2);
        plan.alpha = 1.0;
        let s = run_plan(&plan).unwrap();
        let r = s.methods[&Method::Gcm].rates;
        assert_eq!((r.recall.mean, r.specificity.mean), (1.0, 0.0));
    }

    #[test]
    fn tiny_alpha_selects_nothing() {
        let mut plan = small_plan(&[Method::Loco], 2);
        plan.alpha = 1e-300;
        let r = run_plan(&plan).unwrap().methods[&Method::Loco].rates;
        assert_eq!((r.recall.mean, r.specificity.mean), (0.0, 1.0));
    }

    #[test]
    fn noiseless_data_recovers_large_coefficients() {
        let mut plan = small_plan(&[Method::Gcm], 1);
        plan.scenario.noise_sd = 0.0;
        plan.features = Some((2..8).collect());
        let s = run_plan(&plan).unwrap();
        assert!(s.methods[&Method::Gcm].selection_rate.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let plan = small_plan(&[Method::Gcm, Method::Loco], 3);
        let a = run_plan(&plan).unwrap().without_timings();
        let b = run_plan(&plan).unwrap().without_timings();
        assert_eq!(a, b);
    }

    #[test]
    fn replicate_failure_names_the_index() {
        let plan = small_plan(&[Method::LazyVi], 1);
        match run_plan(&plan) {
            Err(Error::Replicate { index: 0, source }) => {
                assert!(matches!(*source, Error::Unsupported(_)))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn are_of_a_method_with_itself_is_one() {
        let mut plan = small_plan(&[Method::Gcm], 50);
        plan.scenario = ScenarioSpec::custom(vec![1.0, 1.0], 100, RngStream::default());
        let c = empirical_are(&plan, Method::Gcm, Method::Gcm, 0).unwrap();
        assert_eq!(c.empirical_are, Some(1.0));
        let ab = empirical_are(&plan, Method::Gcm, Method::Loco, 0).unwrap();
        let ba = empirical_are(&plan, Method::Loco, Method::Gcm, 0).unwrap();
        assert!((ab.empirical_are.unwrap() * ba.empirical_are.unwrap() - 1.0).abs() < 1e-10);
        assert!(ab.theory_are.unwrap() > 1.0);
    }

    #[test]
    fn too_few_replicates_for_are() {
        let plan = small_plan(&[Method::Gcm], 10);
        assert!(empirical_are(&plan, Method::Gcm, Method::Loco, 0).is_err());
    }

    #[test]
    fn condition_b_rejects_interaction_scenario() {
        let mut plan = small_plan(&[Method::Gcm], 1);
        plan.scenario = ScenarioSpec::new(ScenarioKind::InteractionC, 100, RngStream::default());
        assert!(matches!(condition_b_report(&plan), Err(Error::Unsupported(_))));
    }

    #[test]
    fn condition_b_linear_active_features_hold() {
        let plan = small_plan(&[Method::Gcm], 3);
        let report = condition_b_report(&plan).unwrap();
        for row in &report.rows {
            if row.index < 8 {
                assert!(row.mean_ratio.unwrap() > 1.0, "{row:?}");
            } else {
                assert!(!row.applicable);
            }
        }
    }
}
