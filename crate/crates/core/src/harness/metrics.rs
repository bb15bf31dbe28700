use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ExperimentPlan, ReplicateOutcome};
use crate::report::Method;
use crate::simgen::ScenarioKind;

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, sd: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

/// Confusion-matrix rates of one selected set. A rate with an empty
/// denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
}

pub fn score(selected: &BTreeSet<usize>, active: &BTreeSet<usize>, tested: &[usize]) -> Scores {
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for j in tested {
        match (selected.contains(j), active.contains(j)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Scores {
        accuracy: ratio(tp + tn, tested.len()),
        precision,
        recall,
        specificity: ratio(tn, tn + fp),
        f1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub accuracy: MeanSd,
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub specificity: MeanSd,
    pub f1: MeanSd,
}

impl RateSummary {
    fn of(scores: &[Scores]) -> Self {
        let col = |f: fn(&Scores) -> f64| MeanSd::of(&scores.iter().map(f).collect::<Vec<_>>());
        Self {
            accuracy: col(|s| s.accuracy),
            precision: col(|s| s.precision),
            recall: col(|s| s.recall),
            specificity: col(|s| s.specificity),
            f1: col(|s| s.f1),
        }
    }
}

/// Per-method results; per-feature vectors follow `MetricsSummary::features`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub mean_p: Vec<f64>,
    pub sd_p: Vec<f64>,
    pub selection_rate: Vec<f64>,
    pub mean_estimate: Vec<f64>,
    pub rates: RateSummary,
    /// Absent when timings are suppressed for reproducible output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub scenario: ScenarioKind,
    pub replicates: usize,
    pub alpha: f64,
    pub feature_names: Vec<String>,
    /// Tested feature indices.
    pub features: Vec<usize>,
    pub active_set: BTreeSet<usize>,
    pub methods: BTreeMap<Method, MethodMetrics>,
    /// Each tested feature selected independently with probability 1/2.
    pub baseline: RateSummary,
}

/// `p < alpha`, with alpha = 1 selecting everything.
fn is_selected(p: f64, alpha: f64) -> bool {
    alpha >= 1.0 || p < alpha
}

impl MetricsSummary {
    pub fn from_outcomes(plan: &ExperimentPlan, outcomes: &[ReplicateOutcome]) -> Self {
        let tested = plan.tested_features();
        let active = plan.scenario.active_set();
        let mut methods = BTreeMap::new();
        for &method in &plan.methods {
            let mut p_by_feature = vec![Vec::with_capacity(outcomes.len()); tested.len()];
            let mut est_by_feature = vec![Vec::with_capacity(outcomes.len()); tested.len()];
            let mut scores = Vec::with_capacity(outcomes.len());
            let mut times = Vec::with_capacity(outcomes.len());
            for o in outcomes {
                let mut selected = BTreeSet::new();
                for (slot, &j) in tested.iter().enumerate() {
                    let r = o
                        .report
                        .result(method, j)
                        .expect("every tested feature has a result");
                    p_by_feature[slot].push(r.p_value);
                    est_by_feature[slot].push(r.estimate);
                    if is_selected(r.p_value, plan.alpha) {
                        selected.insert(j);
                    }
                }
                scores.push(score(&selected, &o.generated.active_set, &tested));
                times.push(o.report.wall_time_seconds.get(&method).copied().unwrap_or(0.0));
            }
            let p_stats: Vec<MeanSd> = p_by_feature.iter().map(|v| MeanSd::of(v)).collect();
            methods.insert(
                method,
                MethodMetrics {
                    mean_p: p_stats.iter().map(|s| s.mean).collect(),
                    sd_p: p_stats.iter().map(|s| s.sd).collect(),
                    selection_rate: p_by_feature
                        .iter()
                        .map(|v| {
                            v.iter().filter(|&&p| is_selected(p, plan.alpha)).count() as f64
                                / v.len().max(1) as f64
                        })
                        .collect(),
                    mean_estimate: est_by_feature.iter().map(|v| MeanSd::of(v).mean).collect(),
                    rates: RateSummary::of(&scores),
                    wall_time_seconds: Some(MeanSd::of(&times)),
                },
            );
        }
        let baseline: Vec<Scores> = outcomes
            .iter()
            .map(|o| {
                let mut rng = plan.replicate_stream(o.index).substream(2).rng();
                let coin: BTreeSet<usize> =
                    tested.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
                score(&coin, &o.generated.active_set, &tested)
            })
            .collect();
        let feature_names = outcomes
            .first()
            .map(|o| o.generated.data.feature_names().to_vec())
            .unwrap_or_default();
        Self {
            scenario: plan.scenario.kind,
            replicates: outcomes.len(),
            alpha: plan.alpha,
            feature_names,
            features: tested,
            active_set: active,
            methods,
            baseline: RateSummary::of(&baseline),
        }
    }

    /// Drops wall times so repeated runs serialize identically.
    pub fn without_timings(mut self) -> Self {
        for m in self.methods.values_mut() {
            m.wall_time_seconds = None;
        }
        self
    }

    /// Long-format rows `feature,method,mean_p,sd_p`.
    pub fn to_plot_csv(&self) -> String {
        let mut out = String::from("feature,method,mean_p,sd_p\n");
        for (method, m) in &self.methods {
            for (slot, &j) in self.features.iter().enumerate() {
                let name = self.feature_names.get(j).cloned().unwrap_or_else(|| j.to_string());
                out.push_str(&format!(
                    "{name},{method},{:?},{:?}\n",
                    m.mean_p[slot], m.sd_p[slot]
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_by_hand() {
        let active: BTreeSet<usize> = [0, 1, 2].into();
        let selected: BTreeSet<usize> = [0, 1, 5].into();
        let s = score(&selected, &active, &(0..6).collect::<Vec<_>>());
        assert_eq!(s.precision, 2.0 / 3.0);
        assert_eq!(s.recall, 2.0 / 3.0);
        assert_eq!(s.specificity, 2.0 / 3.0);
        assert_eq!(s.accuracy, 4.0 / 6.0);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_selection() {
        let active: BTreeSet<usize> = [0].into();
        let s = score(&BTreeSet::new(), &active, &[0, 1, 2]);
        assert_eq!((s.precision, s.recall, s.f1, s.specificity), (0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn mean_sd() {
        let m = MeanSd::of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.sd, 1.0);
        assert_eq!(MeanSd::of(&[4.0]).sd, 0.0);
    }
}
