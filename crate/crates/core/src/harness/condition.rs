use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentPlan, MeanSd};
use crate::error::{Error, Result};
use crate::regress::{fit, predict_matrix};
use crate::simgen::generate;
use crate::theory::{condition_b_ratio, empirical_moments};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionBRow {
    pub index: usize,
    pub name: String,
    /// False for features outside the response or with degenerate moments.
    pub applicable: bool,
    pub mean_ratio: Option<f64>,
    pub sd_ratio: Option<f64>,
    pub replicates_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionBReport {
    pub replicates: usize,
    pub rows: Vec<ConditionBRow>,
}

/// Per-feature ratio of the two sides of condition (B), averaged over
/// replicates. `X̃ⱼ` and `f̃ⱼ` are in-sample residuals of `Xⱼ` and `fⱼ(Xⱼ)`
/// regressed on `X₋ⱼ` with the plan's regressor.
pub fn condition_b_report(plan: &ExperimentPlan) -> Result<ConditionBReport> {
    plan.validate()?;
    let spec = &plan.scenario;
    if !spec.kind.is_additive() {
        return Err(Error::Unsupported(format!(
            "condition (B) needs an additive scenario, got {}",
            spec.kind
        )));
    }
    let features = plan.tested_features();
    let noise_var = spec.noise_sd * spec.noise_sd;
    // ratios[r][slot]
    let ratios: Vec<Vec<Option<f64>>> = (0..plan.replicates)
        .into_par_iter()
        .map(|r| {
            let run = || -> Result<Vec<Option<f64>>> {
                let generated = generate(&plan.replicate_scenario(r))?;
                let data = &generated.data;
                let regressor = plan.regressor.clone().with_seed(plan.replicate_stream(r).substream(3));
                features
                    .iter()
                    .map(|&j| {
                        let xj = data.column(j);
                        if spec.component(j, 0.0)?.is_none() {
                            return Ok(None);
                        }
                        let fj = xj.map(|v| spec.component(j, v).ok().flatten().unwrap_or(0.0));
                        let rest = data.without_column(j);
                        let xt = &xj - predict_matrix(&fit(&regressor, &rest, &xj)?, &rest)?;
                        let ft = &fj - predict_matrix(&fit(&regressor, &rest, &fj)?, &rest)?;
                        Ok(empirical_moments(xt.as_slice(), ft.as_slice(), noise_var)
                            .and_then(|m| condition_b_ratio(&m))
                            .ok()
                            .filter(|v| v.is_finite()))
                    })
                    .collect()
            };
            run().map_err(|e| Error::Replicate {
                index: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let names = crate::data::default_feature_names(spec.p);
    let rows = features
        .iter()
        .enumerate()
        .map(|(slot, &j)| {
            let values: Vec<f64> = ratios.iter().filter_map(|r| r[slot]).collect();
            let stats = (!values.is_empty()).then(|| MeanSd::of(&values));
            ConditionBRow {
                index: j,
                name: names[j].clone(),
                applicable: stats.is_some(),
                mean_ratio: stats.map(|s| s.mean),
                sd_ratio: stats.map(|s| s.sd),
                replicates_used: values.len(),
            }
        })
        .collect();
    Ok(ConditionBReport {
        replicates: plan.replicates,
        rows,
    })
}
