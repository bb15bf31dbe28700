use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gcm::gcm_test_with_y_predictions;
use super::loco::loco_from_predictions;
use super::{
    crossfit_predictions, dropout_test, gcm_test, lazy_vi_test, loco_test_with_full,
    permutation_test, LazyConfig,
};
use crate::data::{make_folds, Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::regress::{fit, RegressorKind, RegressorSpec};
use crate::report::{config_digest, ImportanceReport, Method, TestResult};
use crate::rng::RngStream;

/// Everything `select_features` needs besides the data and the method set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub regressor: RegressorSpec,
    /// Folds for GCM and LOCO; 1 means in-sample residuals.
    pub crossfit_k: usize,
    /// Shuffles per feature for the permutation test.
    pub permutations: usize,
    pub lazy: LazyConfig,
    /// Switch LOCO, dropout and Lazy-VI to the alternative ψ > 0.
    pub one_sided: bool,
    /// Restrict the sweep to these feature indices; `None` tests every feature.
    pub features: Option<Vec<usize>>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            regressor: RegressorSpec::default(),
            crossfit_k: 1,
            permutations: 10,
            lazy: LazyConfig::default(),
            one_sided: false,
            features: None,
        }
    }
}

/// Runs each method over every requested feature.
///
/// Randomness comes only from `rng`: fold assignment uses substream 0,
/// permutations substream 1 (split per feature), and the regressor seed is
/// replaced by substream 2.
pub fn select_features(
    data: &Dataset,
    methods: &BTreeSet<Method>,
    alpha: f64,
    config: &SelectionConfig,
    rng: &RngStream,
) -> Result<ImportanceReport> {
    if methods.is_empty() {
        return Err(Error::invalid("no methods requested"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if config.permutations == 0 {
        return Err(Error::invalid("permutations must be at least 1"));
    }
    if methods.contains(&Method::LazyVi) && config.regressor.kind != RegressorKind::Mlp {
        return Err(Error::Unsupported(format!(
            "lazy_vi needs the mlp regressor, got {}",
            config.regressor.kind
        )));
    }
    let features: Vec<usize> = match &config.features {
        Some(f) => {
            if let Some(&bad) = f.iter().find(|&&j| j >= data.p()) {
                return Err(Error::invalid(format!(
                    "feature index {bad} out of range for {} features",
                    data.p()
                )));
            }
            f.clone()
        }
        None => (0..data.p()).collect(),
    };
    let spec = config.regressor.clone().with_seed(rng.substream(2));
    spec.validate()?;
    let folds = if config.crossfit_k <= 1 {
        FoldAssignment::single(data.n())
    } else {
        make_folds(data.n(), config.crossfit_k, &rng.substream(0))?
    };
    let perm_rng = rng.substream(1);

    let mut results: Vec<TestResult> = Vec::new();
    let mut wall = BTreeMap::new();
    let mut full_model = None;
    let mut full_model_secs = 0.0;
    let one_sided = |r: TestResult| if config.one_sided { r.to_one_sided() } else { r };

    // GCM's regression of Y on X₋ⱼ is the LOCO reduced model; fit it once
    let mut reduced_y: Option<Vec<DVector<f64>>> = None;
    let mut reduced_secs = 0.0;
    if methods.contains(&Method::Gcm) && methods.contains(&Method::Loco) && data.p() >= 2 {
        let t = Instant::now();
        reduced_y = Some(
            features
                .par_iter()
                .map(|&j| crossfit_predictions(&spec, &data.without_column(j), data.y(), &folds))
                .collect::<Result<_>>()?,
        );
        reduced_secs = t.elapsed().as_secs_f64();
    }

    for &method in methods {
        let needs_full = matches!(method, Method::Dropout | Method::Permutation | Method::LazyVi);
        if needs_full && full_model.is_none() {
            let t = Instant::now();
            full_model = Some(fit(&spec, data.x(), data.y())?);
            full_model_secs = t.elapsed().as_secs_f64();
        }
        // methods sharing the full model are each charged its fitting time
        let start = Instant::now();
        let batch: Vec<TestResult> = match method {
            Method::Gcm => match &reduced_y {
                Some(pred) => features
                    .par_iter()
                    .zip(pred)
                    .map(|(&j, p)| gcm_test_with_y_predictions(data, j, &spec, &folds, p))
                    .collect::<Result<_>>()?,
                None => features
                    .par_iter()
                    .map(|&j| gcm_test(data, j, &spec, &folds))
                    .collect::<Result<_>>()?,
            },
            Method::Loco => {
                let full = crossfit_predictions(&spec, data.x(), data.y(), &folds)?;
                match &reduced_y {
                    Some(pred) => features
                        .iter()
                        .zip(pred)
                        .map(|(&j, p)| one_sided(loco_from_predictions(data.y(), p, &full, j)))
                        .collect(),
                    None => features
                        .par_iter()
                        .map(|&j| loco_test_with_full(data, j, &spec, &folds, &full).map(one_sided))
                        .collect::<Result<_>>()?,
                }
            }
            Method::Dropout => {
                let model = full_model.as_ref().expect("fitted above");
                features
                    .par_iter()
                    .map(|&j| dropout_test(data, j, model).map(one_sided))
                    .collect::<Result<_>>()?
            }
            Method::Permutation => {
                let model = full_model.as_ref().expect("fitted above");
                features
                    .par_iter()
                    .map(|&j| {
                        permutation_test(
                            data,
                            j,
                            model,
                            config.permutations,
                            &perm_rng.substream(j as u64),
                        )
                    })
                    .collect::<Result<_>>()?
            }
            Method::LazyVi => {
                let model = full_model.as_ref().expect("fitted above");
                features
                    .par_iter()
                    .map(|&j| lazy_vi_test(data, j, model, &config.lazy).map(one_sided))
                    .collect::<Result<_>>()?
            }
        };
        let mut secs = start.elapsed().as_secs_f64();
        if needs_full {
            secs += full_model_secs;
        }
        if reduced_y.is_some() && matches!(method, Method::Gcm | Method::Loco) {
            secs += reduced_secs;
        }
        wall.insert(method, secs);
        results.extend(batch);
    }

    let canonical = serde_json::to_string(&(methods, alpha, config, rng))?;
    Ok(ImportanceReport::new(
        data.feature_names().to_vec(),
        results,
        alpha,
        wall,
        config_digest(&canonical),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn data() -> Dataset {
        let x = DMatrix::from_fn(40, 2, |i, j| ((i * (j + 2)) as f64 * 0.61).sin());
        let y = DVector::from_fn(40, |i, _| 2.0 * x[(i, 0)] + 0.1 * (i as f64 * 1.3).cos());
        Dataset::from_xy(x, y).unwrap()
    }

    #[test]
    fn one_method_two_features() {
        let methods: BTreeSet<_> = [Method::Gcm].into();
        let r = select_features(&data(), &methods, 0.05, &SelectionConfig::default(), &RngStream::new(7, 0))
            .unwrap();
        assert_eq!(r.results.len(), 2);
        assert!(r.selected[&Method::Gcm].contains(&0));
        r.validate().unwrap();
    }

    #[test]
    fn shared_reduced_fit_matches_standalone_tests() {
        let d = data();
        let config = SelectionConfig::default();
        let rng = RngStream::new(3, 0);
        let both: BTreeSet<_> = [Method::Gcm, Method::Loco].into();
        let r = select_features(&d, &both, 0.05, &config, &rng).unwrap();
        let spec = config.regressor.clone().with_seed(rng.substream(2));
        let folds = FoldAssignment::single(d.n());
        for j in 0..2 {
            assert_eq!(r.result(Method::Gcm, j).unwrap(), &gcm_test(&d, j, &spec, &folds).unwrap());
            let loco = super::super::loco_test(&d, j, &spec, &folds).unwrap();
            assert_eq!(r.result(Method::Loco, j).unwrap(), &loco);
        }
    }

    #[test]
    fn empty_methods_rejected() {
        let r = select_features(
            &data(),
            &BTreeSet::new(),
            0.05,
            &SelectionConfig::default(),
            &RngStream::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn lazy_needs_mlp() {
        let methods: BTreeSet<_> = [Method::LazyVi].into();
        let r = select_features(&data(), &methods, 0.05, &SelectionConfig::default(), &RngStream::default());
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn deterministic_results_and_digest() {
        let methods: BTreeSet<_> = Method::ALL.iter().copied().filter(|m| *m != Method::LazyVi).collect();
        let cfg = SelectionConfig {
            crossfit_k: 2,
            ..SelectionConfig::default()
        };
        let a = select_features(&data(), &methods, 0.05, &cfg, &RngStream::new(3, 0)).unwrap();
        let b = select_features(&data(), &methods, 0.05, &cfg, &RngStream::new(3, 0)).unwrap();
        assert_eq!(a.results, b.results);
        assert_eq!(a.config_digest, b.config_digest);
        assert_eq!(a.results.len(), 8);
        assert_eq!(a.wall_time_seconds.len(), 4);
    }
}
