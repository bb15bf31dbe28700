//! Wrapper feature-selection tests. Each one reduces to per-observation
//! contributions and a Wald test of their mean.
//!
//! Importance differences are taken reduced-minus-full, so the LOCO, dropout,
//! permutation and Lazy-VI targets are non-negative in expectation.

mod dropout;
mod gcm;
mod lazy;
mod loco;
mod permutation;
mod select;
mod wald;

use nalgebra::{DMatrix, DVector};

use crate::data::{select_entries, select_rows, FoldAssignment};
use crate::error::Result;
use crate::regress::{fit, predict_matrix, RegressorSpec};

pub use dropout::{dropout_test, mean_substituted};
pub use gcm::{gcm_residual_products, gcm_test, gcm_test_from_residuals, GcmIntermediate};
pub use lazy::{lazy_correction, lazy_vi_test, LazyConfig, SolveSide};
pub use loco::{loco_test, loco_test_with_full};
pub use permutation::{permutation_test, permutation_test_with_orders};
pub use select::{select_features, SelectionConfig};
pub use wald::{two_sided_p, upper_p};

/// Predictions for every row of `x`. With one fold the model is fit and
/// evaluated in-sample; with K folds each fold is predicted by a model fit on
/// the other K − 1 folds.
pub fn crossfit_predictions(
    spec: &RegressorSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: &FoldAssignment,
) -> Result<DVector<f64>> {
    if folds.k() <= 1 {
        let model = fit(spec, x, y)?;
        return predict_matrix(&model, x);
    }
    let mut out = DVector::zeros(x.nrows());
    for k in 0..folds.k() {
        let train = folds.complement(k);
        let test = folds.members(k);
        let model = fit(spec, &select_rows(x, &train), &select_entries(y, &train))?;
        let pred = predict_matrix(&model, &select_rows(x, &test))?;
        for (r, &i) in test.iter().enumerate() {
            out[i] = pred[r];
        }
    }
    Ok(out)
}

/// `dᵢ = (yᵢ − reducedᵢ)² − (yᵢ − fullᵢ)²` and the scale used for the
/// degeneracy check (mean squared residual plus the spread of `y`).
pub(crate) fn squared_error_differences(
    y: &DVector<f64>,
    reduced: &DVector<f64>,
    full: &DVector<f64>,
) -> (Vec<f64>, f64) {
    let mut scale = 0.0;
    let d = (0..y.len())
        .map(|i| {
            let a = (y[i] - reduced[i]).powi(2);
            let b = (y[i] - full[i]).powi(2);
            scale += a + b;
            a - b
        })
        .collect();
    let n = y.len() as f64;
    let ym = y.mean();
    let spread = y.iter().map(|v| (v - ym).powi(2)).sum::<f64>() / n;
    (d, scale / n + spread)
}

pub(crate) fn check_feature(p: usize, j: usize) -> Result<()> {
    if j >= p {
        return Err(crate::error::Error::invalid(format!(
            "feature index {j} out of range for {p} features"
        )));
    }
    Ok(())
}
