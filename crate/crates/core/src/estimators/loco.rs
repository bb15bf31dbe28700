use nalgebra::DVector;

use super::{check_feature, crossfit_predictions, squared_error_differences, wald::wald_from_samples};
use crate::data::{Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::regress::RegressorSpec;
use crate::report::{Method, TestResult};

/// Refits on X₋ⱼ and compares squared errors with the full model.
pub fn loco_test(
    data: &Dataset,
    j: usize,
    spec: &RegressorSpec,
    folds: &FoldAssignment,
) -> Result<TestResult> {
    check_feature(data.p(), j)?;
    let full = crossfit_predictions(spec, data.x(), data.y(), folds)?;
    loco_test_with_full(data, j, spec, folds, &full)
}

/// As [`loco_test`], reusing full-model predictions made with the same
/// `spec` and `folds`, so a sweep over features fits the full model once.
pub fn loco_test_with_full(
    data: &Dataset,
    j: usize,
    spec: &RegressorSpec,
    folds: &FoldAssignment,
    full_predictions: &DVector<f64>,
) -> Result<TestResult> {
    check_feature(data.p(), j)?;
    if data.p() < 2 {
        return Err(Error::invalid(
            "loco needs at least two features (the reduced model has no inputs)",
        ));
    }
    if full_predictions.len() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            got: full_predictions.len(),
        });
    }
    let reduced = crossfit_predictions(spec, &data.without_column(j), data.y(), folds)?;
    Ok(loco_from_predictions(data.y(), &reduced, full_predictions, j))
}

/// LOCO from reduced- and full-model predictions of `y`.
pub(crate) fn loco_from_predictions(
    y: &DVector<f64>,
    reduced: &DVector<f64>,
    full_predictions: &DVector<f64>,
    j: usize,
) -> TestResult {
    let (d, scale) = squared_error_differences(y, reduced, full_predictions);
    wald_from_samples(&d, scale, j, Method::Loco)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn noiseless_linear_reduced_residual_variance() {
        let n = 10;
        let x = DMatrix::from_fn(n, 2, |i, j| {
            if j == 0 {
                i as f64
            } else {
                ((i * 7) % 5) as f64
            }
        });
        let y = x.column(0).into_owned();
        let data = Dataset::from_xy(x.clone(), y.clone()).unwrap();
        let r = loco_test(&data, 0, &RegressorSpec::ols(), &FoldAssignment::single(n)).unwrap();

        // oracle: reduced ols of y on [1, x₂] by normal equations
        let z = x.column(1);
        let (zm, ym) = (z.mean(), y.mean());
        let b = z.iter().zip(y.iter()).map(|(a, c)| (a - zm) * (c - ym)).sum::<f64>()
            / z.iter().map(|a| (a - zm).powi(2)).sum::<f64>();
        let oracle = (0..n)
            .map(|i| (y[i] - ym - b * (z[i] - zm)).powi(2))
            .sum::<f64>()
            / n as f64;
        assert!((r.estimate - oracle).abs() < 1e-9, "{} vs {oracle}", r.estimate);
        assert!(r.estimate > 0.0);
        assert!(r.p_value < 0.05);
    }

    #[test]
    fn identical_models_are_degenerate() {
        // feature 0 is pure noise for a response that is exactly linear in feature 1
        let x = DMatrix::from_fn(12, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(12, |i, _| 3.0 * i as f64 - 1.0);
        let data = Dataset::from_xy(x, y).unwrap();
        let r = loco_test(&data, 0, &RegressorSpec::ols(), &FoldAssignment::single(12)).unwrap();
        assert!(r.is_degenerate());
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.estimate, 0.0);
    }
}
