use nalgebra::DVector;

use super::{check_feature, crossfit_predictions, wald::wald_from_samples};
use crate::data::{Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::regress::RegressorSpec;
use crate::report::{Method, TestResult};

/// Per-sample residual products `Rᵢ = (Xᵢⱼ − f̂(Xᵢ,₋ⱼ))·(Yᵢ − ĝ(Xᵢ,₋ⱼ))`,
/// with the two residual vectors kept for inspection.
#[derive(Debug, Clone)]
pub struct GcmIntermediate {
    pub residual_products: Vec<f64>,
    pub x_residuals: DVector<f64>,
    pub y_residuals: DVector<f64>,
}

pub fn gcm_residual_products(
    data: &Dataset,
    j: usize,
    spec: &RegressorSpec,
    folds: &FoldAssignment,
) -> Result<GcmIntermediate> {
    residual_products(data, j, spec, folds, None)
}

fn residual_products(
    data: &Dataset,
    j: usize,
    spec: &RegressorSpec,
    folds: &FoldAssignment,
    y_predictions: Option<&DVector<f64>>,
) -> Result<GcmIntermediate> {
    check_feature(data.p(), j)?;
    if data.p() < 2 {
        return Err(Error::invalid(
            "gcm needs at least two features (the conditioning set is empty)",
        ));
    }
    if folds.n() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            got: folds.n(),
        });
    }
    let rest = data.without_column(j);
    let xj = data.column(j);
    let x_residuals = &xj - crossfit_predictions(spec, &rest, &xj, folds)?;
    let y_residuals = match y_predictions {
        Some(pred) if pred.len() == data.n() => data.y() - pred,
        Some(pred) => {
            return Err(Error::DimensionMismatch {
                expected: data.n(),
                got: pred.len(),
            })
        }
        None => data.y() - crossfit_predictions(spec, &rest, data.y(), folds)?,
    };
    let residual_products = x_residuals
        .iter()
        .zip(y_residuals.iter())
        .map(|(a, b)| a * b)
        .collect();
    Ok(GcmIntermediate {
        residual_products,
        x_residuals,
        y_residuals,
    })
}

/// Studentized mean of residual products, two-sided.
pub fn gcm_test(
    data: &Dataset,
    j: usize,
    spec: &RegressorSpec,
    folds: &FoldAssignment,
) -> Result<TestResult> {
    gcm_test_inner(data, j, spec, folds, None)
}

/// As [`gcm_test`], reusing predictions of Y from X₋ⱼ made with the same
/// `spec` and `folds` (the LOCO reduced model).
pub(crate) fn gcm_test_with_y_predictions(
    data: &Dataset,
    j: usize,
    spec: &RegressorSpec,
    folds: &FoldAssignment,
    y_predictions: &DVector<f64>,
) -> Result<TestResult> {
    gcm_test_inner(data, j, spec, folds, Some(y_predictions))
}

fn gcm_test_inner(
    data: &Dataset,
    j: usize,
    spec: &RegressorSpec,
    folds: &FoldAssignment,
    y_predictions: Option<&DVector<f64>>,
) -> Result<TestResult> {
    let inter = residual_products(data, j, spec, folds, y_predictions)?;
    // degeneracy is judged against the raw data, not the residuals, so that
    // residuals at round-off level count as zero
    let n = data.n() as f64;
    let scale = (data.column(j).norm_squared() / n).sqrt() * (data.y().norm_squared() / n).sqrt();
    Ok(wald_from_samples(&inter.residual_products, scale, j, Method::Gcm))
}

/// GCM test from already computed residual vectors.
pub fn gcm_test_from_residuals(
    x_residuals: &DVector<f64>,
    y_residuals: &DVector<f64>,
    j: usize,
) -> TestResult {
    let r: Vec<f64> = x_residuals
        .iter()
        .zip(y_residuals.iter())
        .map(|(a, b)| a * b)
        .collect();
    let n = r.len() as f64;
    let scale = (x_residuals.norm_squared() / n).sqrt() * (y_residuals.norm_squared() / n).sqrt();
    wald_from_samples(&r, scale, j, Method::Gcm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn hand_residuals_give_zero_statistic() {
        let a = DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, -1.0, -1.0]);
        let r = gcm_test_from_residuals(&a, &b, 0);
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn orthogonal_design_forces_residuals() {
        // X₁, X₂ and Y are mutually orthogonal with zero means, so ols of X₁
        // and Y on X₂ leaves X₁ and Y themselves as residuals
        let x = DMatrix::from_row_slice(
            4,
            2,
            &[1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0, 1.0],
        );
        let y = DVector::from_vec(vec![1.0, 1.0, -1.0, -1.0]);
        let data = Dataset::from_xy(x, y).unwrap();
        let inter =
            gcm_residual_products(&data, 0, &RegressorSpec::ols(), &FoldAssignment::single(4))
                .unwrap();
        for (got, want) in inter.residual_products.iter().zip([1.0, -1.0, -1.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let r = gcm_test(&data, 0, &RegressorSpec::ols(), &FoldAssignment::single(4)).unwrap();
        assert!(r.estimate.abs() < 1e-12);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn response_in_span_is_degenerate() {
        let x = DMatrix::from_fn(20, 3, |i, j| ((i * (j + 2)) as f64 * 0.37).sin());
        let y = DVector::from_fn(20, |i, _| 2.0 * x[(i, 1)] - x[(i, 2)] + 0.5);
        let data = Dataset::from_xy(x, y).unwrap();
        let r = gcm_test(&data, 0, &RegressorSpec::ols(), &FoldAssignment::single(20)).unwrap();
        assert!(r.is_degenerate());
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn single_feature_is_rejected() {
        let data = Dataset::from_xy(
            DMatrix::from_fn(5, 1, |i, _| i as f64),
            DVector::from_fn(5, |i, _| i as f64),
        )
        .unwrap();
        assert!(gcm_test(&data, 0, &RegressorSpec::ols(), &FoldAssignment::single(5)).is_err());
    }
}
