use nalgebra::DMatrix;

use super::{check_feature, squared_error_differences, wald::wald_from_samples};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::regress::{predict_matrix, FittedModel};
use crate::report::{Method, TestResult};

/// `X` with column `j` replaced by its sample mean. A constant column is
/// left bit-for-bit unchanged.
pub fn mean_substituted(x: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    let mut out = x.clone();
    let col = x.column(j);
    let first = col[0];
    let mu = if col.iter().all(|&v| v == first) {
        first
    } else {
        col.mean()
    };
    out.column_mut(j).fill(mu);
    out
}

/// Mean-substitution importance of feature `j` for an already trained model.
pub fn dropout_test(data: &Dataset, j: usize, full_model: &FittedModel) -> Result<TestResult> {
    check_feature(data.p(), j)?;
    if full_model.input_dim() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            got: full_model.input_dim(),
        });
    }
    let full = predict_matrix(full_model, data.x())?;
    let reduced = predict_matrix(full_model, &mean_substituted(data.x(), j))?;
    let (d, scale) = squared_error_differences(data.y(), &reduced, &full);
    Ok(wald_from_samples(&d, scale, j, Method::Dropout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::{fit, LinearModel, RegressorSpec};
    use nalgebra::DVector;

    #[test]
    fn constant_column_gives_zero() {
        let x = DMatrix::from_fn(8, 2, |i, j| if j == 1 { 0.1 } else { i as f64 });
        let y = DVector::from_fn(8, |i, _| (i as f64).sin());
        let data = Dataset::from_xy(x, y).unwrap();
        let model = FittedModel::from_linear(LinearModel {
            intercept: 0.3,
            coefficients: vec![0.7, 5.0],
        });
        let r = dropout_test(&data, 1, &model).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert!(r.is_degenerate());
    }

    #[test]
    fn ignored_feature_gives_zero() {
        let x = DMatrix::from_fn(15, 2, |i, j| ((i + 3 * j) as f64).cos());
        let y = DVector::from_fn(15, |i, _| x[(i, 0)] + 0.1 * (i as f64).sin());
        let data = Dataset::from_xy(x, y).unwrap();
        let model = FittedModel::from_linear(LinearModel {
            intercept: 0.0,
            coefficients: vec![1.0, 0.0],
        });
        let r = dropout_test(&data, 1, &model).unwrap();
        assert!(r.estimate.abs() <= 1e-12);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn linear_model_estimate_is_coefficient_times_spread() {
        // for a linear full model, f(X) − f(X⁽ʲ⁾) = βⱼ(xⱼ − x̄ⱼ), so
        // mean d = βⱼ²·var(xⱼ) + 2βⱼ·mean((xⱼ − x̄ⱼ)(y − f))
        let n = 50;
        let x = DMatrix::from_fn(n, 2, |i, j| ((i * (j + 3)) as f64 * 0.71).sin());
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] + x[(i, 1)] + 0.05 * (i as f64).cos());
        let data = Dataset::from_xy(x.clone(), y.clone()).unwrap();
        let model = fit(&RegressorSpec::ols(), &x, &y).unwrap();
        let b = model.linear().unwrap().coefficients[0];
        let xm = x.column(0).mean();
        let fitted = predict_matrix(&model, &x).unwrap();
        let oracle = (0..n)
            .map(|i| {
                let c = x[(i, 0)] - xm;
                b * b * c * c + 2.0 * b * c * (y[i] - fitted[i])
            })
            .sum::<f64>()
            / n as f64;
        let r = dropout_test(&data, 0, &model).unwrap();
        assert!((r.estimate - oracle).abs() < 1e-12);
    }
}
