use rand::seq::SliceRandom;

use super::{check_feature, wald::wald_from_samples};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::regress::{predict_matrix, FittedModel};
use crate::report::{Method, TestResult};
use crate::rng::RngStream;

/// Breiman-style permutation importance: `b` shuffles of column `j`, per-sample
/// squared-error increase averaged over shuffles, then a Wald test.
pub fn permutation_test(
    data: &Dataset,
    j: usize,
    full_model: &FittedModel,
    b: usize,
    rng: &RngStream,
) -> Result<TestResult> {
    if b == 0 {
        return Err(Error::invalid("permutation test needs at least one permutation"));
    }
    let mut gen = rng.rng();
    let orders: Vec<Vec<usize>> = (0..b)
        .map(|_| {
            let mut idx: Vec<usize> = (0..data.n()).collect();
            idx.shuffle(&mut gen);
            idx
        })
        .collect();
    permutation_test_with_orders(data, j, full_model, &orders)
}

/// Permutation test with caller-chosen row orders for column `j`; row `i` of
/// the permuted matrix takes `x[order[i], j]`.
pub fn permutation_test_with_orders(
    data: &Dataset,
    j: usize,
    full_model: &FittedModel,
    orders: &[Vec<usize>],
) -> Result<TestResult> {
    check_feature(data.p(), j)?;
    let n = data.n();
    if n < 3 {
        return Err(Error::invalid(format!(
            "permutation test needs at least 3 rows, got {n}"
        )));
    }
    if orders.is_empty() {
        return Err(Error::invalid("permutation test needs at least one permutation"));
    }
    let y = data.y();
    let full = predict_matrix(full_model, data.x())?;
    let base: Vec<f64> = (0..n).map(|i| (y[i] - full[i]).powi(2)).collect();
    let mut acc = vec![0.0; n];
    let mut x = data.x().clone();
    for order in orders {
        if order.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: order.len(),
            });
        }
        for (i, &src) in order.iter().enumerate() {
            x[(i, j)] = data.x()[(src, j)];
        }
        let pred = predict_matrix(full_model, &x)?;
        for i in 0..n {
            acc[i] += (y[i] - pred[i]).powi(2);
        }
    }
    let b = orders.len() as f64;
    let mut scale = 0.0;
    let d: Vec<f64> = acc
        .iter()
        .zip(&base)
        .map(|(a, e)| {
            let a = a / b;
            scale += a + e;
            a - e
        })
        .collect();
    Ok(wald_from_samples(&d, scale / n as f64, j, Method::Permutation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::LinearModel;
    use nalgebra::{DMatrix, DVector};

    fn data() -> Dataset {
        let x = DMatrix::from_fn(20, 2, |i, j| ((i * (j + 2)) as f64 * 0.53).sin());
        let y = DVector::from_fn(20, |i, _| 2.0 * x[(i, 0)] + 0.1 * (i as f64).cos());
        Dataset::from_xy(x, y).unwrap()
    }

    fn model() -> FittedModel {
        FittedModel::from_linear(LinearModel {
            intercept: 0.0,
            coefficients: vec![2.0, 0.0],
        })
    }

    #[test]
    fn identity_permutation_gives_zero() {
        let ident: Vec<usize> = (0..20).collect();
        let r = permutation_test_with_orders(&data(), 0, &model(), &[ident]).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn ignored_feature_gives_zero() {
        let r = permutation_test(&data(), 1, &model(), 10, &RngStream::new(1, 0)).unwrap();
        assert_eq!(r.estimate, 0.0);
    }

    #[test]
    fn used_feature_is_positive_and_reproducible() {
        let a = permutation_test(&data(), 0, &model(), 10, &RngStream::new(1, 0)).unwrap();
        let b = permutation_test(&data(), 0, &model(), 10, &RngStream::new(1, 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.estimate > 0.0);
    }

    #[test]
    fn too_few_rows() {
        let d = Dataset::from_xy(
            DMatrix::from_fn(2, 2, |i, j| (i + j) as f64),
            DVector::from_vec(vec![0.0, 1.0]),
        )
        .unwrap();
        assert!(permutation_test(&d, 0, &model(), 3, &RngStream::default()).is_err());
    }
}
