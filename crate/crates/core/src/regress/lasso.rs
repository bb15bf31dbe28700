use nalgebra::{DMatrix, DVector};

use super::linear::{center, LinearModel};
use super::LassoParams;
use crate::error::{Error, Result};

/// Cyclic coordinate descent for
/// `(1/2n)‖y − b − Xβ‖² + penalty·‖β‖₁`
/// on standardized columns; coefficients are returned on the original scale.
pub fn fit_lasso(x: &DMatrix<f64>, y: &DVector<f64>, params: &LassoParams) -> Result<LinearModel> {
    let c = center(x, y);
    let (n, p) = c.x.shape();
    let nf = n as f64;

    let mut z = c.x.clone();
    let mut scale = vec![0.0; p];
    for (j, mut col) in z.column_iter_mut().enumerate() {
        let sd = (col.norm_squared() / nf).sqrt();
        scale[j] = sd;
        if sd > 0.0 {
            col /= sd;
        }
    }

    let mut beta = vec![0.0; p];
    let mut resid = c.y.clone();
    let lambda = params.penalty;
    let mut converged = false;
    for _ in 0..params.max_sweeps {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if scale[j] == 0.0 {
                continue;
            }
            let col = z.column(j);
            // column has unit mean square, so the coordinate curvature is 1
            let rho = col.dot(&resid) / nf + beta[j];
            let new = soft_threshold(rho, lambda);
            let delta = new - beta[j];
            if delta != 0.0 {
                resid.axpy(-delta, &col, 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < params.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("lasso: coordinate descent hit {} sweeps without converging", params.max_sweeps);
    }

    let coefficients: Vec<f64> = beta
        .iter()
        .zip(&scale)
        .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
        .collect();
    if coefficients.iter().any(|b| !b.is_finite()) {
        return Err(Error::numeric("lasso produced non-finite coefficients"));
    }
    let intercept = c.y_mean
        - coefficients
            .iter()
            .zip(&c.x_mean)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    Ok(LinearModel {
        intercept,
        coefficients,
    })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}
