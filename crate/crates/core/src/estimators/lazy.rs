use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_feature, dropout::mean_substituted, squared_error_differences, wald::wald_from_samples};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::regress::{mlp_param_gradient_matrix, predict_matrix, FittedModel};
use crate::report::{Method, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveSide {
    /// Dual when n < parameter count, primal otherwise.
    #[default]
    Auto,
    Primal,
    Dual,
}

impl std::str::FromStr for SolveSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(Self::Auto),
            "primal" => Ok(Self::Primal),
            "dual" => Ok(Self::Dual),
            other => Err(Error::invalid(format!(
                "unknown solve side '{other}' (expected auto, primal or dual)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LazyConfig {
    /// Ridge penalty λ; `None` uses √n.
    pub lambda: Option<f64>,
    pub solve_side: SolveSide,
}

impl LazyConfig {
    pub fn lambda_for(&self, n: usize) -> Result<f64> {
        let lambda = self.lambda.unwrap_or((n as f64).sqrt());
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lazy penalty must be positive, got {lambda}")));
        }
        Ok(lambda)
    }
}

/// Ridge step `Δθ = (ΦᵀΦ + cI)⁻¹ Φᵀ r`, or the equivalent `Φᵀ(ΦΦᵀ + cI)⁻¹ r`.
pub fn lazy_correction(
    phi: &DMatrix<f64>,
    r: &DVector<f64>,
    penalty: f64,
    side: SolveSide,
) -> Result<DVector<f64>> {
    let (n, m) = phi.shape();
    if r.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: r.len(),
        });
    }
    let dual = match side {
        SolveSide::Auto => n < m,
        SolveSide::Primal => false,
        SolveSide::Dual => true,
    };
    let singular = || Error::numeric("regularized lazy system is not positive definite");
    let delta = if dual {
        let mut gram = phi * phi.transpose();
        for i in 0..n {
            gram[(i, i)] += penalty;
        }
        let alpha = gram.cholesky().ok_or_else(singular)?.solve(r);
        phi.transpose() * alpha
    } else {
        let mut gram = phi.transpose() * phi;
        for i in 0..m {
            gram[(i, i)] += penalty;
        }
        gram.cholesky().ok_or_else(singular)?.solve(&(phi.transpose() * r))
    };
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("lazy correction is not finite"));
    }
    Ok(delta)
}

/// Lazy-training approximation of LOCO: the trained network is moved by one
/// ridge step in its gradient feature space to fit `Y` from `X⁽ʲ⁾`, then
/// re-evaluated at the shifted parameters.
pub fn lazy_vi_test(
    data: &Dataset,
    j: usize,
    mlp_model: &FittedModel,
    cfg: &LazyConfig,
) -> Result<TestResult> {
    check_feature(data.p(), j)?;
    let mlp = mlp_model.mlp().ok_or_else(|| {
        Error::Unsupported(format!(
            "lazy-vi needs an mlp model, got {}",
            mlp_model.kind()
        ))
    })?;
    let n = data.n();
    let lambda = cfg.lambda_for(n)?;
    let xj = mean_substituted(data.x(), j);
    let full = predict_matrix(mlp_model, data.x())?;
    let base = mlp.predict_matrix(&xj);
    let r = data.y() - &base;
    let phi = mlp_param_gradient_matrix(mlp_model, &xj)?;
    let delta = lazy_correction(&phi, &r, n as f64 * lambda, cfg.solve_side)?;
    let shifted = mlp.shifted(delta.as_slice())?;
    let reduced = shifted.predict_matrix(&xj);
    let (d, scale) = squared_error_differences(data.y(), &reduced, &full);
    Ok(wald_from_samples(&d, scale, j, Method::LazyVi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primal_and_dual_agree() {
        let phi = DMatrix::from_fn(30, 200, |i, j| (((i + 1) * (j + 3)) as f64 * 0.37).sin());
        let r = DVector::from_fn(30, |i, _| (i as f64 * 0.2).cos());
        let a = lazy_correction(&phi, &r, 0.5, SolveSide::Primal).unwrap();
        let b = lazy_correction(&phi, &r, 0.5, SolveSide::Dual).unwrap();
        assert!((a - b).amax() <= 1e-8);
    }

    #[test]
    fn huge_penalty_gives_tiny_step() {
        let phi = DMatrix::from_fn(10, 4, |i, j| (i + j) as f64);
        let r = DVector::from_element(10, 1.0);
        let d = lazy_correction(&phi, &r, 1e13, SolveSide::Auto).unwrap();
        assert!(d.amax() < 1e-10);
    }

    #[test]
    fn parses_solve_side() {
        assert_eq!("Dual".parse::<SolveSide>().unwrap(), SolveSide::Dual);
        assert!("sideways".parse::<SolveSide>().is_err());
    }
}
