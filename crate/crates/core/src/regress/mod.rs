//! Regression engines used as conditional-mean estimators.
//!
//! Every engine minimizes (possibly penalized) mean squared error. Fitting is
//! deterministic given the spec's seed; a [`FittedModel`] is immutable.

mod gbm;
mod kernel;
mod lasso;
mod linear;
mod mlp;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub use gbm::{GbmModel, RegressionTree};
pub use kernel::{median_heuristic_bandwidth, KernelRidgeModel};
pub use lasso::fit_lasso;
pub use linear::{fit_ols, fit_ridge, LinearModel};
pub use mlp::{Activation, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    Ols,
    Ridge,
    KernelRidge,
    Gbm,
    Mlp,
    Lasso,
}

impl RegressorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegressorKind::Ols => "ols",
            RegressorKind::Ridge => "ridge",
            RegressorKind::KernelRidge => "kernel_ridge",
            RegressorKind::Gbm => "gbm",
            RegressorKind::Mlp => "mlp",
            RegressorKind::Lasso => "lasso",
        }
    }
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegressorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "ols" | "linear" => Ok(RegressorKind::Ols),
            "ridge" => Ok(RegressorKind::Ridge),
            "kernel_ridge" | "krr" => Ok(RegressorKind::KernelRidge),
            "gbm" => Ok(RegressorKind::Gbm),
            "mlp" | "nn" => Ok(RegressorKind::Mlp),
            "lasso" => Ok(RegressorKind::Lasso),
            other => Err(Error::invalid(format!("unknown regressor \"{other}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeParams {
    pub penalty: f64,
}

impl Default for RidgeParams {
    fn default() -> Self {
        Self { penalty: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRidgeParams {
    /// Ridge penalty; `None` means `1e-3 · n`.
    pub penalty: Option<f64>,
    /// Gaussian bandwidth; `None` means the median heuristic.
    pub bandwidth: Option<f64>,
    /// Rows sampled for the median heuristic.
    pub bandwidth_subsample: usize,
}

impl Default for KernelRidgeParams {
    fn default() -> Self {
        Self {
            penalty: None,
            bandwidth: None,
            bandwidth_subsample: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub rounds: usize,
    pub depth: usize,
    pub shrinkage: f64,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            depth: 2,
            shrinkage: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// Hidden units; 0 gives a single linear neuron.
    pub width: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            width: 50,
            activation: Activation::Tanh,
            learning_rate: 1e-2,
            epochs: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoParams {
    pub penalty: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self {
            penalty: 0.01,
            tolerance: 1e-8,
            max_sweeps: 10_000,
        }
    }
}

/// Which engine to fit and with what hyperparameters. Only the parameter group
/// matching `kind` is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    pub kind: RegressorKind,
    pub ridge: RidgeParams,
    pub kernel_ridge: KernelRidgeParams,
    pub gbm: GbmParams,
    pub mlp: MlpParams,
    pub lasso: LassoParams,
    pub seed: RngStream,
}

impl RegressorSpec {
    pub fn new(kind: RegressorKind) -> Self {
        Self {
            kind,
            ridge: RidgeParams::default(),
            kernel_ridge: KernelRidgeParams::default(),
            gbm: GbmParams::default(),
            mlp: MlpParams::default(),
            lasso: LassoParams::default(),
            seed: RngStream::default(),
        }
    }

    pub fn ols() -> Self {
        Self::new(RegressorKind::Ols)
    }

    pub fn gbm() -> Self {
        Self::new(RegressorKind::Gbm)
    }

    pub fn mlp() -> Self {
        Self::new(RegressorKind::Mlp)
    }

    pub fn with_seed(mut self, seed: RngStream) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        }
        match self.kind {
            RegressorKind::Ols => {}
            RegressorKind::Ridge => positive("ridge.penalty", self.ridge.penalty)?,
            RegressorKind::KernelRidge => {
                if let Some(p) = self.kernel_ridge.penalty {
                    positive("kernel_ridge.penalty", p)?;
                }
                if let Some(b) = self.kernel_ridge.bandwidth {
                    positive("kernel_ridge.bandwidth", b)?;
                }
                if self.kernel_ridge.bandwidth_subsample < 2 {
                    return Err(Error::invalid("kernel_ridge.bandwidth_subsample must be at least 2"));
                }
            }
            RegressorKind::Gbm => {
                if self.gbm.rounds == 0 {
                    return Err(Error::invalid("gbm.rounds must be positive"));
                }
                if self.gbm.depth == 0 {
                    return Err(Error::invalid("gbm.depth must be positive"));
                }
                positive("gbm.shrinkage", self.gbm.shrinkage)?;
            }
            RegressorKind::Mlp => {
                positive("mlp.learning_rate", self.mlp.learning_rate)?;
                if self.mlp.epochs == 0 {
                    return Err(Error::invalid("mlp.epochs must be positive"));
                }
            }
            RegressorKind::Lasso => {
                if !(self.lasso.penalty >= 0.0 && self.lasso.penalty.is_finite()) {
                    return Err(Error::invalid("lasso.penalty must be non-negative and finite"));
                }
                positive("lasso.tolerance", self.lasso.tolerance)?;
                if self.lasso.max_sweeps == 0 {
                    return Err(Error::invalid("lasso.max_sweeps must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Applies one dotted configuration key such as `regressor.gbm.rounds`.
    /// The `regressor.` prefix is optional.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("{key}: cannot parse \"{value}\"")))
        }
        let key = key.trim();
        let short = key.strip_prefix("regressor.").unwrap_or(key);
        match short {
            "kind" => self.kind = value.parse()?,
            "seed" => self.seed.seed = num(key, value)?,
            "ridge.penalty" => self.ridge.penalty = num(key, value)?,
            "kernel_ridge.penalty" => self.kernel_ridge.penalty = Some(num(key, value)?),
            "kernel_ridge.bandwidth" => self.kernel_ridge.bandwidth = Some(num(key, value)?),
            "kernel_ridge.bandwidth_subsample" => {
                self.kernel_ridge.bandwidth_subsample = num(key, value)?
            }
            "gbm.rounds" => self.gbm.rounds = num(key, value)?,
            "gbm.depth" => self.gbm.depth = num(key, value)?,
            "gbm.shrinkage" => self.gbm.shrinkage = num(key, value)?,
            "mlp.width" => self.mlp.width = num(key, value)?,
            "mlp.activation" => self.mlp.activation = value.parse()?,
            "mlp.learning_rate" => self.mlp.learning_rate = num(key, value)?,
            "mlp.epochs" => self.mlp.epochs = num(key, value)?,
            "lasso.penalty" => self.lasso.penalty = num(key, value)?,
            "lasso.tolerance" => self.lasso.tolerance = num(key, value)?,
            "lasso.max_sweeps" => self.lasso.max_sweeps = num(key, value)?,
            _ => return Err(Error::invalid(format!("unknown regressor key \"{key}\""))),
        }
        Ok(())
    }
}

impl Default for RegressorSpec {
    fn default() -> Self {
        Self::ols()
    }
}

#[derive(Debug, Clone)]
enum ModelState {
    Linear(LinearModel),
    KernelRidge(KernelRidgeModel),
    Gbm(GbmModel),
    Mlp(Mlp),
}

/// A trained regressor. Prediction is pure; parameter gradients exist only for
/// the MLP engine.
#[derive(Debug, Clone)]
pub struct FittedModel {
    spec: RegressorSpec,
    input_dim: usize,
    state: ModelState,
}

impl FittedModel {
    pub fn spec(&self) -> &RegressorSpec {
        &self.spec
    }

    pub fn kind(&self) -> RegressorKind {
        self.spec.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.input_dim);
        match &self.state {
            ModelState::Linear(m) => m.predict(row),
            ModelState::KernelRidge(m) => m.predict(row),
            ModelState::Gbm(m) => m.predict(row),
            ModelState::Mlp(m) => m.predict(row),
        }
    }

    /// Linear coefficients (without intercept) for ols/ridge/lasso models.
    pub fn linear(&self) -> Option<&LinearModel> {
        match &self.state {
            ModelState::Linear(m) => Some(m),
            _ => None,
        }
    }

    pub fn mlp(&self) -> Option<&Mlp> {
        match &self.state {
            ModelState::Mlp(m) => Some(m),
            _ => None,
        }
    }

    pub fn gbm(&self) -> Option<&GbmModel> {
        match &self.state {
            ModelState::Gbm(m) => Some(m),
            _ => None,
        }
    }

    pub fn param_count(&self) -> Option<usize> {
        self.mlp().map(Mlp::param_count)
    }

    pub fn param_gradient(&self, row: &[f64]) -> Result<Vec<f64>> {
        let mlp = self.require_mlp()?;
        Ok(mlp.param_gradient(row))
    }

    fn require_mlp(&self) -> Result<&Mlp> {
        self.mlp().ok_or_else(|| {
            Error::Unsupported(format!(
                "parameter gradients need an mlp model, got {}",
                self.spec.kind
            ))
        })
    }

    /// Wraps an already-built network, e.g. one with hand-set parameters.
    pub fn from_mlp(mlp: Mlp) -> Self {
        let mut spec = RegressorSpec::mlp();
        spec.mlp.width = mlp.width();
        spec.mlp.activation = mlp.activation();
        Self {
            input_dim: mlp.input_dim(),
            spec,
            state: ModelState::Mlp(mlp),
        }
    }

    /// Wraps a linear predictor.
    pub fn from_linear(model: LinearModel) -> Self {
        Self {
            input_dim: model.coefficients.len(),
            spec: RegressorSpec::ols(),
            state: ModelState::Linear(model),
        }
    }
}

pub fn fit(spec: &RegressorSpec, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FittedModel> {
    spec.validate()?;
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 rows to fit, got {n}")));
    }
    if p < 1 {
        return Err(Error::invalid("need at least one input column to fit"));
    }
    let state = match spec.kind {
        RegressorKind::Ols => ModelState::Linear(fit_ols(x, y)?),
        RegressorKind::Ridge => ModelState::Linear(fit_ridge(x, y, spec.ridge.penalty)?),
        RegressorKind::Lasso => ModelState::Linear(fit_lasso(x, y, &spec.lasso)?),
        RegressorKind::KernelRidge => {
            ModelState::KernelRidge(KernelRidgeModel::fit(x, y, &spec.kernel_ridge, &spec.seed)?)
        }
        RegressorKind::Gbm => ModelState::Gbm(GbmModel::fit(x, y, &spec.gbm)),
        RegressorKind::Mlp => ModelState::Mlp(Mlp::fit(x, y, &spec.mlp, &spec.seed)?),
    };
    Ok(FittedModel {
        spec: spec.clone(),
        input_dim: p,
        state,
    })
}

pub fn predict_matrix(model: &FittedModel, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != model.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim,
            got: x.ncols(),
        });
    }
    if let ModelState::Mlp(m) = &model.state {
        return Ok(m.predict_matrix(x));
    }
    let mut row = vec![0.0; x.ncols()];
    Ok(DVector::from_fn(x.nrows(), |i, _| {
        for (c, v) in row.iter_mut().enumerate() {
            *v = x[(i, c)];
        }
        model.predict(&row)
    }))
}

/// Gradient feature matrix: row i is ∇θ h(xᵢ) at the trained parameters.
pub fn mlp_param_gradient_matrix(model: &FittedModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mlp = model.require_mlp()?;
    if x.ncols() != model.input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim,
            got: x.ncols(),
        });
    }
    Ok(mlp.param_gradient_matrix(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_key_updates_groups() {
        let mut s = RegressorSpec::ols();
        s.set_key("regressor.kind", "gbm").unwrap();
        s.set_key("regressor.gbm.rounds", "7").unwrap();
        s.set_key("mlp.width", "8").unwrap();
        assert_eq!(s.kind, RegressorKind::Gbm);
        assert_eq!(s.gbm.rounds, 7);
        assert_eq!(s.mlp.width, 8);
        assert!(s.set_key("regressor.gbm.bogus", "1").is_err());
        assert!(s.set_key("regressor.gbm.rounds", "x").is_err());
    }

    #[test]
    fn validation_rejects_nonpositive() {
        let mut s = RegressorSpec::gbm();
        s.gbm.shrinkage = 0.0;
        assert!(s.validate().is_err());
        let mut s = RegressorSpec::new(RegressorKind::Ridge);
        s.ridge.penalty = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn predict_matrix_shapes() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i * (j + 1)) as f64);
        let y = DVector::from_fn(6, |i, _| i as f64);
        let m = fit(&RegressorSpec::ols(), &x, &y).unwrap();
        let empty = DMatrix::<f64>::zeros(0, 2);
        assert_eq!(predict_matrix(&m, &empty).unwrap().len(), 0);
        assert!(predict_matrix(&m, &DMatrix::zeros(3, 3)).is_err());
        let pm = predict_matrix(&m, &x).unwrap();
        for i in 0..6 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            assert_eq!(pm[i], m.predict(&row));
        }
    }

    #[test]
    fn gradient_requires_mlp() {
        let x = DMatrix::from_fn(6, 1, |i, _| i as f64);
        let y = DVector::from_fn(6, |i, _| i as f64);
        let m = fit(&RegressorSpec::ols(), &x, &y).unwrap();
        assert!(mlp_param_gradient_matrix(&m, &x).is_err());
    }
}
