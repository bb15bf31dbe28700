//! Closed-form means, variances, coefficients of variation and asymptotic
//! relative efficiencies (ARE) of the importance estimators.
//!
//! Notation: `X̃ⱼ = Xⱼ − E[Xⱼ | X₋ⱼ]`, `f̃ⱼ = fⱼ(Xⱼ) − E[fⱼ(Xⱼ) | X₋ⱼ]`,
//! `X̂ⱼ = Xⱼ − E Xⱼ`, σ² the noise variance. An ARE above 1 means GCM has the
//! smaller coefficient of variation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::Method;

const MOMENT_LIMIT: f64 = 1e300;

/// Population (or plug-in) moments entering the variance formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMoments {
    pub e_xt2: f64,
    pub var_xt2: f64,
    pub e_ft2: f64,
    pub e_ft4: f64,
    pub e_xt2_ft2: f64,
    pub e_xt_ft: f64,
    pub noise_var: f64,
    /// Unconditional `E X̂ⱼ² = Var Xⱼ`, used by dropout.
    pub e_xh2: f64,
    pub var_xh2: f64,
}

impl ModelMoments {
    /// Moments of the linear case `f̃ = X̃` with independent `Xⱼ`, so the
    /// conditional and unconditional moments coincide.
    pub fn linear(e_xt2: f64, var_xt2: f64, noise_var: f64) -> Self {
        Self {
            e_xt2,
            var_xt2,
            e_ft2: e_xt2,
            e_ft4: var_xt2 + e_xt2 * e_xt2,
            e_xt2_ft2: var_xt2 + e_xt2 * e_xt2,
            e_xt_ft: e_xt2,
            noise_var,
            e_xh2: e_xt2,
            var_xh2: var_xt2,
        }
    }

    /// Replaces the unconditional dropout moments.
    pub fn with_unconditional(mut self, e_xh2: f64, var_xh2: f64) -> Self {
        self.e_xh2 = e_xh2;
        self.var_xh2 = var_xh2;
        self
    }

    /// Checks the moment inequalities, with a relative slack of 1e-9 for
    /// plug-in estimates.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("e_xt2", self.e_xt2),
            ("var_xt2", self.var_xt2),
            ("e_ft2", self.e_ft2),
            ("e_ft4", self.e_ft4),
            ("e_xt2_ft2", self.e_xt2_ft2),
            ("e_xt_ft", self.e_xt_ft),
            ("noise_var", self.noise_var),
            ("e_xh2", self.e_xh2),
            ("var_xh2", self.var_xh2),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v.abs() > MOMENT_LIMIT {
                return Err(Error::numeric(format!("moment {name} = {v} is not representable")));
            }
        }
        let tol = |a: f64, b: f64| 1e-9 * a.abs().max(b.abs()).max(1e-300);
        if !(self.e_xt2 > 0.0) {
            return Err(Error::invalid(format!("e_xt2 must be positive, got {}", self.e_xt2)));
        }
        if self.e_ft2 < 0.0 || self.var_xt2 < 0.0 || self.noise_var < 0.0 || self.var_xh2 < 0.0 {
            return Err(Error::invalid("second moments and variances must be non-negative"));
        }
        let sq = self.e_ft2 * self.e_ft2;
        if self.e_ft4 < sq - tol(self.e_ft4, sq) {
            return Err(Error::invalid(format!(
                "e_ft4 = {} is below e_ft2² = {sq}",
                self.e_ft4
            )));
        }
        let cs = self.e_xt2 * self.e_ft2;
        let c2 = self.e_xt_ft * self.e_xt_ft;
        if c2 > cs + tol(c2, cs) {
            return Err(Error::invalid(format!(
                "Cauchy-Schwarz violated: e_xt_ft² = {c2} > e_xt2·e_ft2 = {cs}"
            )));
        }
        if self.e_xh2 < self.e_xt2 - tol(self.e_xh2, self.e_xt2) {
            return Err(Error::invalid(format!(
                "e_xh2 = {} is below the conditional e_xt2 = {}",
                self.e_xh2, self.e_xt2
            )));
        }
        Ok(())
    }
}

/// Coefficients of variation of the GCM and LOCO estimators at sample size n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPair {
    pub cv_gcm: f64,
    pub cv_loco: f64,
    pub are: f64,
    pub sample_size: usize,
}

impl CvPair {
    fn from_parts(gcm: (f64, f64), loco: (f64, f64), n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        let root_n = (n as f64).sqrt();
        let cv = |(mean, var): (f64, f64)| (var.max(0.0).sqrt() / mean).abs() / root_n;
        let cv_gcm = cv(gcm);
        let cv_loco = cv(loco);
        if !(cv_gcm > 0.0) || !cv_gcm.is_finite() || !cv_loco.is_finite() {
            return Err(Error::numeric(format!(
                "coefficients of variation undefined (gcm {cv_gcm}, loco {cv_loco})"
            )));
        }
        Ok(Self {
            cv_gcm,
            cv_loco,
            are: (cv_loco / cv_gcm).powi(2),
            sample_size: n,
        })
    }
}

/// Model family for [`variance_formulas`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TheoryModel {
    Linear {
        beta_j: f64,
    },
    NonlinearAdditive {
        /// Needed only for the dropout method.
        dropout: Option<DropoutTerms>,
    },
    SingleIndex {
        beta_j: f64,
        eta_prime: f64,
    },
}

/// Unconditional quantities of `fⱼ(Xⱼ)` for the nonlinear dropout formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutTerms {
    /// `E fⱼ(Xⱼ)`
    pub mean_f: f64,
    /// `fⱼ(μⱼ)`
    pub f_at_mu: f64,
    /// `Var fⱼ(Xⱼ)`
    pub var_f: f64,
    /// `Var f̂ⱼ²` with `f̂ⱼ = fⱼ − E fⱼ`
    pub var_fh2: f64,
}

/// Mean and variance of the per-sample contribution of `method` under
/// `model`, with the remainder terms of the single-index expansion dropped.
pub fn variance_formulas(model: &TheoryModel, method: Method, m: &ModelMoments) -> Result<(f64, f64)> {
    m.validate()?;
    let s2 = m.noise_var;
    let linear = |b: f64| -> Result<(f64, f64)> {
        match method {
            Method::Gcm => Ok((b * m.e_xt2, b * b * m.var_xt2 + s2 * m.e_xt2)),
            Method::Loco => Ok((
                b * b * m.e_xt2,
                b.powi(4) * m.var_xt2 + 4.0 * s2 * b * b * m.e_xt2,
            )),
            Method::Dropout => Ok((
                b * b * m.e_xh2,
                b.powi(4) * m.var_xh2 + 4.0 * s2 * b * b * m.e_xh2,
            )),
            other => Err(unsupported(other)),
        }
    };
    match *model {
        TheoryModel::Linear { beta_j } => linear(beta_j),
        TheoryModel::SingleIndex { beta_j, eta_prime } => {
            if !(eta_prime > 0.0) {
                return Err(Error::invalid(format!(
                    "eta_prime must be positive (monotone link), got {eta_prime}"
                )));
            }
            linear(beta_j * eta_prime)
        }
        TheoryModel::NonlinearAdditive { dropout } => match method {
            Method::Gcm => Ok((
                m.e_xt_ft,
                (m.e_xt2_ft2 - m.e_xt_ft * m.e_xt_ft).max(0.0) + s2 * m.e_xt2,
            )),
            Method::Loco => Ok((
                m.e_ft2,
                (m.e_ft4 - m.e_ft2 * m.e_ft2).max(0.0) + 4.0 * s2 * m.e_ft2,
            )),
            Method::Dropout => {
                let t = dropout.ok_or_else(|| {
                    Error::invalid("nonlinear dropout needs E f, f(μ), Var f and Var f̂²")
                })?;
                if t.var_f < 0.0 || t.var_fh2 < 0.0 {
                    return Err(Error::invalid("dropout variances must be non-negative"));
                }
                let shift2 = (t.mean_f - t.f_at_mu).powi(2);
                Ok((
                    t.var_f + shift2,
                    t.var_fh2 + 4.0 * s2 * t.var_f + 4.0 * shift2 * (t.var_f + s2),
                ))
            }
            other => Err(unsupported(other)),
        },
    }
}

fn unsupported(method: Method) -> Error {
    Error::Unsupported(format!("no closed-form variance for {method}"))
}

/// CVs of GCM and LOCO in the linear model.
pub fn cv_linear(beta_j: f64, m: &ModelMoments, n: usize) -> Result<CvPair> {
    if beta_j == 0.0 || !beta_j.is_finite() {
        return Err(Error::invalid("beta_j must be non-zero: both estimator means vanish"));
    }
    let model = TheoryModel::Linear { beta_j };
    CvPair::from_parts(
        variance_formulas(&model, Method::Gcm, m)?,
        variance_formulas(&model, Method::Loco, m)?,
        n,
    )
}

/// CVs in the additive nonlinear model.
pub fn are_nonlinear(m: &ModelMoments, n: usize) -> Result<CvPair> {
    if m.e_xt_ft == 0.0 {
        return Err(Error::numeric(
            "E[X̃f̃] = 0: the GCM mean vanishes and its CV is undefined",
        ));
    }
    let model = TheoryModel::NonlinearAdditive { dropout: None };
    CvPair::from_parts(
        variance_formulas(&model, Method::Gcm, m)?,
        variance_formulas(&model, Method::Loco, m)?,
        n,
    )
}

/// CVs in the single-index model with link slope `eta_prime`.
pub fn cv_single_index(beta_j: f64, eta_prime: f64, m: &ModelMoments, n: usize) -> Result<CvPair> {
    if beta_j == 0.0 || !beta_j.is_finite() {
        return Err(Error::invalid("beta_j must be non-zero: both estimator means vanish"));
    }
    let model = TheoryModel::SingleIndex { beta_j, eta_prime };
    CvPair::from_parts(
        variance_formulas(&model, Method::Gcm, m)?,
        variance_formulas(&model, Method::Loco, m)?,
        n,
    )
}

/// ARE for two Gaussian features with correlation ρ and common sd σₓ,
/// testing the first one.
pub fn are_example1(beta1: f64, rho: f64, sigma_x: f64, sigma_eps: f64) -> Result<f64> {
    if beta1 == 0.0 || !beta1.is_finite() {
        return Err(Error::invalid("beta1 must be non-zero"));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!("rho must lie in (-1, 1), got {rho}")));
    }
    if !(sigma_x > 0.0) {
        return Err(Error::invalid("sigma_x must be positive"));
    }
    if !(sigma_eps >= 0.0) {
        return Err(Error::invalid("sigma_eps must be non-negative"));
    }
    let s = sigma_eps * sigma_eps / (beta1 * beta1);
    let v = 2.0 * (1.0 - rho * rho) * sigma_x * sigma_x;
    Ok((4.0 * s + v) / (s + v))
}

/// Ratio of the two sides of the correlation condition under which GCM is
/// more efficient than LOCO in the additive model; above 1 means it holds.
pub fn condition_b_ratio(m: &ModelMoments) -> Result<f64> {
    if !(m.e_ft2 > 0.0) || !(m.e_xt2 > 0.0) {
        return Err(Error::invalid("condition ratio needs e_ft2 > 0 and e_xt2 > 0"));
    }
    let lhs = m.e_xt_ft * m.e_xt_ft / (m.e_xt2 * m.e_ft2);
    let s2 = m.noise_var;
    let rhs = (m.e_xt2_ft2 * m.e_ft2 / m.e_xt2 + s2 * m.e_ft2) / (m.e_ft4 + 4.0 * s2 * m.e_ft2);
    if !(rhs > 0.0) || !rhs.is_finite() {
        return Err(Error::numeric("condition ratio denominator is zero"));
    }
    Ok(lhs / rhs)
}

/// `E Z^{2t}` for standard normal Z, i.e. `(2t − 1)!!`.
pub fn normal_even_moment(t: u32) -> Result<f64> {
    if t > 15 {
        return Err(Error::invalid(format!("normal_even_moment supports t ≤ 15, got {t}")));
    }
    Ok((1..=t).map(|k| (2 * k - 1) as f64).product())
}

/// Logistic function and its derivative, stable for large |x|.
pub fn sigmoid_and_derivative(x: f64) -> (f64, f64) {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    // η(1 − η) written without the cancellation in 1 − η for large x
    let d = if x >= 0.0 {
        let e = (-x).exp();
        e / ((1.0 + e) * (1.0 + e))
    } else {
        let e = x.exp();
        e / ((1.0 + e) * (1.0 + e))
    };
    (s, d)
}

/// Plug-in moments from samples of `X̃ⱼ` and `f̃ⱼ`. Both vectors are
/// centered first. The unconditional dropout moments are copied from the
/// `X̃ⱼ` samples; use [`ModelMoments::with_unconditional`] to override.
pub fn empirical_moments(xt: &[f64], ft: &[f64], noise_var: f64) -> Result<ModelMoments> {
    if xt.len() != ft.len() {
        return Err(Error::DimensionMismatch {
            expected: xt.len(),
            got: ft.len(),
        });
    }
    if xt.len() < 2 {
        return Err(Error::invalid("need at least 2 samples for moments"));
    }
    let n = xt.len() as f64;
    let xm = xt.iter().sum::<f64>() / n;
    let fm = ft.iter().sum::<f64>() / n;
    let (mut x2, mut x4, mut f2, mut f4, mut x2f2, mut xf) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in xt.iter().zip(ft) {
        let a = a - xm;
        let b = b - fm;
        let (a2, b2) = (a * a, b * b);
        x2 += a2;
        x4 += a2 * a2;
        f2 += b2;
        f4 += b2 * b2;
        x2f2 += a2 * b2;
        xf += a * b;
    }
    let e_xt2 = x2 / n;
    let var_xt2 = (x4 / n - e_xt2 * e_xt2).max(0.0);
    let m = ModelMoments {
        e_xt2,
        var_xt2,
        e_ft2: f2 / n,
        e_ft4: f4 / n,
        e_xt2_ft2: x2f2 / n,
        e_xt_ft: xf / n,
        noise_var,
        e_xh2: e_xt2,
        var_xh2: var_xt2,
    };
    m.validate()?;
    Ok(m)
}

/// Plug-in `(E X̂², Var X̂²)` of an unconditional sample.
pub fn unconditional_moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut s2, mut s4) = (0.0, 0.0);
    for v in x {
        let c = (v - mean).powi(2);
        s2 += c;
        s4 += c * c;
    }
    let e2 = s2 / n;
    (e2, (s4 / n - e2 * e2).max(0.0))
}
