use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{run_replicates, ExperimentPlan};
use crate::error::{Error, Result};
use crate::report::Method;
use crate::rng::RngStream;
use crate::simgen::ScenarioSpec;
use crate::theory::{empirical_moments, unconditional_moments, variance_formulas, DropoutTerms, ModelMoments, TheoryModel};

/// Draws used for the population moments behind `theory_are`.
pub const THEORY_DRAWS: usize = 1_000_000;
const MIN_REPLICATES: usize = 50;
const GAUSS_HERMITE_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreComparison {
    pub method_a: Method,
    pub method_b: Method,
    pub feature: usize,
    /// `None` when no closed form covers the scenario, feature or methods.
    pub theory_are: Option<f64>,
    /// `(sd_b/mean_b)² / (sd_a/mean_a)²`; `None` when degenerate.
    pub empirical_are: Option<f64>,
    pub relative_gap: Option<f64>,
    pub replicate_count: usize,
    /// Some empirical mean is indistinguishable from zero.
    pub degenerate: bool,
    pub mean_a: f64,
    pub sd_a: f64,
    pub mean_b: f64,
    pub sd_b: f64,
}

/// Empirical ARE of `method_a` against `method_b` for feature `j`, from the
/// spread of ψ̂ across the replicates of `plan`.
///
/// A mean counts as zero when `|mean| ≤ max(1e-12, 3·sd/√R)`, i.e. when it is
/// within Monte Carlo error of zero.
pub fn empirical_are(plan: &ExperimentPlan, method_a: Method, method_b: Method, j: usize) -> Result<AreComparison> {
    if plan.replicates < MIN_REPLICATES {
        return Err(Error::invalid(format!(
            "empirical ARE needs at least {MIN_REPLICATES} replicates, got {}",
            plan.replicates
        )));
    }
    if plan.replicates < 200 {
        log::warn!("empirical ARE from {} replicates is noisy; 200 or more recommended", plan.replicates);
    }
    if j >= plan.scenario.p {
        return Err(Error::invalid(format!("feature {j} out of range for p = {}", plan.scenario.p)));
    }
    let mut sub = plan.clone();
    sub.methods = BTreeSet::from([method_a, method_b]);
    sub.features = Some(vec![j]);
    let outcomes = run_replicates(&sub)?;
    let estimates = |m: Method| -> Vec<f64> {
        outcomes
            .iter()
            .map(|o| o.report.result(m, j).expect("tested feature").estimate)
            .collect()
    };
    let (mean_a, sd_a) = mean_sd(&estimates(method_a));
    let (mean_b, sd_b) = mean_sd(&estimates(method_b));
    let r = outcomes.len() as f64;
    let is_zero = |mean: f64, sd: f64| mean.abs() <= (3.0 * sd / r.sqrt()).max(1e-12);
    let degenerate = is_zero(mean_a, sd_a) || is_zero(mean_b, sd_b);
    let empirical = if degenerate {
        None
    } else if method_a == method_b {
        Some(1.0)
    } else {
        Some((sd_b / mean_b).powi(2) / (sd_a / mean_a).powi(2))
    };
    let theory = theory_are(&plan.scenario, method_a, method_b, j, &plan.base_seed.substream(u64::MAX))?;
    let relative_gap = match (theory, empirical) {
        (Some(t), Some(e)) => Some((e - t).abs() / t),
        _ => None,
    };
    Ok(AreComparison {
        method_a,
        method_b,
        feature: j,
        theory_are: theory,
        empirical_are: empirical,
        relative_gap,
        replicate_count: outcomes.len(),
        degenerate,
        mean_a,
        sd_a,
        mean_b,
        sd_b,
    })
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

fn theory_are(spec: &ScenarioSpec, a: Method, b: Method, j: usize, seed: &RngStream) -> Result<Option<f64>> {
    let supported = |m: Method| matches!(m, Method::Gcm | Method::Loco | Method::Dropout);
    if !spec.kind.is_additive() || !supported(a) || !supported(b) {
        return Ok(None);
    }
    let Some((moments, dropout)) = population_moments(spec, j, THEORY_DRAWS, seed)? else {
        return Ok(None);
    };
    let model = TheoryModel::NonlinearAdditive {
        dropout: Some(dropout),
    };
    let cv2 = |m: Method| -> Result<f64> {
        let (mean, var) = variance_formulas(&model, m, &moments)?;
        Ok(var / (mean * mean))
    };
    let (ca, cb) = (cv2(a)?, cv2(b)?);
    Ok((ca > 0.0 && ca.is_finite() && cb.is_finite()).then(|| cb / ca))
}

/// Population moments of `(X̃ⱼ, f̃ⱼ)` for an additive Gaussian scenario, by
/// simulation. With `Xⱼ | X₋ⱼ ~ N(m, v)`, each draw takes `m` and `X̃ⱼ`
/// independently and computes `E[fⱼ(Xⱼ) | X₋ⱼ]` by Gauss–Hermite quadrature.
///
/// Returns `None` for a feature that does not enter the response.
pub fn population_moments(
    spec: &ScenarioSpec,
    j: usize,
    draws: usize,
    seed: &RngStream,
) -> Result<Option<(ModelMoments, DropoutTerms)>> {
    spec.validate()?;
    if j >= spec.p {
        return Err(Error::invalid(format!("feature {j} out of range for p = {}", spec.p)));
    }
    if spec.component(j, 0.0)?.is_none() {
        return Ok(None);
    }
    if draws < 2 {
        return Err(Error::invalid("population moments need at least 2 draws"));
    }
    let sigma = spec.covariance();
    let precision = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("covariance is not positive definite"))?
        .inverse();
    let v = 1.0 / precision[(j, j)];
    let var_m = (sigma[(j, j)] - v).max(0.0);
    let (sd_v, sd_m) = (v.sqrt(), var_m.sqrt());
    let (nodes, weights) = gauss_hermite(GAUSS_HERMITE_NODES);
    let f = |x: f64| spec.component(j, x).ok().flatten().unwrap_or(0.0);

    let mut rng = seed.rng();
    let mut xt = Vec::with_capacity(draws);
    let mut ft = Vec::with_capacity(draws);
    let mut xs = Vec::with_capacity(draws);
    let mut fs = Vec::with_capacity(draws);
    for _ in 0..draws {
        let zm: f64 = StandardNormal.sample(&mut rng);
        let m = sd_m * zm;
        let z: f64 = StandardNormal.sample(&mut rng);
        let x = m + sd_v * z;
        let conditional: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(t, w)| w * f(m + sd_v * t))
            .sum();
        let fx = f(x);
        xt.push(sd_v * z);
        ft.push(fx - conditional);
        xs.push(x);
        fs.push(fx);
    }
    let (e_xh2, var_xh2) = unconditional_moments(&xs);
    let moments = empirical_moments(&xt, &ft, spec.noise_sd * spec.noise_sd)?.with_unconditional(e_xh2, var_xh2);
    let (var_f, var_fh2) = unconditional_moments(&fs);
    let dropout = DropoutTerms {
        mean_f: fs.iter().sum::<f64>() / draws as f64,
        f_at_mu: f(0.0),
        var_f,
        var_fh2,
    };
    Ok(Some((moments, dropout)))
}

/// Nodes and weights of the `k`-point Gauss–Hermite rule for the standard
/// normal density (Golub–Welsch). Weights sum to 1.
pub(crate) fn gauss_hermite(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::zeros(k, k);
    for i in 1..k {
        let b = (i as f64).sqrt();
        jacobi[(i - 1, i)] = b;
        jacobi[(i, i - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..k)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}
