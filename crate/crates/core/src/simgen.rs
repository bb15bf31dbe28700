//! Synthetic regression scenarios with a known active set.
//!
//! Features are multivariate normal with unit variances; the covariance is the
//! identity plus the listed pairwise correlations. With `replication = r` the
//! eight-feature pattern is tiled r times: copy c occupies columns
//! `8c..8c + 8`, and the kind's default correlations are repeated inside each
//! copy.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::theory::sigmoid_and_derivative;

/// Width of the tiled coefficient pattern.
pub const PATTERN: usize = 8;

const LINEAR_A: [f64; PATTERN] = [0.01, 0.1, 1.0, 1.0, 1.5, 2.0, 3.0, 4.0];
const INDEX_D: [f64; PATTERN] = [6.0, 5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    LinearA,
    AdditiveB,
    InteractionC,
    SingleIndexD,
    EvenQuadratic,
    /// Linear model with caller-supplied coefficients.
    Custom,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::LinearA => "linear_a",
            Self::AdditiveB => "additive_b",
            Self::InteractionC => "interaction_c",
            Self::SingleIndexD => "single_index_d",
            Self::EvenQuadratic => "even_quadratic",
            Self::Custom => "custom",
        }
    }

    /// Sum of per-feature components, so condition checks apply.
    pub fn is_additive(&self) -> bool {
        matches!(
            self,
            Self::LinearA | Self::AdditiveB | Self::EvenQuadratic | Self::Custom
        )
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "linear_a" | "linear" => Ok(Self::LinearA),
            "b" | "additive_b" | "additive" => Ok(Self::AdditiveB),
            "c" | "interaction_c" | "interaction" => Ok(Self::InteractionC),
            "d" | "single_index_d" | "single_index" => Ok(Self::SingleIndexD),
            "even_quadratic" | "quadratic" => Ok(Self::EvenQuadratic),
            "custom" => Ok(Self::Custom),
            other => Err(Error::invalid(format!("unknown scenario '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Sigmoid,
    /// `exp(−z²)`, a non-monotone link.
    GaussianBump,
    None,
}

impl Link {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Self::Sigmoid => sigmoid_and_derivative(z).0,
            Self::GaussianBump => (-z * z).exp(),
            Self::None => z,
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Self::Sigmoid),
            "gaussian_bump" | "gaussian" => Ok(Self::GaussianBump),
            "none" | "identity" => Ok(Self::None),
            other => Err(Error::invalid(format!("unknown link '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    pub p: usize,
    pub noise_sd: f64,
    /// `(i, j, ρ)` entries of the correlation matrix.
    pub correlations: Vec<(usize, usize, f64)>,
    pub link: Link,
    pub replication: usize,
    pub seed: RngStream,
    /// Linear coefficients of the `custom` kind (empty otherwise).
    pub coefficients: Vec<f64>,
}

impl ScenarioSpec {
    /// Defaults of `kind`: p = 20 (5 for even_quadratic), noise sd 0.1, the
    /// kind's named correlations, sigmoid link for single_index_d.
    pub fn new(kind: ScenarioKind, n: usize, seed: RngStream) -> Self {
        let mut spec = Self {
            kind,
            n,
            p: if kind == ScenarioKind::EvenQuadratic { 5 } else { 20 },
            noise_sd: 0.1,
            correlations: Vec::new(),
            link: if kind == ScenarioKind::SingleIndexD {
                Link::Sigmoid
            } else {
                Link::None
            },
            replication: 1,
            seed,
            coefficients: Vec::new(),
        };
        spec.correlations = spec.default_correlations();
        spec
    }

    /// Linear scenario `y = Σ βⱼxⱼ + ε` on `coefficients.len()` features.
    pub fn custom(coefficients: Vec<f64>, n: usize, seed: RngStream) -> Self {
        let mut spec = Self::new(ScenarioKind::Custom, n, seed);
        spec.p = coefficients.len();
        spec.coefficients = coefficients;
        spec
    }

    /// Tiles the pattern `r` times, widening p to at least `8r + 12` and
    /// repeating the default correlations in every copy.
    pub fn with_replication(mut self, r: usize) -> Self {
        self.replication = r;
        self.p = self.p.max(self.min_p());
        self.correlations = self.default_correlations();
        self
    }

    fn default_correlations(&self) -> Vec<(usize, usize, f64)> {
        let pair = match self.kind {
            ScenarioKind::LinearA => Some((2, 3)),
            ScenarioKind::SingleIndexD => Some((0, 1)),
            _ => None,
        };
        match pair {
            Some((a, b)) => (0..self.replication.max(1))
                .map(|c| (a + PATTERN * c, b + PATTERN * c, 0.5))
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn min_p(&self) -> usize {
        match self.kind {
            ScenarioKind::EvenQuadratic => 1,
            ScenarioKind::Custom => self.coefficients.len(),
            _ => PATTERN * self.replication + 12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::invalid(format!("scenario needs n ≥ 10, got {}", self.n)));
        }
        if self.replication == 0 {
            return Err(Error::invalid("replication must be at least 1"));
        }
        if self.kind == ScenarioKind::Custom && self.coefficients.is_empty() {
            return Err(Error::invalid("custom scenario needs coefficients"));
        }
        if self.kind != ScenarioKind::Custom && !self.coefficients.is_empty() {
            return Err(Error::invalid("coefficients apply only to the custom scenario"));
        }
        if self.p < self.min_p() || self.p == 0 {
            return Err(Error::invalid(format!(
                "scenario {} with replication {} needs p ≥ {}, got {}",
                self.kind,
                self.replication,
                self.min_p().max(1),
                self.p
            )));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::invalid("noise_sd must be non-negative"));
        }
        for &(i, j, rho) in &self.correlations {
            if i >= self.p || j >= self.p {
                return Err(Error::invalid(format!(
                    "correlation ({i}, {j}) references a feature outside 0..{}",
                    self.p
                )));
            }
            if i == j {
                return Err(Error::invalid(format!("correlation ({i}, {j}) is on the diagonal")));
            }
            if !(rho.abs() < 1.0) {
                return Err(Error::invalid(format!("correlation {rho} must satisfy |ρ| < 1")));
            }
        }
        Ok(())
    }

    /// Unit-variance covariance matrix of the features.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mut sigma = DMatrix::identity(self.p, self.p);
        for &(i, j, rho) in &self.correlations {
            sigma[(i, j)] = rho;
            sigma[(j, i)] = rho;
        }
        sigma
    }

    /// Ground-truth indices of the features entering the response.
    pub fn active_set(&self) -> BTreeSet<usize> {
        match self.kind {
            ScenarioKind::EvenQuadratic => [0].into(),
            ScenarioKind::Custom => self
                .coefficients
                .iter()
                .enumerate()
                .filter(|(_, b)| **b != 0.0)
                .map(|(j, _)| j)
                .collect(),
            _ => (0..PATTERN * self.replication).collect(),
        }
    }

    /// Component `fⱼ(xⱼ)` of an additive scenario; `None` for features that
    /// do not enter the response. Errors for non-additive kinds.
    pub fn component(&self, j: usize, xj: f64) -> Result<Option<f64>> {
        if !self.kind.is_additive() {
            return Err(Error::Unsupported(format!(
                "scenario {} is not additive",
                self.kind
            )));
        }
        let in_pattern = j < PATTERN * self.replication;
        Ok(match self.kind {
            ScenarioKind::LinearA if in_pattern => Some(LINEAR_A[j % PATTERN] * xj),
            ScenarioKind::AdditiveB if in_pattern => Some(additive_b(j % PATTERN, xj)),
            ScenarioKind::EvenQuadratic if j == 0 => Some(xj * xj),
            ScenarioKind::Custom => match self.coefficients.get(j) {
                Some(&b) if b != 0.0 => Some(b * xj),
                _ => None,
            },
            _ => None,
        })
    }

    /// Noise-free regression function at one row.
    pub fn mean_response(&self, row: &[f64]) -> f64 {
        let copies = self.replication;
        match self.kind {
            ScenarioKind::LinearA => tiled_dot(row, &LINEAR_A, copies),
            ScenarioKind::AdditiveB => (0..PATTERN * copies)
                .map(|j| additive_b(j % PATTERN, row[j]))
                .sum(),
            ScenarioKind::InteractionC => (0..copies)
                .map(|c| interaction_c(&row[PATTERN * c..PATTERN * (c + 1)]))
                .sum(),
            ScenarioKind::SingleIndexD => self.link.apply(tiled_dot(row, &INDEX_D, copies)),
            ScenarioKind::EvenQuadratic => row[0] * row[0],
            ScenarioKind::Custom => self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum(),
        }
    }
}

fn tiled_dot(row: &[f64], pattern: &[f64; PATTERN], copies: usize) -> f64 {
    (0..PATTERN * copies).map(|j| pattern[j % PATTERN] * row[j]).sum()
}

fn additive_b(l: usize, x: f64) -> f64 {
    match l {
        0 => 2.0 * x * x,
        1 => 2.0 * (4.0 * x).cos(),
        2 => x.sin(),
        3 => (x / 3.0).exp(),
        4 => 3.0 * x,
        5 => x * x * x,
        6 => 5.0 * x,
        _ => x.max(0.0),
    }
}

fn interaction_c(x: &[f64]) -> f64 {
    2.0 * x[0].sin() + (x[1].abs() + 1.0).ln() + 3.0 * x[0] * x[1] + (x[2] + x[3]).cos()
        + x[4].powi(3)
        + x[5] * x[6] * x[7]
}

/// A simulated dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub data: Dataset,
    pub active_set: BTreeSet<usize>,
    pub spec: ScenarioSpec,
}

impl GeneratedData {
    /// Ground-truth JSON written next to a dumped CSV.
    pub fn truth_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "scenario": self.spec.kind,
            "active_set": self.active_set,
            "spec": self.spec,
        }))?)
    }

    /// Writes the dataset as CSV (features then `y`) and the truth sidecar
    /// `<stem>.truth.json` beside it; returns the sidecar path.
    pub fn dump(&self, csv_path: &Path) -> Result<std::path::PathBuf> {
        let data = &self.data;
        let mut w = csv::Writer::from_path(csv_path).map_err(|e| Error::Csv(e.to_string()))?;
        let mut header: Vec<String> = data.feature_names().to_vec();
        header.push("y".into());
        w.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
        for i in 0..data.n() {
            let mut rec: Vec<String> = data.x().row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{:?}", data.y()[i]));
            w.write_record(&rec).map_err(|e| Error::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(csv_path, e))?;
        let stem = csv_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "data".into());
        let sidecar = csv_path.with_file_name(format!("{stem}.truth.json"));
        std::fs::write(&sidecar, self.truth_json()?).map_err(|e| Error::io(&sidecar, e))?;
        Ok(sidecar)
    }
}

/// Draws `n` rows of the scenario's Gaussian design from `rng`.
pub fn draw_design(spec: &ScenarioSpec, n: usize, rng: &mut impl rand::Rng) -> Result<DMatrix<f64>> {
    let chol = spec.covariance().cholesky().ok_or_else(|| {
        Error::numeric("correlation matrix is not positive definite (Cholesky failed)")
    })?;
    let l = chol.l();
    let p = spec.p;
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = StandardNormal.sample(rng);
        }
    }
    if spec.correlations.is_empty() {
        return Ok(z);
    }
    Ok(z * l.transpose())
}

pub fn generate(spec: &ScenarioSpec) -> Result<GeneratedData> {
    spec.validate()?;
    let mut rng = spec.seed.rng();
    let x = draw_design(spec, spec.n, &mut rng)?;
    let mut row = vec![0.0; spec.p];
    let y = DVector::from_fn(spec.n, |i, _| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = x[(i, j)];
        }
        spec.mean_response(&row)
    });
    let noise = DVector::from_fn(spec.n, |_, _| {
        let e: f64 = StandardNormal.sample(&mut rng);
        spec.noise_sd * e
    });
    let data = Dataset::from_xy(x, y + noise)?;
    Ok(GeneratedData {
        data,
        active_set: spec.active_set(),
        spec: spec.clone(),
    })
}

/// `y = x₁² + ε` with four independent nuisance features.
pub fn even_quadratic(n: usize, noise_sd: f64, seed: RngStream) -> Result<GeneratedData> {
    let mut spec = ScenarioSpec::new(ScenarioKind::EvenQuadratic, n, seed);
    spec.noise_sd = noise_sd;
    generate(&spec)
}
