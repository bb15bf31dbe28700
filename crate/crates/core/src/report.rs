//! Per-feature test results, importance reports and their JSON/CSV forms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Smallest p-value ever reported.
pub const P_VALUE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gcm,
    Loco,
    Dropout,
    Permutation,
    LazyVi,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Gcm,
        Method::Loco,
        Method::Dropout,
        Method::Permutation,
        Method::LazyVi,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Gcm => "gcm",
            Method::Loco => "loco",
            Method::Dropout => "dropout",
            Method::Permutation => "permutation",
            Method::LazyVi => "lazy_vi",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "gcm" => Ok(Method::Gcm),
            "loco" => Ok(Method::Loco),
            "dropout" | "dr" => Ok(Method::Dropout),
            "permutation" | "perm" => Ok(Method::Permutation),
            "lazy_vi" | "lazy" | "lazyvi" => Ok(Method::LazyVi),
            other => Err(Error::invalid(format!("unknown method \"{other}\""))),
        }
    }
}

/// Parses a comma-separated method list such as `gcm,loco`.
pub fn parse_methods(list: &str) -> Result<BTreeSet<Method>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(Method::from_str)
        .collect()
}

/// Outcome of testing one feature with one method.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub feature_index: usize,
    pub method: Method,
    pub estimate: f64,
    pub std_error: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub n_used: usize,
}

impl TestResult {
    /// Zero estimated variance; the test reports p = 1.
    pub fn is_degenerate(&self) -> bool {
        self.std_error == 0.0
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_value) {
            return Err(Error::invalid(format!(
                "p-value {} outside [0, 1] for feature {} ({})",
                self.p_value, self.feature_index, self.method
            )));
        }
        if self.std_error < 0.0 || !self.std_error.is_finite() {
            return Err(Error::invalid(format!(
                "invalid standard error {} for feature {}",
                self.std_error, self.feature_index
            )));
        }
        if self.std_error > 0.0 {
            let expected = self.estimate / self.std_error;
            if (expected - self.statistic).abs() > 1e-9 * expected.abs().max(1.0) {
                return Err(Error::invalid(format!(
                    "statistic {} inconsistent with estimate/std_error = {expected}",
                    self.statistic
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub feature_names: Vec<String>,
    pub results: Vec<TestResult>,
    pub selected: BTreeMap<Method, BTreeSet<usize>>,
    pub alpha: f64,
    pub wall_time_seconds: BTreeMap<Method, f64>,
    pub config_digest: String,
}

impl ImportanceReport {
    /// Builds a report, deriving the selected sets from the p-values.
    pub fn new(
        feature_names: Vec<String>,
        results: Vec<TestResult>,
        alpha: f64,
        wall_time_seconds: BTreeMap<Method, f64>,
        config_digest: String,
    ) -> Self {
        let selected = selected_sets(&results, alpha);
        Self {
            feature_names,
            results,
            selected,
            alpha,
            wall_time_seconds,
            config_digest,
        }
    }

    pub fn result(&self, method: Method, feature_index: usize) -> Option<&TestResult> {
        self.results
            .iter()
            .find(|r| r.method == method && r.feature_index == feature_index)
    }

    pub fn p_values(&self, method: Method) -> Vec<(usize, f64)> {
        self.results
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.feature_index, r.p_value))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.results {
            r.validate()?;
            if r.feature_index >= self.feature_names.len() {
                return Err(Error::invalid(format!(
                    "feature index {} has no name",
                    r.feature_index
                )));
            }
        }
        if self.selected != selected_sets(&self.results, self.alpha) {
            return Err(Error::invalid(
                "selected sets do not match p-values at the report's alpha",
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ReportDoc {
            alpha: self.alpha,
            results: self
                .results
                .iter()
                .map(|r| ResultRow {
                    feature: self.feature_names[r.feature_index].clone(),
                    index: r.feature_index,
                    method: r.method,
                    estimate: r.estimate,
                    std_error: r.std_error,
                    statistic: r.statistic,
                    p_value: r.p_value,
                    n_used: Some(r.n_used),
                })
                .collect(),
            wall_time_seconds: self.wall_time_seconds.clone(),
            config_digest: self.config_digest.clone(),
            selected: Some(self.selected.clone()),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ReportDoc = serde_json::from_str(text)?;
        let mut names: BTreeMap<usize, String> = BTreeMap::new();
        for row in &doc.results {
            if let Some(prev) = names.insert(row.index, row.feature.clone()) {
                if prev != row.feature {
                    return Err(Error::invalid(format!(
                        "feature index {} has two names: {prev} and {}",
                        row.index, row.feature
                    )));
                }
            }
        }
        let p = names.keys().next_back().map_or(0, |m| m + 1);
        let feature_names = (0..p)
            .map(|i| names.get(&i).cloned().unwrap_or_else(|| format!("X{}", i + 1)))
            .collect();
        let results: Vec<TestResult> = doc.results.iter().map(ResultRow::to_result).collect();
        let computed = selected_sets(&results, doc.alpha);
        if let Some(stored) = &doc.selected {
            if *stored != computed {
                return Err(Error::invalid(
                    "stored selected sets disagree with p-values at alpha",
                ));
            }
        }
        let report = Self {
            feature_names,
            results,
            selected: computed,
            alpha: doc.alpha,
            wall_time_seconds: doc.wall_time_seconds,
            config_digest: doc.config_digest,
        };
        report.validate()?;
        Ok(report)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,index,method,estimate,std_error,statistic,p_value\n");
        for r in &self.results {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                csv_field(&self.feature_names[r.feature_index]),
                r.feature_index,
                r.method,
                r.estimate,
                r.std_error,
                r.statistic,
                r.p_value
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::invalid(format!("unknown report format \"{other}\""))),
        }
    }
}

pub fn write_report(report: &ImportanceReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    report.validate()?;
    let text = match format {
        ReportFormat::Json => report.to_json()?,
        ReportFormat::Csv => report.to_csv(),
    };
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ImportanceReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ImportanceReport::from_json(&text)
}

/// Reads the result rows of a CSV report. `n_used` is not part of the CSV
/// schema and comes back as 0.
pub fn read_results_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<TestResult>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    let mut results = Vec::new();
    for (i, rec) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = rec.map_err(|e| Error::Csv(format!("row {}: {e}", i + 1)))?;
        names.insert(row.index, row.feature.clone());
        results.push(TestResult {
            feature_index: row.index,
            method: row.method,
            estimate: row.estimate,
            std_error: row.std_error,
            statistic: row.statistic,
            p_value: row.p_value,
            n_used: 0,
        });
    }
    let p = names.keys().next_back().map_or(0, |m| m + 1);
    let feature_names = (0..p)
        .map(|i| names.get(&i).cloned().unwrap_or_else(|| format!("X{}", i + 1)))
        .collect();
    Ok((feature_names, results))
}

pub fn selected_sets(results: &[TestResult], alpha: f64) -> BTreeMap<Method, BTreeSet<usize>> {
    let mut out: BTreeMap<Method, BTreeSet<usize>> = BTreeMap::new();
    for r in results {
        let entry = out.entry(r.method).or_default();
        if r.p_value < alpha {
            entry.insert(r.feature_index);
        }
    }
    out
}

/// Hex SHA-256 of a canonical configuration string.
pub fn config_digest(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    alpha: f64,
    results: Vec<ResultRow>,
    wall_time_seconds: BTreeMap<Method, f64>,
    config_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    selected: Option<BTreeMap<Method, BTreeSet<usize>>>,
}

#[derive(Serialize, Deserialize)]
struct ResultRow {
    feature: String,
    index: usize,
    method: Method,
    estimate: f64,
    std_error: f64,
    statistic: f64,
    p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_used: Option<usize>,
}

impl ResultRow {
    fn to_result(&self) -> TestResult {
        TestResult {
            feature_index: self.index,
            method: self.method,
            estimate: self.estimate,
            std_error: self.std_error,
            statistic: self.statistic,
            p_value: self.p_value,
            n_used: self.n_used.unwrap_or(0),
        }
    }
}

#[derive(Deserialize)]
struct CsvRow {
    feature: String,
    index: usize,
    method: Method,
    estimate: f64,
    std_error: f64,
    statistic: f64,
    p_value: f64,
}
