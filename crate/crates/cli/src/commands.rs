use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use vimp::estimators::{select_features, LazyConfig, SelectionConfig, SolveSide};
use vimp::harness::{condition_b_report, empirical_are, run_replicates, ExperimentPlan, MetricsSummary};
use vimp::regress::{RegressorKind, RegressorSpec};
use vimp::report::{parse_methods, write_report, ReportFormat};
use vimp::simgen::{generate, ScenarioKind, ScenarioSpec};
use vimp::theory::{are_example1, are_nonlinear, cv_linear, cv_single_index, empirical_moments, ModelMoments};
use vimp::{load_csv, Method, RngStream};

use crate::config::ConfigFile;

pub enum CliError {
    Usage(String),
    Clap(clap::Error),
    Run(vimp::Error),
}

impl From<vimp::Error> for CliError {
    fn from(e: vimp::Error) -> Self {
        CliError::Run(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "vimp", version, about = "Model-agnostic feature-selection tests and efficiency checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test every feature of a CSV dataset and write an importance report.
    Select(SelectArgs),
    /// Generate a synthetic scenario, or run a Monte Carlo selection study on it.
    Simulate(SimulateArgs),
    /// Closed-form coefficients of variation and ARE of GCM against LOCO.
    Are(AreArgs),
    /// Plug-in moments from a CSV of residualized feature and component samples.
    Moments(MomentsArgs),
    /// Compare the empirical ARE of two methods with its closed form.
    AreCheck(AreCheckArgs),
    /// Validate a saved importance report and print it as JSON or CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` config file; explicit flags take precedence.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RegressorArgs {
    /// ols, ridge, kernel_ridge, gbm, mlp or lasso.
    #[arg(long, value_name = "KIND")]
    pub regressor: Option<String>,
    /// Regressor hyperparameter such as `gbm.rounds=200` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Comma-separated subset of gcm, loco, dropout, permutation, lazy_vi.
    #[arg(long, default_value = "gcm,loco")]
    pub methods: String,
    /// Selection level: a feature is selected when p < alpha.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Folds for cross-fitted GCM and LOCO residuals; 1 is in-sample.
    #[arg(long, default_value_t = 1)]
    pub crossfit: usize,
    /// Shuffles per feature for the permutation test.
    #[arg(long, default_value_t = 10)]
    pub permutations: usize,
    /// Lazy-VI ridge penalty λ (default √n).
    #[arg(long)]
    pub lazy_lambda: Option<f64>,
    /// Lazy-VI linear system: auto, primal or dual.
    #[arg(long, default_value = "auto")]
    pub lazy_solve: String,
    /// Test LOCO, dropout and Lazy-VI against ψ > 0.
    #[arg(long)]
    pub one_sided: bool,
    /// Comma-separated 0-based feature indices to test (default all).
    #[arg(long)]
    pub features: Option<String>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: Common,
    /// CSV with a header row; the last column is the response.
    #[arg(long)]
    pub input: PathBuf,
    /// Response column name, overriding the last column.
    #[arg(long)]
    pub target: Option<String>,
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub regressor: RegressorArgs,
    /// Seed of every random draw; required, runs are reproducible.
    #[arg(long)]
    pub seed: u64,
    /// Write the full report, including wall times, here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Format of the --out file.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// a, b, c, d, even_quadratic or custom.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Number of features (default: the scenario's own).
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Copies of the 8-feature pattern.
    #[arg(long, default_value_t = 1)]
    pub replication: usize,
    /// Comma-separated coefficients of the custom linear scenario.
    #[arg(long)]
    pub coefficients: Option<String>,
    /// Correlation `i:j:rho` between 0-based features (repeatable; replaces defaults).
    #[arg(long = "correlation", value_name = "I:J:RHO")]
    pub correlations: Vec<String>,
    /// Seed of every random draw; required, runs are reproducible.
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Write one generated dataset here (plus a `.truth.json` sidecar) and exit.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub regressor: RegressorArgs,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// Write the full summary, including wall times, here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write long-format `feature,method,mean_p,sd_p` rows here.
    #[arg(long)]
    pub emit_plot_csv: Option<PathBuf>,
    /// Report the condition-(B) ratio per feature instead of running tests.
    #[arg(long)]
    pub condition_b: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TheoryModelArg {
    Linear,
    SingleIndex,
    Nonlinear,
}

#[derive(Debug, Args)]
pub struct AreArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = TheoryModelArg::Linear)]
    pub model: TheoryModelArg,
    /// Coefficient βⱼ of the tested feature.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Correlation of the two features in the two-feature Gaussian design.
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_x: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_eps: f64,
    /// Link derivative η′ for the single-index model.
    #[arg(long, default_value_t = 1.0)]
    pub eta_prime: f64,
    /// JSON moment record (as printed by `moments`) instead of the Gaussian design.
    #[arg(long)]
    pub moments: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub common: Common,
    /// CSV holding residualized feature and component samples.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "xt")]
    pub xt_column: String,
    #[arg(long, default_value = "ft")]
    pub ft_column: String,
    /// Noise variance σ².
    #[arg(long, default_value_t = 0.0)]
    pub noise_var: f64,
}

#[derive(Debug, Args)]
pub struct AreCheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// Two-feature linear design with correlation --rho; tests feature 0.
    #[arg(long, conflicts_with = "scenario")]
    pub example1: bool,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_x: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_eps: f64,
    /// Scenario to use instead of --example1.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Feature to test (0-based).
    #[arg(long, default_value_t = 0)]
    pub feature: usize,
    #[arg(long, default_value = "gcm")]
    pub method_a: String,
    #[arg(long, default_value = "loco")]
    pub method_b: String,
    #[arg(long, default_value_t = 500)]
    pub replicates: usize,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub crossfit: usize,
    #[command(flatten)]
    pub regressor: RegressorArgs,
    /// Seed of every random draw; required, runs are reproducible.
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// JSON report written by `select --out`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

pub fn dispatch(cli: Cli, config: &ConfigFile) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Select(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::Are(a) => &a.common,
        Command::Moments(a) => &a.common,
        Command::AreCheck(a) => &a.common,
        Command::Report(a) => &a.common,
    };
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| usage(format!("cannot start thread pool: {e}")))?;
    }
    match cli.command {
        Command::Select(a) => select(a, config),
        Command::Simulate(a) => simulate(a, config),
        Command::Are(a) => are(a),
        Command::Moments(a) => moments(a),
        Command::AreCheck(a) => are_check(a, config),
        Command::Report(a) => report(a),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(vimp::Error::from)?;
    println!("{text}");
    Ok(())
}

fn write_file(path: &PathBuf, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| {
        CliError::Run(vimp::Error::Io {
            path: path.clone(),
            source: e,
        })
    })
}

fn regressor_spec(args: &RegressorArgs, config: &ConfigFile) -> Result<RegressorSpec, CliError> {
    let mut spec = RegressorSpec::default();
    for (k, v) in config.regressor_entries() {
        spec.set_key(k, v).map_err(|e| usage(e.to_string()))?;
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got \"{kv}\"")))?;
        spec.set_key(k, v).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(kind) = &args.regressor {
        spec.kind = kind.parse::<RegressorKind>().map_err(|e| usage(e.to_string()))?;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| usage(format!("--{flag}: cannot parse \"{s}\"")))
        })
        .collect()
}

struct TestSettings {
    methods: BTreeSet<Method>,
    alpha: f64,
    config: SelectionConfig,
}

fn test_settings(t: &TestArgs, regressor: RegressorSpec, allow_alpha_one: bool) -> Result<TestSettings, CliError> {
    let methods = parse_methods(&t.methods).map_err(|e| usage(e.to_string()))?;
    if methods.is_empty() {
        return Err(usage("--methods is empty"));
    }
    let alpha_ok = t.alpha > 0.0 && (t.alpha < 1.0 || (allow_alpha_one && t.alpha == 1.0));
    if !alpha_ok {
        return Err(usage(format!("--alpha must be in (0, 1), got {}", t.alpha)));
    }
    if t.crossfit == 0 {
        return Err(usage("--crossfit must be at least 1"));
    }
    if t.permutations == 0 {
        return Err(usage("--permutations must be at least 1"));
    }
    if let Some(l) = t.lazy_lambda {
        if !(l > 0.0 && l.is_finite()) {
            return Err(usage(format!("--lazy-lambda must be positive, got {l}")));
        }
    }
    if methods.contains(&Method::LazyVi) && regressor.kind != RegressorKind::Mlp {
        return Err(usage("lazy_vi needs --regressor mlp"));
    }
    let solve_side: SolveSide = t.lazy_solve.parse().map_err(|e: vimp::Error| usage(e.to_string()))?;
    let features = t
        .features
        .as_deref()
        .map(|f| parse_list::<usize>("features", f))
        .transpose()?;
    Ok(TestSettings {
        methods,
        alpha: t.alpha,
        config: SelectionConfig {
            regressor,
            crossfit_k: t.crossfit,
            permutations: t.permutations,
            lazy: LazyConfig {
                lambda: t.lazy_lambda,
                solve_side,
            },
            one_sided: t.one_sided,
            features,
        },
    })
}

fn select(a: SelectArgs, config: &ConfigFile) -> Result<(), CliError> {
    let regressor = regressor_spec(&a.regressor, config)?;
    let settings = test_settings(&a.test, regressor, false)?;
    let data = load_csv(&a.input, a.target.as_deref())?;
    if let Some(f) = &settings.config.features {
        if let Some(bad) = f.iter().find(|&&j| j >= data.p()) {
            return Err(usage(format!("--features: index {bad} out of range for p = {}", data.p())));
        }
    }
    let report = select_features(
        &data,
        &settings.methods,
        settings.alpha,
        &settings.config,
        &RngStream::new(a.seed, 0),
    )?;
    if let Some(out) = &a.out {
        write_report(&report, out, a.format.into())?;
    }
    let mut stable = report;
    stable.wall_time_seconds.clear();
    println!("{}", stable.to_json()?);
    Ok(())
}

fn scenario_spec(a: &ScenarioArgs) -> Result<ScenarioSpec, CliError> {
    let kind: ScenarioKind = a.scenario.parse().map_err(|e: vimp::Error| usage(e.to_string()))?;
    let seed = RngStream::new(a.seed, 0);
    let mut spec = match (&a.coefficients, kind) {
        (Some(c), ScenarioKind::Custom) => ScenarioSpec::custom(parse_list("coefficients", c)?, a.n, seed),
        (None, ScenarioKind::Custom) => return Err(usage("--scenario custom needs --coefficients")),
        (Some(_), _) => return Err(usage("--coefficients applies only to --scenario custom")),
        (None, kind) => ScenarioSpec::new(kind, a.n, seed),
    };
    if a.replication != 1 {
        spec = spec.with_replication(a.replication);
    }
    if let Some(p) = a.p {
        spec.p = p;
    }
    if let Some(s) = a.noise_sd {
        spec.noise_sd = s;
    }
    if !a.correlations.is_empty() {
        spec.correlations = a
            .correlations
            .iter()
            .map(|c| {
                let parts: Vec<&str> = c.split(':').collect();
                let bad = || usage(format!("--correlation expects I:J:RHO, got \"{c}\""));
                if parts.len() != 3 {
                    return Err(bad());
                }
                Ok((
                    parts[0].trim().parse().map_err(|_| bad())?,
                    parts[1].trim().parse().map_err(|_| bad())?,
                    parts[2].trim().parse().map_err(|_| bad())?,
                ))
            })
            .collect::<Result<_, _>>()?;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

fn simulate(a: SimulateArgs, config: &ConfigFile) -> Result<(), CliError> {
    let spec = scenario_spec(&a.scenario)?;
    if let Some(path) = &a.dump {
        let generated = generate(&spec)?;
        let sidecar = generated.dump(path)?;
        return print_json(&json!({
            "data": path,
            "truth": sidecar,
            "n": spec.n,
            "p": spec.p,
            "active_set": generated.active_set,
        }));
    }
    if a.replicates == 0 {
        return Err(usage("--replicates must be at least 1"));
    }
    let regressor = regressor_spec(&a.regressor, config)?;
    let settings = test_settings(&a.test, regressor, true)?;
    let mut plan = ExperimentPlan::new(
        spec,
        settings.methods,
        settings.config.regressor,
        a.replicates,
        RngStream::new(a.scenario.seed, 0),
    );
    plan.alpha = settings.alpha;
    plan.crossfit_k = settings.config.crossfit_k;
    plan.permutations = settings.config.permutations;
    plan.lazy = settings.config.lazy;
    plan.one_sided = settings.config.one_sided;
    plan.features = settings.config.features;
    plan.validate().map_err(|e| usage(e.to_string()))?;

    if a.condition_b {
        return print_json(&condition_b_report(&plan)?);
    }
    let outcomes = run_replicates(&plan)?;
    let summary = MetricsSummary::from_outcomes(&plan, &outcomes);
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&summary).map_err(vimp::Error::from)?;
        write_file(out, &text)?;
    }
    if let Some(path) = &a.emit_plot_csv {
        write_file(path, &summary.to_plot_csv())?;
    }
    print_json(&summary.without_timings())
}

fn load_moments(path: &PathBuf) -> Result<ModelMoments, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Run(vimp::Error::Io {
            path: path.clone(),
            source: e,
        })
    })?;
    let m: ModelMoments = serde_json::from_str(&text).map_err(vimp::Error::from)?;
    m.validate()?;
    Ok(m)
}

fn gaussian_design_moments(rho: f64, sigma_x: f64, sigma_eps: f64) -> Result<ModelMoments, CliError> {
    if !(rho.abs() < 1.0) {
        return Err(usage(format!("--rho must satisfy |rho| < 1, got {rho}")));
    }
    if !(sigma_x > 0.0) || !(sigma_eps >= 0.0) {
        return Err(usage("--sigma-x must be positive and --sigma-eps non-negative"));
    }
    let v = (1.0 - rho * rho) * sigma_x * sigma_x;
    let s2 = sigma_x * sigma_x;
    Ok(ModelMoments::linear(v, 2.0 * v * v, sigma_eps * sigma_eps).with_unconditional(s2, 2.0 * s2 * s2))
}

fn are(a: AreArgs) -> Result<(), CliError> {
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let m = match &a.moments {
        Some(path) => load_moments(path)?,
        None => gaussian_design_moments(a.rho, a.sigma_x, a.sigma_eps)?,
    };
    let pair = match a.model {
        TheoryModelArg::Linear => cv_linear(a.beta, &m, a.n)?,
        TheoryModelArg::SingleIndex => cv_single_index(a.beta, a.eta_prime, &m, a.n)?,
        TheoryModelArg::Nonlinear => {
            if a.moments.is_none() {
                return Err(usage("--model nonlinear needs --moments"));
            }
            are_nonlinear(&m, a.n)?
        }
    };
    print_json(&pair)
}

fn moments(a: MomentsArgs) -> Result<(), CliError> {
    if !(a.noise_var >= 0.0) {
        return Err(usage("--noise-var must be non-negative"));
    }
    let data = load_csv(&a.input, Some(&a.ft_column))?;
    let j = data
        .feature_names()
        .iter()
        .position(|n| *n == a.xt_column)
        .ok_or_else(|| usage(format!("no column named \"{}\" in {}", a.xt_column, a.input.display())))?;
    let xt = data.column(j);
    let m = empirical_moments(xt.as_slice(), data.y().as_slice(), a.noise_var)?;
    print_json(&m)
}

fn are_check(a: AreCheckArgs, config: &ConfigFile) -> Result<(), CliError> {
    let mut regressor = regressor_spec(&a.regressor, config)?;
    let seed = RngStream::new(a.seed, 0);
    let (scenario, closed_form) = match (&a.scenario, a.example1) {
        (None, true) => {
            if !(a.rho.abs() < 1.0) || !(a.sigma_x > 0.0) || !(a.sigma_eps >= 0.0) || a.beta == 0.0 {
                return Err(usage("--example1 needs |rho| < 1, sigma-x > 0, sigma-eps ≥ 0, beta ≠ 0"));
            }
            if a.feature != 0 {
                return Err(usage("--example1 tests feature 0"));
            }
            // unit-variance features with coefficients scaled by σ_x give the same response
            let mut spec = ScenarioSpec::custom(vec![a.beta * a.sigma_x, a.sigma_x], a.n, seed);
            spec.correlations = vec![(0, 1, a.rho)];
            spec.noise_sd = a.sigma_eps;
            (spec, Some(are_example1(a.beta, a.rho, a.sigma_x, a.sigma_eps)?))
        }
        (Some(s), false) => {
            let kind: ScenarioKind = s.parse().map_err(|e: vimp::Error| usage(e.to_string()))?;
            if kind == ScenarioKind::Custom {
                return Err(usage("are-check supports named scenarios or --example1"));
            }
            (ScenarioSpec::new(kind, a.n, seed), None)
        }
        (None, false) => return Err(usage("are-check needs --example1 or --scenario")),
        (Some(_), true) => return Err(usage("--example1 and --scenario conflict")),
    };
    scenario.validate().map_err(|e| usage(e.to_string()))?;
    let method_a: Method = a.method_a.parse().map_err(|e: vimp::Error| usage(e.to_string()))?;
    let method_b: Method = a.method_b.parse().map_err(|e: vimp::Error| usage(e.to_string()))?;
    if a.replicates < 50 {
        return Err(usage("--replicates must be at least 50"));
    }
    if a.crossfit == 0 {
        return Err(usage("--crossfit must be at least 1"));
    }
    if (method_a == Method::LazyVi || method_b == Method::LazyVi) && regressor.kind != RegressorKind::Mlp {
        return Err(usage("lazy_vi needs --regressor mlp"));
    }
    regressor.seed = seed;
    let mut plan = ExperimentPlan::new(scenario, [method_a, method_b].into(), regressor, a.replicates, seed);
    plan.crossfit_k = a.crossfit;
    if a.feature >= plan.scenario.p {
        return Err(usage(format!("--feature {} out of range for p = {}", a.feature, plan.scenario.p)));
    }
    let comparison = empirical_are(&plan, method_a, method_b, a.feature)?;
    print_json(&json!({
        "comparison": comparison,
        "example1_are": closed_form,
    }))
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let report = vimp::report::read_report(&a.input)?;
    match a.format {
        Format::Json => println!("{}", report.to_json()?),
        Format::Csv => print!("{}", report.to_csv()),
    }
    Ok(())
}
