//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::estimators::{compare, evaluate, EvalSettings, SamplerKind, DEFAULT_LEVEL};
use crate::harness::{
    self, generate_dataset, DgpParams, SimulationSpec, DEFAULT_COVERAGE_REPLICATIONS,
    DEFAULT_SWEEP_REPLICATIONS,
};
use crate::io::{self, Emit, OutputFormat};
use crate::methodology::PlugIn;
use crate::model::{MethodologySpec, PerformanceMeasure, SplitConfig, TestSummary};
use crate::oracle::{self, OracleInputs};
use crate::validation::{self, ValidationSettings};

/// Below this many tests the normal approximation behind the interval is shaky.
pub const SMALL_I_WARNING: usize = 200;

#[derive(Debug, Parser)]
#[command(name = "splitval", version, about = "Sample-split evaluation of experimentation methodologies")]
pub struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true, env = "SPLITVAL_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the average performance of one methodology.
    Evaluate(EvaluateArgs),
    /// Relative difference in average performance between two methodologies.
    Compare(CompareArgs),
    /// Repeat a comparison over simulated datasets and summarize bias and coverage.
    Simulate(SimulateArgs),
    /// Squared bias, variance and MSE of the comparison over split fractions.
    SweepAlpha(SweepAlphaArgs),
    /// Variance of the comparison over numbers of tests and partitions.
    SweepSize(SweepSizeArgs),
    /// Closed-form and numeric estimands.
    Oracle(OracleArgs),
    /// Check both split samplers against the conditional split law.
    ValidateSampler(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 5000 heteroskedastic tests, sigma_sq = 1, tau_sq = 2.
    Benchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    /// Training fraction.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Random partitions per test.
    #[arg(long, default_value_t = 30)]
    pub partitions: usize,
    #[arg(long, env = "SPLITVAL_SEED", default_value_t = 0)]
    pub seed: u64,
    /// `plugin` or `unit:n=N`.
    #[arg(long, default_value = "plugin")]
    pub sampler: SamplerKind,
    /// Confidence level of the intervals.
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    pub level: f64,
}

impl SplitArgs {
    fn config(&self) -> Result<SplitConfig> {
        SplitConfig::new(self.alpha, self.partitions, self.seed)
    }
}

#[derive(Debug, Clone, Args)]
pub struct DgpArgs {
    /// Start from a named simulation setting.
    #[arg(long, value_enum)]
    pub dgp_preset: Option<Preset>,
    /// Variance of true impacts.
    #[arg(long)]
    pub sigma_sq: Option<f64>,
    /// Baseline sampling variance.
    #[arg(long)]
    pub tau_sq: Option<f64>,
    /// Number of simulated tests.
    #[arg(long)]
    pub tests: Option<usize>,
    /// Use the same sampling variance for every test.
    #[arg(long)]
    pub homoskedastic: bool,
}

impl DgpArgs {
    fn params(&self) -> DgpParams {
        let mut p = DgpParams::benchmark();
        if let Some(s) = self.sigma_sq {
            p.sigma_sq = s;
        }
        if let Some(t) = self.tau_sq {
            p.tau_sq = t;
        }
        if let Some(i) = self.tests {
            p.num_tests = i;
        }
        if self.homoskedastic {
            p.heteroskedastic = false;
        }
        p
    }

    fn is_set(&self) -> bool {
        self.dgp_preset.is_some()
            || self.sigma_sq.is_some()
            || self.tau_sq.is_some()
            || self.tests.is_some()
            || self.homoskedastic
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV of test summaries with header `test_id,delta_hat,tau_sq`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub dgp: DgpArgs,
}

impl DataArgs {
    /// Tests from the input file, or one simulated dataset.
    fn load(&self, seed: u64) -> Result<Vec<TestSummary>> {
        match (&self.input, self.dgp.is_set()) {
            (Some(_), true) => Err(Error::Config(
                "give either --input or simulation options, not both".into(),
            )),
            (None, false) => Err(Error::Config(
                "no data: give --input or --dgp-preset".into(),
            )),
            (Some(path), false) => io::ingest_summaries(path),
            (None, true) => generate_dataset(&self.dgp.params(), seed, 0),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Methodology, e.g. `identity`, `shrink:w=0.5`, `bayes:sigma_sq=1`,
    /// `threshold`, `threshold:c=1.64`, `bayes-sign:sigma_sq=1`.
    #[arg(long)]
    pub method: MethodologySpec,
    /// `bias`, `squared-error`, `decision-value` or `launch-only`.
    #[arg(long)]
    pub measure: PerformanceMeasure,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Baseline methodology.
    #[arg(long)]
    pub m1: MethodologySpec,
    #[arg(long)]
    pub m2: MethodologySpec,
    #[arg(long)]
    pub measure: PerformanceMeasure,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pair {
    /// Identity vs Bayes shrinkage under squared error.
    Mse,
    /// 5% threshold rule vs Bayes sign rule under launch-only decision value.
    Launch,
}

#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    /// Standard methodology pair; the Bayes side uses the simulated prior variance.
    #[arg(long, value_enum, default_value = "mse")]
    pub pair: Pair,
    /// Override the baseline methodology of the pair.
    #[arg(long)]
    pub m1: Option<MethodologySpec>,
    #[arg(long)]
    pub m2: Option<MethodologySpec>,
    #[arg(long)]
    pub measure: Option<PerformanceMeasure>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, default_value_t = DEFAULT_COVERAGE_REPLICATIONS)]
    pub replications: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepAlphaArgs {
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Comma-separated split fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.35,0.5,0.65,0.8")]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_SWEEP_REPLICATIONS)]
    pub replications: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepSizeArgs {
    #[command(flatten)]
    pub dgp: DgpArgs,
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Comma-separated numbers of tests.
    #[arg(long, value_delimiter = ',', default_value = "500,2000,8000")]
    pub tests_grid: Vec<usize>,
    /// Comma-separated numbers of partitions.
    #[arg(long, value_delimiter = ',', default_value = "30")]
    pub partitions_grid: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_SWEEP_REPLICATIONS)]
    pub replications: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    /// Relative MSE of Bayes shrinkage vs the unbiased estimator (homoskedastic).
    Mse,
    /// Relative launch-only value of the Bayes sign rule vs the threshold rule (homoskedastic).
    Launch,
    /// Any methodology pair, by numeric integration.
    Pair,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub kind: OracleKind,
    #[arg(long)]
    pub sigma_sq: f64,
    #[arg(long)]
    pub tau_sq: f64,
    /// Training fraction; omit for the full-sample (ideal) estimand.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Critical value of the threshold rule (default: 97.5% normal quantile).
    #[arg(long)]
    pub launch_z: Option<f64>,
    /// `pair` only: add a chi-square(1) draw to each test's sampling variance.
    #[arg(long)]
    pub heteroskedastic: bool,
    #[arg(long)]
    pub m1: Option<MethodologySpec>,
    #[arg(long)]
    pub m2: Option<MethodologySpec>,
    #[arg(long)]
    pub measure: Option<PerformanceMeasure>,
    /// Absolute precision of the numeric integration.
    #[arg(long, default_value_t = harness::ORACLE_PRECISION)]
    pub precision: f64,
    /// Print JSON instead of a rounded number.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Comma-separated split fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.8")]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub delta_hat: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau_sq: f64,
    /// Plug-in draws per split fraction.
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    /// Unit-level repartitions per split fraction (0 skips the unit-level checks).
    #[arg(long, default_value_t = 50_000)]
    pub unit_draws: usize,
    #[arg(long, default_value_t = 10_000)]
    pub n_per_arm: usize,
    #[arg(long, env = "SPLITVAL_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Pass threshold in standard errors.
    #[arg(long, default_value_t = validation::DEFAULT_TOLERANCE_SE)]
    pub tolerance_se: f64,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// What the process should report back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    /// False when a validation run found a failing check.
    pub passed: bool,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn ok(warnings: Vec<String>) -> Self {
        Outcome {
            passed: true,
            warnings,
        }
    }
}

/// Runs a parsed command line inside a pool of `cli.workers` threads.
pub fn run(cli: Cli) -> Result<Outcome> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Evaluate(a) => run_evaluate(a),
        Command::Compare(a) => run_compare(a),
        Command::Simulate(a) => run_simulate(a),
        Command::SweepAlpha(a) => run_sweep_alpha(a),
        Command::SweepSize(a) => run_sweep_size(a),
        Command::Oracle(a) => run_oracle(a),
        Command::ValidateSampler(a) => run_validate(a),
    }
}

fn size_warnings(num_tests: usize) -> Vec<String> {
    if num_tests < SMALL_I_WARNING {
        vec![format!(
            "only {num_tests} tests; the normal-approximation interval may be unreliable below {SMALL_I_WARNING}"
        )]
    } else {
        Vec::new()
    }
}

fn settings(split: &SplitArgs) -> Result<EvalSettings> {
    Ok(EvalSettings::new(split.config()?)
        .with_sampler(split.sampler)
        .with_level(split.level))
}

fn emit<T: Emit + ?Sized>(value: &T, out: &OutputArgs, default: OutputFormat) -> Result<()> {
    let format = out.format.map(OutputFormat::from).unwrap_or(default);
    io::write_output(out.output.as_deref(), &value.emit(format)?)
}

fn run_evaluate(a: EvaluateArgs) -> Result<Outcome> {
    let tests = a.data.load(a.split.seed)?;
    let report = evaluate(&tests, &a.method, a.measure, &settings(&a.split)?)?;
    emit(&report, &a.out, OutputFormat::Json)?;
    Ok(Outcome::ok(size_warnings(tests.len())))
}

fn run_compare(a: CompareArgs) -> Result<Outcome> {
    let tests = a.data.load(a.split.seed)?;
    let report = compare(&tests, &a.m1, &a.m2, a.measure, &settings(&a.split)?)?;
    emit(&report, &a.out, OutputFormat::Json)?;
    Ok(Outcome::ok(size_warnings(tests.len())))
}

fn simulation_spec(
    dgp: &DgpArgs,
    pair: &PairArgs,
    split: &SplitArgs,
    replications: usize,
) -> Result<SimulationSpec> {
    let params = dgp.params();
    let config = split.config()?;
    let mut spec = match pair.pair {
        Pair::Mse => SimulationSpec::estimator_pair(params, config, replications),
        Pair::Launch => SimulationSpec::decision_pair(params, config, replications),
    };
    if let Some(m) = pair.m1 {
        spec.methodology_1 = m;
    }
    if let Some(m) = pair.m2 {
        spec.methodology_2 = m;
    }
    if let Some(m) = pair.measure {
        spec.measure = m;
    }
    spec.sampler = split.sampler;
    spec.level = split.level;
    Ok(spec)
}

fn run_simulate(a: SimulateArgs) -> Result<Outcome> {
    let spec = simulation_spec(&a.dgp, &a.pair, &a.split, a.replications)?;
    let metrics = harness::run_replications(&spec)?;
    emit(&metrics, &a.out, OutputFormat::Json)?;
    Ok(Outcome::ok(size_warnings(spec.dgp.num_tests)))
}

fn run_sweep_alpha(a: SweepAlphaArgs) -> Result<Outcome> {
    let spec = simulation_spec(&a.dgp, &a.pair, &a.split, a.replications)?;
    let rows = harness::sweep_alpha(&spec, &a.alphas)?;
    emit(rows.as_slice(), &a.out, OutputFormat::Csv)?;
    Ok(Outcome::ok(size_warnings(spec.dgp.num_tests)))
}

fn run_sweep_size(a: SweepSizeArgs) -> Result<Outcome> {
    let spec = simulation_spec(&a.dgp, &a.pair, &a.split, a.replications)?;
    let rows = harness::sweep_size(&spec, &a.tests_grid, &a.partitions_grid)?;
    emit(rows.as_slice(), &a.out, OutputFormat::Csv)?;
    let smallest = a.tests_grid.iter().copied().min().unwrap_or(0);
    Ok(Outcome::ok(size_warnings(smallest)))
}

#[derive(Debug, serde::Serialize)]
struct OracleOutput {
    kind: &'static str,
    sigma_sq: f64,
    tau_sq: f64,
    alpha: Option<f64>,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_2: Option<f64>,
}

fn run_oracle(a: OracleArgs) -> Result<Outcome> {
    let mut inputs = OracleInputs::new(a.sigma_sq, a.tau_sq);
    if let Some(alpha) = a.alpha {
        inputs = inputs.with_alpha(alpha);
    }
    if let Some(z) = a.launch_z {
        inputs.launch_z = z;
    }
    let (kind, value, thetas) = match a.kind {
        OracleKind::Mse => {
            let v = match a.alpha {
                Some(_) => oracle::split_mse_relative(&inputs)?,
                None => oracle::ideal_mse_relative(&inputs)?,
            };
            ("mse", v, None)
        }
        OracleKind::Launch => {
            let v = match a.alpha {
                Some(_) => oracle::split_launch_relative(&inputs)?,
                None => oracle::ideal_launch_relative(&inputs)?,
            };
            ("launch", v, None)
        }
        OracleKind::Pair => {
            let (m1, m2, measure) = match (a.m1, a.m2, a.measure) {
                (Some(m1), Some(m2), Some(measure)) => (m1, m2, measure),
                _ => {
                    return Err(Error::Config(
                        "--kind pair needs --m1, --m2 and --measure".into(),
                    ))
                }
            };
            let prior = oracle::PriorModel {
                sigma_sq: a.sigma_sq,
                tau_sq_base: a.tau_sq,
                heteroskedastic: a.heteroskedastic,
            };
            let e = oracle::split_estimand_numeric(
                &m1 as &dyn PlugIn,
                &m2 as &dyn PlugIn,
                measure,
                &prior,
                a.alpha,
                a.precision,
            )?;
            ("pair", e.relative_difference, Some((e.theta_1, e.theta_2)))
        }
    };
    let text = if a.json {
        io::to_json(&OracleOutput {
            kind,
            sigma_sq: a.sigma_sq,
            tau_sq: a.tau_sq,
            alpha: a.alpha,
            value,
            theta_1: thetas.map(|t| t.0),
            theta_2: thetas.map(|t| t.1),
        })?
    } else {
        format!("{value:.6}\n")
    };
    io::write_output(None, &text)?;
    Ok(Outcome::ok(Vec::new()))
}

fn run_validate(a: ValidateArgs) -> Result<Outcome> {
    let settings = ValidationSettings {
        delta_hat: a.delta_hat,
        tau_sq: a.tau_sq,
        draws: a.draws,
        n_per_arm: a.n_per_arm,
        seed: a.seed,
        tolerance_se: a.tolerance_se,
    };
    let report = validation::validate_samplers(&settings, &a.alphas, a.unit_draws)?;
    let text = if a.json {
        io::to_json(&report)?
    } else {
        let mut s = String::new();
        for c in &report.checks {
            s.push_str(&format!(
                "{} {:?} alpha={} {} observed={:.6e} expected={:.6e} z={:+.2}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.sampler,
                c.alpha,
                c.statistic,
                c.observed,
                c.expected,
                c.z_score(),
            ));
        }
        s.push_str(&format!(
            "{} reconstruction max_error={:.3e}\n",
            if report.reconstruction_passed { "PASS" } else { "FAIL" },
            report.max_reconstruction_error
        ));
        s.push_str(if report.passed() {
            "validate-sampler: PASS\n"
        } else {
            "validate-sampler: FAIL\n"
        });
        s
    };
    io::write_output(a.output.as_deref(), &text)?;
    Ok(Outcome {
        passed: report.passed(),
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_compare_line() {
        let cli = Cli::try_parse_from([
            "splitval",
            "compare",
            "--dgp-preset",
            "benchmark",
            "--measure",
            "squared-error",
            "--m1",
            "identity",
            "--m2",
            "bayes:sigma_sq=1",
            "--seed",
            "7",
        ])
        .unwrap();
        match cli.command {
            Command::Compare(a) => {
                assert_eq!(a.m2, MethodologySpec::BayesShrinkage { sigma_sq: 1.0 });
                assert_eq!(a.split.seed, 7);
                assert_eq!(a.data.dgp.params(), DgpParams::benchmark());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn input_and_dgp_are_exclusive() {
        let data = DataArgs {
            input: Some("x.csv".into()),
            dgp: DgpArgs {
                dgp_preset: Some(Preset::Benchmark),
                sigma_sq: None,
                tau_sq: None,
                tests: None,
                homoskedastic: false,
            },
        };
        assert!(matches!(data.load(0), Err(Error::Config(_))));
    }
}
