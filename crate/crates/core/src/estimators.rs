//! Per-partition scores, per-test averages and the average-performance
//! estimator with its asymptotic confidence interval.
//!
//! Pipeline for `I` tests and `S` partitions:
//!
//! 1. draw `S` split pairs per test (plug-in or unit-level sampler);
//! 2. score each partition with the unbiased per-partition estimator of the
//!    chosen measure;
//! 3. average the scores within each test;
//! 4. `theta_hat` is the mean of the per-test averages, `zeta_sq_hat` their
//!    variance with a `1/I` normalization;
//! 5. the interval is `theta_hat +/- sqrt(zeta_sq_hat / I) * z`.
//!
//! All reductions run in ascending test and partition order, so a report is
//! bit-identical for a given seed regardless of thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::methodology::{MethodologyOutput, PlugIn};
use crate::model::{PerformanceMeasure, SplitConfig, SplitPair, TestSummary};
use crate::normal;
use crate::rng::TestStreams;
use crate::sampler::draw_split_pairs;
use crate::unit_sim::{repartition_series, simulate_units};

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_DENOM_TOLERANCE: f64 = 1e-9;

/// How split data are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerKind {
    /// Draw split estimates from their conditional law given the summary.
    #[default]
    Plugin,
    /// Synthesize a unit panel per test (difference in means pinned to the
    /// summary's estimate) and repartition it.
    UnitLevel { n_per_arm: usize },
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerKind::Plugin => f.write_str("plugin"),
            SamplerKind::UnitLevel { n_per_arm } => write!(f, "unit:n={n_per_arm}"),
        }
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "plugin" {
            return Ok(SamplerKind::Plugin);
        }
        let rest = s
            .strip_prefix("unit")
            .ok_or_else(|| Error::InvalidParameter(format!("unknown sampler `{s}`")))?;
        let n_per_arm = match rest.strip_prefix(':') {
            None if rest.is_empty() => 1000,
            Some(param) => param
                .trim_start_matches("n=")
                .parse::<usize>()
                .map_err(|_| Error::InvalidParameter(format!("bad unit sampler size in `{s}`")))?,
            None => return Err(Error::InvalidParameter(format!("unknown sampler `{s}`"))),
        };
        if n_per_arm < 2 {
            return Err(Error::InvalidSize(format!(
                "unit sampler needs at least 2 units per arm, got {n_per_arm}"
            )));
        }
        Ok(SamplerKind::UnitLevel { n_per_arm })
    }
}

impl Serialize for SamplerKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SamplerKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Everything besides the data and methodology that an evaluation needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub split: SplitConfig,
    pub sampler: SamplerKind,
    /// Confidence level `1 - upsilon`.
    pub level: f64,
    /// Replication index mixed into every stream key; 0 outside simulations.
    pub replication: u64,
}

impl EvalSettings {
    pub fn new(split: SplitConfig) -> Self {
        EvalSettings {
            split,
            sampler: SamplerKind::Plugin,
            level: DEFAULT_LEVEL,
            replication: 0,
        }
    }

    pub fn with_sampler(mut self, sampler: SamplerKind) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn with_level(mut self, level: f64) -> Self {
        self.level = level;
        self
    }

    pub fn with_replication(mut self, replication: u64) -> Self {
        self.replication = replication;
        self
    }

    fn validate(&self) -> Result<()> {
        self.split.validate()?;
        check_level(self.level)
    }
}

/// Per-test, per-partition scores and their per-test averages for one methodology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePanel {
    pub test_ids: Vec<String>,
    pub num_partitions: usize,
    /// Row-major `I x S` partition scores.
    scores: Vec<f64>,
    per_test: Vec<f64>,
    pub alpha: f64,
    pub measure: PerformanceMeasure,
    pub methodology: String,
}

impl ScorePanel {
    pub fn num_tests(&self) -> usize {
        self.per_test.len()
    }

    pub fn partition_scores(&self, test: usize) -> &[f64] {
        &self.scores[test * self.num_partitions..(test + 1) * self.num_partitions]
    }

    /// Per-test averages `Y_hat_i`.
    pub fn per_test(&self) -> &[f64] {
        &self.per_test
    }
}

/// Average-performance estimate with its interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub theta_hat: f64,
    pub zeta_sq_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub num_tests: usize,
    pub alpha: f64,
    pub num_partitions: usize,
    pub measure: PerformanceMeasure,
    pub methodology: String,
}

impl PerformanceReport {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Relative difference in average performance between two methodologies
/// evaluated on shared split draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub theta_hat_1: f64,
    pub theta_hat_2: f64,
    pub relative_difference: f64,
    pub report_1: PerformanceReport,
    pub report_2: PerformanceReport,
}

/// Unbiased per-partition score of the measure.
pub fn partition_score(
    measure: PerformanceMeasure,
    kappa_out: MethodologyOutput,
    pair: &SplitPair,
) -> Result<f64> {
    measure.check_compatible(kappa_out.output_class)?;
    Ok(score(measure, kappa_out.value, pair))
}

#[inline]
fn score(measure: PerformanceMeasure, kappa: f64, pair: &SplitPair) -> f64 {
    let proxy = pair.delta_hat_b;
    match measure {
        PerformanceMeasure::Bias => kappa - proxy,
        PerformanceMeasure::SquaredError => {
            let d = kappa - proxy;
            d * d - pair.tau_sq_b
        }
        PerformanceMeasure::DecisionValue => kappa * proxy - (1.0 - kappa) * proxy,
        PerformanceMeasure::LaunchOnlyDecisionValue => kappa * proxy,
    }
}

fn fixed_order_mean(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    for &v in values {
        sum += v;
    }
    sum / values.len() as f64
}

/// Mean of one test's partition scores.
pub fn per_test_average(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("partition scores"));
    }
    Ok(fixed_order_mean(scores))
}

/// `theta_hat`: mean of the per-test averages.
pub fn average_performance(per_test: &[f64]) -> Result<f64> {
    if per_test.is_empty() {
        return Err(Error::EmptyInput("per-test scores"));
    }
    Ok(fixed_order_mean(per_test))
}

/// `zeta_sq_hat = (1/I) * sum (Y_hat_i - theta_hat)^2`.
pub fn performance_variance(per_test: &[f64], theta_hat: f64) -> Result<f64> {
    if per_test.len() < 2 {
        return Err(Error::InsufficientTests(per_test.len()));
    }
    let mut ss = 0.0;
    for &y in per_test {
        let d = y - theta_hat;
        ss += d * d;
    }
    Ok(ss / per_test.len() as f64)
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(level))
    }
}

/// Two-sided normal interval `theta_hat +/- sqrt(zeta_sq_hat / I) * z_{1 - (1-level)/2}`.
pub fn confidence_interval(
    theta_hat: f64,
    zeta_sq_hat: f64,
    num_tests: usize,
    level: f64,
) -> Result<(f64, f64)> {
    check_level(level)?;
    if num_tests == 0 {
        return Err(Error::EmptyInput("tests"));
    }
    if !(zeta_sq_hat >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "variance estimate must be non-negative, got {zeta_sq_hat}"
        )));
    }
    let z = normal::quantile(1.0 - (1.0 - level) / 2.0);
    let half = (zeta_sq_hat / num_tests as f64).sqrt() * z;
    Ok((theta_hat - half, theta_hat + half))
}

/// `(theta_2 - theta_1) / theta_1`, refusing baselines within `denom_tolerance` of zero.
pub fn relative_difference(theta_hat_1: f64, theta_hat_2: f64, denom_tolerance: f64) -> Result<f64> {
    if !(theta_hat_1.abs() > denom_tolerance) {
        return Err(Error::DegenerateBaseline {
            value: theta_hat_1,
            tolerance: denom_tolerance,
        });
    }
    Ok((theta_hat_2 - theta_hat_1) / theta_hat_1)
}

/// Split pairs for one test from the configured sampler.
pub fn split_pairs_for_test(
    test: &TestSummary,
    test_index: usize,
    settings: &EvalSettings,
) -> Result<Vec<SplitPair>> {
    let streams = TestStreams::new(
        settings.split.master_seed,
        settings.replication,
        test_index as u64,
    );
    match settings.sampler {
        SamplerKind::Plugin => draw_split_pairs(test, &settings.split, &streams),
        SamplerKind::UnitLevel { n_per_arm } => {
            let mut panel = simulate_units(
                test.delta_hat,
                test.tau_sq,
                n_per_arm,
                &mut streams.unit_panel(),
            )?;
            panel.parent_test_id = test.test_id.clone();
            panel.recenter(test.delta_hat);
            repartition_series(&panel, &settings.split, test.tau_sq, &streams)
        }
    }
}

/// Scores every methodology on the same split draws.
pub fn score_panels(
    tests: &[TestSummary],
    methodologies: &[&dyn PlugIn],
    measure: PerformanceMeasure,
    settings: &EvalSettings,
) -> Result<Vec<ScorePanel>> {
    settings.validate()?;
    if tests.is_empty() {
        return Err(Error::EmptyInput("tests"));
    }
    for m in methodologies {
        measure.check_compatible(m.output_class())?;
    }
    for test in tests {
        test.validate()?;
    }
    let num_partitions = settings.split.num_partitions;
    let num_methods = methodologies.len();

    // One row of `num_methods * S` scores per test.
    let rows: Vec<Vec<f64>> = tests
        .par_iter()
        .enumerate()
        .map(|(i, test)| {
            let pairs = split_pairs_for_test(test, i, settings)?;
            let mut row = Vec::with_capacity(num_methods * num_partitions);
            for m in methodologies {
                for pair in &pairs {
                    let kappa = m.value(pair.delta_hat_a, pair.tau_sq_a);
                    row.push(score(measure, kappa, pair));
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let test_ids: Vec<String> = tests.iter().map(|t| t.test_id.clone()).collect();
    Ok(methodologies
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let mut scores = Vec::with_capacity(tests.len() * num_partitions);
            let mut per_test = Vec::with_capacity(tests.len());
            for row in &rows {
                let slice = &row[k * num_partitions..(k + 1) * num_partitions];
                scores.extend_from_slice(slice);
                per_test.push(fixed_order_mean(slice));
            }
            ScorePanel {
                test_ids: test_ids.clone(),
                num_partitions,
                scores,
                per_test,
                alpha: settings.split.alpha,
                measure,
                methodology: m.label(),
            }
        })
        .collect())
}

/// Aggregates a score panel into `theta_hat`, `zeta_sq_hat` and the interval.
pub fn report_from_panel(panel: &ScorePanel, level: f64) -> Result<PerformanceReport> {
    let per_test = panel.per_test();
    let theta_hat = average_performance(per_test)?;
    let zeta_sq_hat = performance_variance(per_test, theta_hat)?;
    let (ci_low, ci_high) = confidence_interval(theta_hat, zeta_sq_hat, per_test.len(), level)?;
    Ok(PerformanceReport {
        theta_hat,
        zeta_sq_hat,
        ci_low,
        ci_high,
        level,
        num_tests: per_test.len(),
        alpha: panel.alpha,
        num_partitions: panel.num_partitions,
        measure: panel.measure,
        methodology: panel.methodology.clone(),
    })
}

/// Estimates the average performance of one methodology.
pub fn evaluate<M: PlugIn>(
    tests: &[TestSummary],
    methodology: &M,
    measure: PerformanceMeasure,
    settings: &EvalSettings,
) -> Result<PerformanceReport> {
    if tests.len() < 2 {
        return Err(Error::InsufficientTests(tests.len()));
    }
    let panels = score_panels(tests, &[methodology as &dyn PlugIn], measure, settings)?;
    report_from_panel(&panels[0], settings.level)
}

/// Compares two methodologies on shared split draws.
pub fn compare<M1: PlugIn, M2: PlugIn>(
    tests: &[TestSummary],
    methodology_1: &M1,
    methodology_2: &M2,
    measure: PerformanceMeasure,
    settings: &EvalSettings,
) -> Result<ComparisonReport> {
    compare_with_tolerance(
        tests,
        methodology_1,
        methodology_2,
        measure,
        settings,
        DEFAULT_DENOM_TOLERANCE,
    )
}

pub fn compare_with_tolerance<M1: PlugIn, M2: PlugIn>(
    tests: &[TestSummary],
    methodology_1: &M1,
    methodology_2: &M2,
    measure: PerformanceMeasure,
    settings: &EvalSettings,
    denom_tolerance: f64,
) -> Result<ComparisonReport> {
    if tests.len() < 2 {
        return Err(Error::InsufficientTests(tests.len()));
    }
    let panels = score_panels(
        tests,
        &[methodology_1 as &dyn PlugIn, methodology_2 as &dyn PlugIn],
        measure,
        settings,
    )?;
    let report_1 = report_from_panel(&panels[0], settings.level)?;
    let report_2 = report_from_panel(&panels[1], settings.level)?;
    let relative = relative_difference(report_1.theta_hat, report_2.theta_hat, denom_tolerance)?;
    Ok(ComparisonReport {
        theta_hat_1: report_1.theta_hat,
        theta_hat_2: report_2.theta_hat,
        relative_difference: relative,
        report_1,
        report_2,
    })
}
