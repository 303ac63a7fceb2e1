//! Simulated experimentation environment: data generation, replication loops,
//! and sweeps over the split fraction and the test/partition counts.
//!
//! Data generating process for test `i`:
//!
//! ```text
//! delta_i     ~ N(0, sigma_sq)
//! eps_i       ~ chi-square(1)                (heteroskedastic mode only)
//! tau_i^2     = tau_sq + eps_i               (tau_sq in homoskedastic mode)
//! delta_hat_i ~ N(delta_i, tau_i^2)
//! ```
//!
//! Replication `r` draws its dataset and split data from streams keyed by
//! `(seed, r, test, partition)`. Sweeps reuse the same keys across cells, so
//! neighbouring cells share their random numbers.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{compare, EvalSettings, SamplerKind, DEFAULT_LEVEL};
use crate::methodology::PlugIn;
use crate::model::{check_alpha, MethodologySpec, PerformanceMeasure, SplitConfig, TestSummary};
use crate::oracle::{self, PairEstimand, PriorModel};
use crate::rng::TestStreams;

/// Precision requested from the numeric oracle for reference estimands.
pub const ORACLE_PRECISION: f64 = 1e-10;
pub const DEFAULT_COVERAGE_REPLICATIONS: usize = 1000;
pub const DEFAULT_SWEEP_REPLICATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    pub sigma_sq: f64,
    pub tau_sq: f64,
    pub heteroskedastic: bool,
    pub num_tests: usize,
}

impl DgpParams {
    /// sigma_sq = 1, tau_sq = 2, heteroskedastic, 5000 tests.
    pub fn benchmark() -> Self {
        DgpParams {
            sigma_sq: 1.0,
            tau_sq: 2.0,
            heteroskedastic: true,
            num_tests: 5000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_sq >= 0.0 && self.sigma_sq.is_finite()) {
            return Err(Error::NonPositiveVariance {
                what: "sigma_sq",
                value: self.sigma_sq,
            });
        }
        let tau_ok = if self.heteroskedastic {
            self.tau_sq >= 0.0 && self.tau_sq.is_finite()
        } else {
            self.tau_sq > 0.0 && self.tau_sq.is_finite()
        };
        if !tau_ok {
            return Err(Error::NonPositiveVariance {
                what: "tau_sq",
                value: self.tau_sq,
            });
        }
        if self.num_tests < 2 {
            return Err(Error::InsufficientTests(self.num_tests));
        }
        Ok(())
    }

    pub fn prior(&self) -> PriorModel {
        PriorModel {
            sigma_sq: self.sigma_sq,
            tau_sq_base: self.tau_sq,
            heteroskedastic: self.heteroskedastic,
        }
    }
}

/// Simulates one dataset of test summaries with their true impacts.
pub fn generate_dataset(params: &DgpParams, seed: u64, replication: u64) -> Result<Vec<TestSummary>> {
    params.validate()?;
    let sigma = params.sigma_sq.sqrt();
    Ok((0..params.num_tests)
        .map(|i| {
            let mut rng = TestStreams::new(seed, replication, i as u64).dataset();
            let delta = sigma * rng.sample::<f64, _>(StandardNormal);
            let noise: f64 = rng.sample(StandardNormal);
            let tau_sq = if params.heteroskedastic {
                params.tau_sq + noise * noise
            } else {
                params.tau_sq
            };
            let delta_hat = delta + tau_sq.sqrt() * rng.sample::<f64, _>(StandardNormal);
            TestSummary {
                test_id: format!("sim-{i}"),
                delta_hat,
                tau_sq,
                true_delta: Some(delta),
            }
        })
        .collect())
}

/// Full description of a simulation experiment comparing two methodologies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub dgp: DgpParams,
    pub split: SplitConfig,
    pub methodology_1: MethodologySpec,
    pub methodology_2: MethodologySpec,
    pub measure: PerformanceMeasure,
    pub sampler: SamplerKind,
    pub level: f64,
    pub num_replications: usize,
}

impl SimulationSpec {
    pub fn new(
        dgp: DgpParams,
        split: SplitConfig,
        methodology_1: MethodologySpec,
        methodology_2: MethodologySpec,
        measure: PerformanceMeasure,
        num_replications: usize,
    ) -> Self {
        SimulationSpec {
            dgp,
            split,
            methodology_1,
            methodology_2,
            measure,
            sampler: SamplerKind::Plugin,
            level: DEFAULT_LEVEL,
            num_replications,
        }
    }

    /// Unbiased vs Bayes estimator under squared error, with the prior variance
    /// of `dgp` given to the Bayes estimator.
    pub fn estimator_pair(dgp: DgpParams, split: SplitConfig, num_replications: usize) -> Self {
        Self::new(
            dgp,
            split,
            MethodologySpec::Identity,
            MethodologySpec::BayesShrinkage {
                sigma_sq: dgp.sigma_sq,
            },
            PerformanceMeasure::SquaredError,
            num_replications,
        )
    }

    /// 5% threshold rule vs Bayes sign rule under launch-only decision value.
    pub fn decision_pair(dgp: DgpParams, split: SplitConfig, num_replications: usize) -> Self {
        Self::new(
            dgp,
            split,
            MethodologySpec::significance_rule(),
            MethodologySpec::BayesSignRule {
                sigma_sq: dgp.sigma_sq,
            },
            PerformanceMeasure::LaunchOnlyDecisionValue,
            num_replications,
        )
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.split.alpha = alpha;
        self
    }

    pub fn with_size(mut self, num_tests: usize, num_partitions: usize) -> Self {
        self.dgp.num_tests = num_tests;
        self.split.num_partitions = num_partitions;
        self
    }

    pub fn with_replications(mut self, num_replications: usize) -> Self {
        self.num_replications = num_replications;
        self
    }

    fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        crate::model::validate_run_config(self.split, self.methodology_1, self.measure)?;
        crate::model::validate_run_config(self.split, self.methodology_2, self.measure)?;
        if self.num_replications < 2 {
            return Err(Error::InvalidSize(format!(
                "need at least 2 replications, got {}",
                self.num_replications
            )));
        }
        Ok(())
    }
}

/// Sample-split (`alpha = Some`) or ideal (`alpha = None`) estimands of a pair.
///
/// Closed forms are used in homoskedastic mode, the numeric oracle otherwise.
pub fn reference_estimand(spec: &SimulationSpec, alpha: Option<f64>) -> Result<PairEstimand> {
    if let Some(a) = alpha {
        check_alpha(a)?;
    }
    let dgp = &spec.dgp;
    if dgp.heteroskedastic {
        oracle::split_estimand_numeric(
            &spec.methodology_1 as &dyn PlugIn,
            &spec.methodology_2 as &dyn PlugIn,
            spec.measure,
            &dgp.prior(),
            alpha,
            ORACLE_PRECISION,
        )
    } else {
        let tau_sq_train = dgp.tau_sq / alpha.unwrap_or(1.0);
        let theta = |m: &MethodologySpec| {
            oracle::prior_average_estimand(m, spec.measure, dgp.sigma_sq, tau_sq_train)
        };
        Ok(PairEstimand::from_thetas(
            theta(&spec.methodology_1)?,
            theta(&spec.methodology_2)?,
        ))
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: u64,
    pub theta_hat_1: f64,
    pub theta_hat_2: f64,
    pub comparison: f64,
    pub ci_low_1: f64,
    pub ci_high_1: f64,
    pub ci_low_2: f64,
    pub ci_high_2: f64,
    pub covers_1: bool,
    pub covers_2: bool,
}

/// Replication outcomes and their summaries.
///
/// Coverage refers to each methodology's own interval for its sample-split
/// average performance; the relative difference carries no interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationMetrics {
    pub spec: SimulationSpec,
    pub split_estimand: PairEstimand,
    pub ideal_estimand: PairEstimand,
    pub mean_theta_1: f64,
    pub mean_theta_2: f64,
    pub mean_comparison: f64,
    /// Sample variance of the comparison estimate across replications.
    pub variance: f64,
    /// Standard error of `mean_comparison`.
    pub standard_error: f64,
    pub bias_vs_split: f64,
    pub bias_vs_ideal: f64,
    pub coverage_1: f64,
    pub coverage_2: f64,
    pub replications: Vec<ReplicationRecord>,
}

impl ReplicationMetrics {
    pub fn num_replications(&self) -> usize {
        self.replications.len()
    }

    /// Standard error of [`Self::variance`] under normality.
    pub fn variance_se(&self) -> f64 {
        self.variance * (2.0 / (self.num_replications() as f64 - 1.0)).sqrt()
    }
}

fn run_one(spec: &SimulationSpec, replication: u64, refs: &PairEstimand) -> Result<ReplicationRecord> {
    let tests = generate_dataset(&spec.dgp, spec.split.master_seed, replication)?;
    let settings = EvalSettings::new(spec.split)
        .with_sampler(spec.sampler)
        .with_level(spec.level)
        .with_replication(replication);
    let report = compare(
        &tests,
        &spec.methodology_1,
        &spec.methodology_2,
        spec.measure,
        &settings,
    )?;
    Ok(ReplicationRecord {
        replication,
        theta_hat_1: report.theta_hat_1,
        theta_hat_2: report.theta_hat_2,
        comparison: report.relative_difference,
        ci_low_1: report.report_1.ci_low,
        ci_high_1: report.report_1.ci_high,
        ci_low_2: report.report_2.ci_low,
        ci_high_2: report.report_2.ci_high,
        covers_1: report.report_1.covers(refs.theta_1),
        covers_2: report.report_2.covers(refs.theta_2),
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut sum = 0.0;
    for x in xs {
        sum += x;
        n += 1;
    }
    sum / n as f64
}

/// Runs `num_replications` independent datasets through [`compare`].
pub fn run_replications(spec: &SimulationSpec) -> Result<ReplicationMetrics> {
    spec.validate()?;
    let split_estimand = reference_estimand(spec, Some(spec.split.alpha))?;
    let ideal_estimand = reference_estimand(spec, None)?;
    run_with_references(spec, split_estimand, ideal_estimand)
}

fn run_with_references(
    spec: &SimulationSpec,
    split_estimand: PairEstimand,
    ideal_estimand: PairEstimand,
) -> Result<ReplicationMetrics> {
    let replications: Vec<ReplicationRecord> = (0..spec.num_replications as u64)
        .into_par_iter()
        .map(|r| run_one(spec, r, &split_estimand))
        .collect::<Result<_>>()?;

    let r = replications.len() as f64;
    let mean_comparison = mean(replications.iter().map(|x| x.comparison));
    let variance = replications
        .iter()
        .map(|x| (x.comparison - mean_comparison).powi(2))
        .sum::<f64>()
        / (r - 1.0);
    let rate = |f: fn(&ReplicationRecord) -> bool| {
        replications.iter().filter(|x| f(x)).count() as f64 / r
    };
    Ok(ReplicationMetrics {
        spec: *spec,
        split_estimand,
        ideal_estimand,
        mean_theta_1: mean(replications.iter().map(|x| x.theta_hat_1)),
        mean_theta_2: mean(replications.iter().map(|x| x.theta_hat_2)),
        mean_comparison,
        variance,
        standard_error: (variance / r).sqrt(),
        bias_vs_split: mean_comparison - split_estimand.relative_difference,
        bias_vs_ideal: mean_comparison - ideal_estimand.relative_difference,
        coverage_1: rate(|x| x.covers_1),
        coverage_2: rate(|x| x.covers_2),
        replications,
    })
}

/// One cell of an alpha sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepRow {
    pub alpha: f64,
    pub bias_sq_vs_ideal: f64,
    pub variance: f64,
    pub mse: f64,
    pub bias_sq_se: f64,
    pub variance_se: f64,
    pub mean_comparison: f64,
    pub split_estimand: f64,
    pub ideal_estimand: f64,
}

/// Squared bias against the ideal estimand, variance and MSE of the
/// comparison estimator over a grid of split fractions.
pub fn sweep_alpha(base: &SimulationSpec, alpha_grid: &[f64]) -> Result<Vec<AlphaSweepRow>> {
    if alpha_grid.is_empty() {
        return Err(Error::EmptyInput("alpha grid"));
    }
    for &a in alpha_grid {
        check_alpha(a)?;
    }
    let ideal = reference_estimand(base, None)?;
    alpha_grid
        .iter()
        .map(|&alpha| {
            let spec = base.with_alpha(alpha);
            spec.validate()?;
            let split = reference_estimand(&spec, Some(alpha))?;
            let m = run_with_references(&spec, split, ideal)?;
            let bias_sq = m.bias_vs_ideal * m.bias_vs_ideal;
            Ok(AlphaSweepRow {
                alpha,
                bias_sq_vs_ideal: bias_sq,
                variance: m.variance,
                mse: bias_sq + m.variance,
                bias_sq_se: 2.0 * m.bias_vs_ideal.abs() * m.standard_error,
                variance_se: m.variance_se(),
                mean_comparison: m.mean_comparison,
                split_estimand: split.relative_difference,
                ideal_estimand: ideal.relative_difference,
            })
        })
        .collect()
}

/// One cell of a size sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeSweepRow {
    pub num_tests: usize,
    pub num_partitions: usize,
    pub variance: f64,
    pub variance_se: f64,
    pub mean_comparison: f64,
}

/// Variance of the comparison estimator over a grid of test and partition counts.
pub fn sweep_size(
    base: &SimulationSpec,
    tests_grid: &[usize],
    partitions_grid: &[usize],
) -> Result<Vec<SizeSweepRow>> {
    if tests_grid.is_empty() || partitions_grid.is_empty() {
        return Err(Error::EmptyInput("size grid"));
    }
    let split = reference_estimand(base, Some(base.split.alpha))?;
    let ideal = reference_estimand(base, None)?;
    let mut rows = Vec::with_capacity(tests_grid.len() * partitions_grid.len());
    for &num_tests in tests_grid {
        for &num_partitions in partitions_grid {
            let spec = base.with_size(num_tests, num_partitions);
            spec.validate()?;
            let m = run_with_references(&spec, split, ideal)?;
            rows.push(SizeSweepRow {
                num_tests,
                num_partitions,
                variance: m.variance,
                variance_se: m.variance_se(),
                mean_comparison: m.mean_comparison,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `ln(y)` on `ln(x)`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(heteroskedastic: bool) -> DgpParams {
        DgpParams {
            sigma_sq: 1.0,
            tau_sq: 2.0,
            heteroskedastic,
            num_tests: 200,
        }
    }

    #[test]
    fn degenerate_prior_gives_zero_impacts() {
        let params = DgpParams {
            sigma_sq: 0.0,
            ..small(true)
        };
        let tests = generate_dataset(&params, 1, 0).unwrap();
        assert!(tests.iter().all(|t| t.true_delta == Some(0.0)));
    }

    #[test]
    fn heteroskedastic_variance_mean() {
        let params = DgpParams {
            num_tests: 100_000,
            ..small(true)
        };
        let tests = generate_dataset(&params, 5, 0).unwrap();
        let n = tests.len() as f64;
        let m = tests.iter().map(|t| t.tau_sq).sum::<f64>() / n;
        // Var(chi-square(1)) = 2
        assert!((m - 3.0).abs() < 3.0 * (2.0 / n).sqrt(), "{m}");
        assert!(tests.iter().all(|t| t.tau_sq >= 2.0));
    }

    #[test]
    fn dataset_is_deterministic() {
        let a = generate_dataset(&small(true), 9, 3).unwrap();
        let b = generate_dataset(&small(true), 9, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_dataset(&small(true), 9, 4).unwrap());
    }

    #[test]
    fn homoskedastic_dataset_has_common_variance() {
        let tests = generate_dataset(&small(false), 9, 0).unwrap();
        assert!(tests.iter().all(|t| t.tau_sq == 2.0));
    }

    #[test]
    fn identical_methodologies_have_zero_variance() {
        let split = SplitConfig::new(0.5, 5, 2).unwrap();
        let mut spec = SimulationSpec::estimator_pair(small(false), split, 10);
        spec.methodology_2 = spec.methodology_1;
        let m = run_replications(&spec).unwrap();
        assert_eq!(m.variance, 0.0);
        assert_eq!(m.mean_comparison, 0.0);
    }

    #[test]
    fn reference_estimands_homoskedastic() {
        let split = SplitConfig::new(0.5, 5, 2).unwrap();
        let dgp = DgpParams {
            sigma_sq: 1.0,
            tau_sq: 1.0,
            heteroskedastic: false,
            num_tests: 10,
        };
        let spec = SimulationSpec::estimator_pair(dgp, split, 10);
        let r = reference_estimand(&spec, Some(0.5)).unwrap();
        assert!((r.relative_difference + 2.0 / 3.0).abs() < 1e-14);
        let r = reference_estimand(&spec, None).unwrap();
        assert!((r.relative_difference + 0.5).abs() < 1e-14);
    }

    #[test]
    fn single_alpha_sweep_matches_run() {
        let split = SplitConfig::new(0.5, 4, 8).unwrap();
        let spec = SimulationSpec::estimator_pair(small(false), split, 6);
        let rows = sweep_alpha(&spec, &[0.5]).unwrap();
        let m = run_replications(&spec).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].variance, m.variance);
        assert_eq!(rows[0].bias_sq_vs_ideal, m.bias_vs_ideal.powi(2));
        let size = sweep_size(&spec, &[200], &[4]).unwrap();
        assert_eq!(size[0].variance, m.variance);
    }

    #[test]
    fn sweeps_reject_bad_grids() {
        let split = SplitConfig::new(0.5, 4, 8).unwrap();
        let spec = SimulationSpec::estimator_pair(small(false), split, 6);
        assert!(sweep_alpha(&spec, &[]).is_err());
        assert!(matches!(
            sweep_alpha(&spec, &[0.5, 1.0]),
            Err(Error::AlphaOutOfRange(_))
        ));
        assert!(sweep_size(&spec, &[], &[3]).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let pts = [(500.0, 2.0 / 500.0), (2000.0, 2.0 / 2000.0), (8000.0, 2.0 / 8000.0)];
        assert!((log_log_slope(&pts) + 1.0).abs() < 1e-12);
    }
}
