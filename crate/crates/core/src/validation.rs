//! Moment checks of the two split samplers against the conditional split law.
//!
//! Each check compares a Monte Carlo moment with its exact value and passes
//! when they differ by at most `tolerance_se` standard errors. Standard errors
//! use sample fourth moments, so they do not assume normality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_alpha, TestSummary};
use crate::rng::{Domain, StreamRng};
use crate::sampler::{conditional_law, draw_split_pair, ConditionalSplitLaw};
use crate::unit_sim::{simulate_units, Partitioner};

pub const DEFAULT_TOLERANCE_SE: f64 = 3.0;
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationSettings {
    pub delta_hat: f64,
    pub tau_sq: f64,
    pub draws: usize,
    pub n_per_arm: usize,
    pub seed: u64,
    pub tolerance_se: f64,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        ValidationSettings {
            delta_hat: 0.0,
            tau_sq: 1.0,
            draws: 100_000,
            n_per_arm: 10_000,
            seed: 0,
            tolerance_se: DEFAULT_TOLERANCE_SE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerUnderTest {
    Plugin,
    UnitLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub sampler: SamplerUnderTest,
    pub alpha: f64,
    pub statistic: String,
    pub observed: f64,
    pub expected: f64,
    pub standard_error: f64,
    pub passed: bool,
}

impl MomentCheck {
    pub fn z_score(&self) -> f64 {
        (self.observed - self.expected) / self.standard_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<MomentCheck>,
    /// Largest `|alpha * a + (1 - alpha) * b - delta_hat|` over plug-in draws.
    pub max_reconstruction_error: f64,
    pub reconstruction_passed: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.reconstruction_passed && self.checks.iter().all(|c| c.passed)
    }
}

/// Sample moments of paired draws with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoments {
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub cov_ab: f64,
    pub se_mean_a: f64,
    pub se_mean_b: f64,
    pub se_var_a: f64,
    pub se_var_b: f64,
    pub se_cov_ab: f64,
}

impl PairMoments {
    pub fn from_draws(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::InvalidSize(format!(
                "paired draws differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let n = a.len();
        if n < 2 {
            return Err(Error::InvalidSize(format!("need at least 2 draws, got {n}")));
        }
        let nf = n as f64;
        let mean_a = a.iter().sum::<f64>() / nf;
        let mean_b = b.iter().sum::<f64>() / nf;
        let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
        let (mut qa, mut qb, mut qab) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            let (da, db) = (x - mean_a, y - mean_b);
            saa += da * da;
            sbb += db * db;
            sab += da * db;
            qa += (da * da).powi(2);
            qb += (db * db).powi(2);
            qab += (da * db).powi(2);
        }
        let var_a = saa / nf;
        let var_b = sbb / nf;
        let cov_ab = sab / nf;
        // Var of a squared or cross deviation, estimated from fourth moments.
        let se = |fourth: f64, second: f64| ((fourth / nf - second * second).max(0.0) / nf).sqrt();
        Ok(PairMoments {
            n,
            mean_a,
            mean_b,
            var_a,
            var_b,
            cov_ab,
            se_mean_a: (var_a / nf).sqrt(),
            se_mean_b: (var_b / nf).sqrt(),
            se_var_a: se(qa, var_a),
            se_var_b: se(qb, var_b),
            se_cov_ab: se(qab, cov_ab),
        })
    }

    fn checks(
        &self,
        sampler: SamplerUnderTest,
        alpha: f64,
        law: &ConditionalSplitLaw,
        tolerance_se: f64,
    ) -> Vec<MomentCheck> {
        [
            ("mean_a", self.mean_a, law.mean_a, self.se_mean_a),
            ("mean_b", self.mean_b, law.mean_b, self.se_mean_b),
            ("var_a", self.var_a, law.var_a, self.se_var_a),
            ("var_b", self.var_b, law.var_b, self.se_var_b),
            ("cov_ab", self.cov_ab, law.cov_ab, self.se_cov_ab),
        ]
        .into_iter()
        .map(|(name, observed, expected, se)| MomentCheck {
            sampler,
            alpha,
            statistic: name.to_string(),
            observed,
            expected,
            standard_error: se,
            passed: (observed - expected).abs() <= tolerance_se * se,
        })
        .collect()
    }
}

fn validate_settings(settings: &ValidationSettings) -> Result<()> {
    if settings.draws < 2 {
        return Err(Error::InvalidSize(format!(
            "need at least 2 draws, got {}",
            settings.draws
        )));
    }
    if !(settings.tolerance_se > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {}",
            settings.tolerance_se
        )));
    }
    Ok(())
}

/// Draws from the plug-in sampler and checks its moments.
///
/// Returns the moment checks and the largest reconstruction error.
pub fn check_plugin(settings: &ValidationSettings, alpha: f64) -> Result<(Vec<MomentCheck>, f64)> {
    validate_settings(settings)?;
    check_alpha(alpha)?;
    let test = TestSummary::new("validation", settings.delta_hat, settings.tau_sq)?;
    let law = conditional_law(&test, alpha)?;
    let mut rng = StreamRng::new(settings.seed, Domain::Validation, &[0, alpha.to_bits()]);
    let mut a = Vec::with_capacity(settings.draws);
    let mut b = Vec::with_capacity(settings.draws);
    let mut max_err: f64 = 0.0;
    for s in 1..=settings.draws {
        let pair = draw_split_pair(&test, alpha, s, &mut rng)?;
        let rebuilt = alpha * pair.delta_hat_a + (1.0 - alpha) * pair.delta_hat_b;
        max_err = max_err.max((rebuilt - test.delta_hat).abs());
        a.push(pair.delta_hat_a);
        b.push(pair.delta_hat_b);
    }
    let moments = PairMoments::from_draws(&a, &b)?;
    Ok((
        moments.checks(SamplerUnderTest::Plugin, alpha, &law, settings.tolerance_se),
        max_err,
    ))
}

/// Repartitions one synthetic panel and checks the split-estimate moments.
///
/// The panel's own difference in means plays the role of the full-sample
/// estimate in the reference law.
pub fn check_unit_level(settings: &ValidationSettings, alpha: f64) -> Result<Vec<MomentCheck>> {
    validate_settings(settings)?;
    check_alpha(alpha)?;
    let mut panel_rng = StreamRng::new(settings.seed, Domain::Validation, &[1]);
    let panel = simulate_units(
        settings.delta_hat,
        settings.tau_sq,
        settings.n_per_arm,
        &mut panel_rng,
    )?;
    let test = TestSummary::new("validation", panel.difference_in_means(), settings.tau_sq)?;
    let law = conditional_law(&test, alpha)?;
    let mut partitioner = Partitioner::new(&panel, alpha, settings.tau_sq)?;
    let mut rng = StreamRng::new(settings.seed, Domain::Validation, &[2, alpha.to_bits()]);
    let mut a = Vec::with_capacity(settings.draws);
    let mut b = Vec::with_capacity(settings.draws);
    for s in 1..=settings.draws {
        let pair = partitioner.next_pair(s, &mut rng);
        a.push(pair.delta_hat_a);
        b.push(pair.delta_hat_b);
    }
    let moments = PairMoments::from_draws(&a, &b)?;
    Ok(moments.checks(SamplerUnderTest::UnitLevel, alpha, &law, settings.tolerance_se))
}

/// Runs both samplers over `alphas`. Unit-level checks are skipped when
/// `unit_draws` is zero.
pub fn validate_samplers(
    settings: &ValidationSettings,
    alphas: &[f64],
    unit_draws: usize,
) -> Result<ValidationReport> {
    if alphas.is_empty() {
        return Err(Error::EmptyInput("alpha grid"));
    }
    let mut checks = Vec::new();
    let mut max_err: f64 = 0.0;
    for &alpha in alphas {
        let (c, err) = check_plugin(settings, alpha)?;
        checks.extend(c);
        max_err = max_err.max(err);
    }
    if unit_draws > 0 {
        let unit = ValidationSettings {
            draws: unit_draws,
            ..*settings
        };
        for &alpha in alphas {
            checks.extend(check_unit_level(&unit, alpha)?);
        }
    }
    let scale = settings.delta_hat.abs().max(1.0);
    Ok(ValidationReport {
        checks,
        max_reconstruction_error: max_err,
        reconstruction_passed: max_err <= RECONSTRUCTION_TOLERANCE * scale,
    })
}
