//! Closed-form and numeric estimands for Gaussian priors on the true impacts.
//!
//! With `delta ~ N(0, sigma_sq)` and a common sampling variance `tau_sq`, the
//! relative MSE of the Bayes estimator against the unbiased estimator and the
//! relative launch-only value of the Bayes sign rule against the 5% threshold
//! rule have closed forms. Training on a fraction `alpha` of the data replaces
//! `tau_sq` by `tau_sq / alpha`.
//!
//! [`numeric_performance`] integrates the true performance function directly
//! (over training noise, the prior and, optionally, chi-square variance noise)
//! and serves as an independent check of the closed forms and as the reference
//! for heteroskedastic settings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methodology::PlugIn;
use crate::model::{check_alpha, check_variance, MethodologySpec, PerformanceMeasure};
use crate::normal;

/// Homoskedastic Gaussian-prior setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleInputs {
    pub sigma_sq: f64,
    pub tau_sq: f64,
    pub alpha: Option<f64>,
    /// Critical value of the frequentist launch rule.
    pub launch_z: f64,
}

impl OracleInputs {
    pub fn new(sigma_sq: f64, tau_sq: f64) -> Self {
        OracleInputs {
            sigma_sq,
            tau_sq,
            alpha: None,
            launch_z: normal::quantile(0.975),
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    fn validate(&self) -> Result<()> {
        check_variance("sigma_sq", self.sigma_sq)?;
        check_variance("tau_sq", self.tau_sq)?;
        if !(self.launch_z.is_finite() && self.launch_z >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "launch_z must be finite and non-negative, got {}",
                self.launch_z
            )));
        }
        Ok(())
    }

    fn split_tau_sq(&self) -> Result<f64> {
        self.validate()?;
        let alpha = self
            .alpha
            .ok_or_else(|| Error::InvalidParameter("split estimand requires alpha".into()))?;
        check_alpha(alpha)?;
        Ok(self.tau_sq / alpha)
    }
}

fn mse_relative(sigma_sq: f64, tau_sq: f64) -> f64 {
    sigma_sq / (sigma_sq + tau_sq) - 1.0
}

fn launch_relative(sigma_sq: f64, tau_sq: f64, z: f64) -> f64 {
    // phi(0) / phi(x) - 1 = exp(x^2 / 2) - 1
    let x = tau_sq.sqrt() * z / (sigma_sq + tau_sq).sqrt();
    (0.5 * x * x).exp_m1()
}

/// Relative MSE change of the Bayes estimator vs the unbiased estimator, full sample.
pub fn ideal_mse_relative(inputs: &OracleInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(mse_relative(inputs.sigma_sq, inputs.tau_sq))
}

/// As [`ideal_mse_relative`] with the methodology trained on an `alpha` split.
pub fn split_mse_relative(inputs: &OracleInputs) -> Result<f64> {
    let t = inputs.split_tau_sq()?;
    Ok(mse_relative(inputs.sigma_sq, t))
}

/// Relative launch-only value of the Bayes sign rule vs the threshold rule, full sample.
pub fn ideal_launch_relative(inputs: &OracleInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(launch_relative(inputs.sigma_sq, inputs.tau_sq, inputs.launch_z))
}

/// As [`ideal_launch_relative`] with the rules trained on an `alpha` split.
pub fn split_launch_relative(inputs: &OracleInputs) -> Result<f64> {
    let t = inputs.split_tau_sq()?;
    Ok(launch_relative(inputs.sigma_sq, t, inputs.launch_z))
}

/// Expected performance `Y_i` for a fixed true impact `delta`, when the
/// methodology sees an estimate with sampling variance `tau_sq_train`.
pub fn test_level_estimand(
    methodology: &MethodologySpec,
    measure: PerformanceMeasure,
    delta: f64,
    tau_sq_train: f64,
) -> Result<f64> {
    methodology.validate()?;
    measure.check_compatible(methodology.output_class())?;
    check_variance("tau_sq", tau_sq_train)?;
    let t = tau_sq_train;
    Ok(match (linear_weight(methodology, t), launch_cut(methodology, t)) {
        (Some(w), _) => match measure {
            PerformanceMeasure::Bias => (w - 1.0) * delta,
            _ => (w - 1.0).powi(2) * delta * delta + w * w * t,
        },
        (None, Some(cut)) => {
            let launch = normal::cdf((delta - cut) / t.sqrt());
            match measure {
                PerformanceMeasure::LaunchOnlyDecisionValue => delta * launch,
                _ => delta * (2.0 * launch - 1.0),
            }
        }
        (None, None) => unreachable!("every built-in methodology is linear or a cutoff rule"),
    })
}

/// Average performance `theta` under `delta ~ N(0, sigma_sq)`, for a
/// methodology seeing an estimate with sampling variance `tau_sq_train`.
pub fn prior_average_estimand(
    methodology: &MethodologySpec,
    measure: PerformanceMeasure,
    sigma_sq: f64,
    tau_sq_train: f64,
) -> Result<f64> {
    methodology.validate()?;
    measure.check_compatible(methodology.output_class())?;
    check_variance("tau_sq", tau_sq_train)?;
    if !(sigma_sq >= 0.0 && sigma_sq.is_finite()) {
        return Err(Error::NonPositiveVariance {
            what: "sigma_sq",
            value: sigma_sq,
        });
    }
    let t = tau_sq_train;
    Ok(match (linear_weight(methodology, t), launch_cut(methodology, t)) {
        (Some(w), _) => match measure {
            PerformanceMeasure::Bias => 0.0,
            _ => (w - 1.0).powi(2) * sigma_sq + w * w * t,
        },
        (None, Some(cut)) => {
            // E[delta * Phi((delta - cut)/sqrt(t))] by Stein's identity.
            let total = sigma_sq + t;
            let launch_only = sigma_sq / total.sqrt() * normal::pdf(cut / total.sqrt());
            match measure {
                PerformanceMeasure::LaunchOnlyDecisionValue => launch_only,
                _ => 2.0 * launch_only,
            }
        }
        (None, None) => unreachable!("every built-in methodology is linear or a cutoff rule"),
    })
}

fn linear_weight(methodology: &MethodologySpec, tau_sq: f64) -> Option<f64> {
    match *methodology {
        MethodologySpec::Identity => Some(1.0),
        MethodologySpec::FixedShrinkage { weight } => Some(weight),
        MethodologySpec::BayesShrinkage { sigma_sq } => Some(sigma_sq / (sigma_sq + tau_sq)),
        _ => None,
    }
}

fn launch_cut(methodology: &MethodologySpec, tau_sq: f64) -> Option<f64> {
    match *methodology {
        MethodologySpec::ThresholdRule { c } => Some(tau_sq.sqrt() * c),
        MethodologySpec::BayesSignRule { .. } => Some(0.0),
        _ => None,
    }
}

/// Distribution of true impacts and sampling variances for the numeric oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorModel {
    /// Variance of `delta ~ N(0, sigma_sq)`; zero means `delta = 0` for every test.
    pub sigma_sq: f64,
    pub tau_sq_base: f64,
    /// When set, `tau_i^2 = tau_sq_base + eps` with `eps ~ chi-square(1)`.
    pub heteroskedastic: bool,
}

impl PriorModel {
    fn validate(&self) -> Result<()> {
        if !(self.sigma_sq >= 0.0 && self.sigma_sq.is_finite()) {
            return Err(Error::NonPositiveVariance {
                what: "sigma_sq",
                value: self.sigma_sq,
            });
        }
        if self.heteroskedastic {
            if !(self.tau_sq_base >= 0.0 && self.tau_sq_base.is_finite()) {
                return Err(Error::NonPositiveVariance {
                    what: "tau_sq",
                    value: self.tau_sq_base,
                });
            }
            Ok(())
        } else {
            check_variance("tau_sq", self.tau_sq_base)
        }
    }
}

/// Estimands of a methodology pair and their relative difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEstimand {
    pub theta_1: f64,
    pub theta_2: f64,
    pub relative_difference: f64,
}

impl PairEstimand {
    pub fn from_thetas(theta_1: f64, theta_2: f64) -> Self {
        PairEstimand {
            theta_1,
            theta_2,
            relative_difference: (theta_2 - theta_1) / theta_1,
        }
    }
}

// 8-point Gauss-Legendre rule on [-1, 1].
const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Half-width of the truncated standard-normal domains (mass outside ~1.5e-23).
const NORMAL_SPAN: f64 = 10.0;
/// Upper limit of `|u|` where `eps = u^2` (chi-square mass above 64 is ~1.2e-15).
const CHI_SPAN: f64 = 8.0;
const START_PANELS: usize = 8;
const MAX_PANELS: usize = 64;

/// Quadrature nodes and weights for `[lo, hi]`, split at `breaks`, with
/// roughly `panels` equal panels overall.
fn rule(lo: f64, hi: f64, breaks: &[f64], panels: usize, nodes: &mut Vec<(f64, f64)>) {
    nodes.clear();
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| *b > lo && *b < hi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(lo);
    edges.extend(cuts);
    edges.push(hi);
    let span = hi - lo;
    for seg in edges.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let n = ((panels as f64 * (b - a) / span).ceil() as usize).max(1);
        let h = (b - a) / n as f64;
        for k in 0..n {
            let mid = a + (k as f64 + 0.5) * h;
            let half = 0.5 * h;
            for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
                nodes.push((mid - half * x, half * w));
                nodes.push((mid + half * x, half * w));
            }
        }
    }
}

fn true_performance(measure: PerformanceMeasure, kappa: f64, delta: f64) -> f64 {
    match measure {
        PerformanceMeasure::Bias => kappa - delta,
        PerformanceMeasure::SquaredError => (kappa - delta) * (kappa - delta),
        PerformanceMeasure::DecisionValue => kappa * delta - (1.0 - kappa) * delta,
        PerformanceMeasure::LaunchOnlyDecisionValue => kappa * delta,
    }
}

fn integrate_at(
    methodology: &dyn PlugIn,
    measure: PerformanceMeasure,
    prior: &PriorModel,
    alpha: Option<f64>,
    panels: usize,
) -> f64 {
    let mut u_nodes = Vec::new();
    let mut d_nodes = Vec::new();
    let mut z_nodes = Vec::new();
    if prior.heteroskedastic {
        rule(0.0, CHI_SPAN, &[], panels, &mut u_nodes);
        for node in u_nodes.iter_mut() {
            node.1 *= 2.0 * normal::pdf(node.0);
        }
    } else {
        u_nodes.push((0.0, 1.0));
    }
    let sigma = prior.sigma_sq.sqrt();
    if prior.sigma_sq > 0.0 {
        rule(-NORMAL_SPAN, NORMAL_SPAN, &[], panels, &mut d_nodes);
        for node in d_nodes.iter_mut() {
            node.1 *= normal::pdf(node.0);
            node.0 *= sigma;
        }
    } else {
        d_nodes.push((0.0, 1.0));
    }

    let mut total = 0.0;
    for &(u, wu) in &u_nodes {
        let tau_sq = prior.tau_sq_base + u * u;
        let tau_sq_train = match alpha {
            Some(a) => tau_sq / a,
            None => tau_sq,
        };
        let sd = tau_sq_train.sqrt();
        let jumps = methodology.discontinuities(tau_sq_train);
        let mut inner_total = 0.0;
        for &(delta, wd) in &d_nodes {
            let breaks: Vec<f64> = jumps.iter().map(|j| (j - delta) / sd).collect();
            rule(-NORMAL_SPAN, NORMAL_SPAN, &breaks, panels, &mut z_nodes);
            let mut inner = 0.0;
            for &(z, wz) in &z_nodes {
                let kappa = methodology.value(delta + sd * z, tau_sq_train);
                inner += wz * normal::pdf(z) * true_performance(measure, kappa, delta);
            }
            inner_total += wd * inner;
        }
        total += wu * inner_total;
    }
    total
}

/// Average performance `theta` by nested Gauss-Legendre quadrature.
///
/// `alpha = None` gives the full-sample (ideal) estimand. The rule is refined
/// by doubling until two successive values agree within `precision`.
pub fn numeric_performance(
    methodology: &dyn PlugIn,
    measure: PerformanceMeasure,
    prior: &PriorModel,
    alpha: Option<f64>,
    precision: f64,
) -> Result<f64> {
    prior.validate()?;
    measure.check_compatible(methodology.output_class())?;
    if let Some(a) = alpha {
        check_alpha(a)?;
    }
    if !(precision > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "precision must be positive, got {precision}"
        )));
    }
    let mut panels = START_PANELS;
    let mut previous = integrate_at(methodology, measure, prior, alpha, panels);
    let mut achieved = f64::INFINITY;
    while panels < MAX_PANELS {
        panels *= 2;
        let current = integrate_at(methodology, measure, prior, alpha, panels);
        achieved = (current - previous).abs();
        if achieved < precision {
            return Ok(current);
        }
        previous = current;
    }
    Err(Error::PrecisionUnreachable {
        requested: precision,
        achieved,
    })
}

/// Numeric estimands of a methodology pair and their relative difference.
pub fn split_estimand_numeric(
    methodology_1: &dyn PlugIn,
    methodology_2: &dyn PlugIn,
    measure: PerformanceMeasure,
    prior: &PriorModel,
    alpha: Option<f64>,
    precision: f64,
) -> Result<PairEstimand> {
    let theta_1 = numeric_performance(methodology_1, measure, prior, alpha, precision)?;
    let theta_2 = numeric_performance(methodology_2, measure, prior, alpha, precision)?;
    Ok(PairEstimand::from_thetas(theta_1, theta_2))
}
