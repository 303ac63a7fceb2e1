//! Shared domain types: test summaries, split configuration, split pairs,
//! methodology specifications and performance measures.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::normal;

/// One A/B test: full-sample impact estimate and its known sampling variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub test_id: String,
    pub delta_hat: f64,
    pub tau_sq: f64,
    /// Ground-truth impact; only known for simulated tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_delta: Option<f64>,
}

impl TestSummary {
    pub fn new(test_id: impl Into<String>, delta_hat: f64, tau_sq: f64) -> Result<Self> {
        let summary = TestSummary {
            test_id: test_id.into(),
            delta_hat,
            tau_sq,
            true_delta: None,
        };
        summary.validate()?;
        Ok(summary)
    }

    pub fn with_true_delta(mut self, true_delta: f64) -> Self {
        self.true_delta = Some(true_delta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_variance("tau_sq", self.tau_sq)?;
        if !self.delta_hat.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "delta_hat of test `{}` is not finite",
                self.test_id
            )));
        }
        Ok(())
    }
}

/// Split fraction, number of partitions and the master seed for split draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Fraction of units assigned to the training split `a`.
    pub alpha: f64,
    pub num_partitions: usize,
    pub master_seed: u64,
}

impl SplitConfig {
    pub fn new(alpha: f64, num_partitions: usize, master_seed: u64) -> Result<Self> {
        let config = SplitConfig {
            alpha,
            num_partitions,
            master_seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.num_partitions == 0 {
            return Err(Error::InvalidSize(
                "number of partitions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Training/evaluation estimates from one random partition of a test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPair {
    /// 1-based partition index `s`.
    pub partition_index: usize,
    pub delta_hat_a: f64,
    pub tau_sq_a: f64,
    pub delta_hat_b: f64,
    pub tau_sq_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputClass {
    Estimate,
    Decision,
}

impl fmt::Display for OutputClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputClass::Estimate => "estimate",
            OutputClass::Decision => "decision",
        })
    }
}

/// A built-in plug-in methodology: a deterministic map from `(delta_hat, tau_sq)`
/// to an estimate or a launch decision.
///
/// Textual form (used by the CLI and in reports):
///
/// | form                    | output                                  |
/// |-------------------------|-----------------------------------------|
/// | `identity`              | `delta_hat`                             |
/// | `shrink:w=W`            | `W * delta_hat`                         |
/// | `bayes:sigma_sq=S`      | `S / (S + tau_sq) * delta_hat`          |
/// | `threshold:c=C`         | `1(delta_hat > sqrt(tau_sq) * C)`       |
/// | `bayes-sign:sigma_sq=S` | `1(S / (S + tau_sq) * delta_hat > 0)`   |
///
/// `threshold` without a parameter uses the two-sided 5% critical value.
/// Custom methodologies implement [`crate::methodology::PlugIn`] instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodologySpec {
    Identity,
    FixedShrinkage { weight: f64 },
    BayesShrinkage { sigma_sq: f64 },
    ThresholdRule { c: f64 },
    BayesSignRule { sigma_sq: f64 },
}

impl MethodologySpec {
    /// Frequentist launch rule at the 5% level: `1(delta_hat > tau * z_0.975)`.
    pub fn significance_rule() -> Self {
        MethodologySpec::ThresholdRule {
            c: normal::quantile(0.975),
        }
    }

    pub fn output_class(&self) -> OutputClass {
        match self {
            MethodologySpec::Identity
            | MethodologySpec::FixedShrinkage { .. }
            | MethodologySpec::BayesShrinkage { .. } => OutputClass::Estimate,
            MethodologySpec::ThresholdRule { .. } | MethodologySpec::BayesSignRule { .. } => {
                OutputClass::Decision
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MethodologySpec::Identity => Ok(()),
            MethodologySpec::FixedShrinkage { weight } => {
                if weight > 0.0 && weight <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "shrinkage weight must lie in (0, 1], got {weight}"
                    )))
                }
            }
            MethodologySpec::BayesShrinkage { sigma_sq }
            | MethodologySpec::BayesSignRule { sigma_sq } => check_variance("sigma_sq", sigma_sq),
            MethodologySpec::ThresholdRule { c } => {
                if c >= 0.0 && c.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "launch threshold must be finite and non-negative, got {c}"
                    )))
                }
            }
        }
    }
}

impl fmt::Display for MethodologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodologySpec::Identity => f.write_str("identity"),
            MethodologySpec::FixedShrinkage { weight } => write!(f, "shrink:w={weight}"),
            MethodologySpec::BayesShrinkage { sigma_sq } => write!(f, "bayes:sigma_sq={sigma_sq}"),
            MethodologySpec::ThresholdRule { c } => write!(f, "threshold:c={c}"),
            MethodologySpec::BayesSignRule { sigma_sq } => {
                write!(f, "bayes-sign:sigma_sq={sigma_sq}")
            }
        }
    }
}

impl FromStr for MethodologySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, params) = match s.split_once(':') {
            Some((kind, params)) => (kind.trim(), Some(params.trim())),
            None => (s, None),
        };
        let param = |name: &str| -> Result<f64> {
            let params = params.ok_or_else(|| {
                Error::InvalidParameter(format!("methodology `{kind}` requires `{name}=<value>`"))
            })?;
            let value = match params.split_once('=') {
                Some((key, value)) if key.trim() == name => value.trim(),
                Some((key, _)) => {
                    return Err(Error::InvalidParameter(format!(
                        "methodology `{kind}` has no parameter `{}`",
                        key.trim()
                    )))
                }
                // Bare value, e.g. `shrink:0.5`.
                None => params,
            };
            value.parse::<f64>().map_err(|_| {
                Error::InvalidParameter(format!("cannot parse `{value}` as a number for `{name}`"))
            })
        };
        let spec = match kind.to_ascii_lowercase().replace('_', "-").as_str() {
            "identity" | "unbiased" => {
                if params.is_some() {
                    return Err(Error::InvalidParameter(
                        "methodology `identity` takes no parameters".into(),
                    ));
                }
                MethodologySpec::Identity
            }
            "shrink" | "fixed-shrinkage" => MethodologySpec::FixedShrinkage {
                weight: param("w")?,
            },
            "bayes" | "bayes-shrinkage" => MethodologySpec::BayesShrinkage {
                sigma_sq: param("sigma_sq")?,
            },
            "threshold" | "threshold-rule" => match params {
                None => MethodologySpec::significance_rule(),
                Some(_) => MethodologySpec::ThresholdRule { c: param("c")? },
            },
            "bayes-sign" | "bayes-sign-rule" => MethodologySpec::BayesSignRule {
                sigma_sq: param("sigma_sq")?,
            },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown methodology `{other}`"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl Serialize for MethodologySpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodologySpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Performance function scored per test and partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerformanceMeasure {
    Bias,
    SquaredError,
    DecisionValue,
    #[serde(rename = "launch-only")]
    LaunchOnlyDecisionValue,
}

impl PerformanceMeasure {
    pub fn output_class(&self) -> OutputClass {
        match self {
            PerformanceMeasure::Bias | PerformanceMeasure::SquaredError => OutputClass::Estimate,
            PerformanceMeasure::DecisionValue | PerformanceMeasure::LaunchOnlyDecisionValue => {
                OutputClass::Decision
            }
        }
    }

    pub fn check_compatible(&self, output_class: OutputClass) -> Result<()> {
        if self.output_class() == output_class {
            Ok(())
        } else {
            Err(Error::IncompatibleMeasure {
                measure: self.to_string(),
                output_class: output_class.to_string(),
            })
        }
    }
}

impl fmt::Display for PerformanceMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerformanceMeasure::Bias => "bias",
            PerformanceMeasure::SquaredError => "squared-error",
            PerformanceMeasure::DecisionValue => "decision-value",
            PerformanceMeasure::LaunchOnlyDecisionValue => "launch-only",
        })
    }
}

impl FromStr for PerformanceMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "bias" => Ok(PerformanceMeasure::Bias),
            "squared-error" | "mse" => Ok(PerformanceMeasure::SquaredError),
            "decision-value" => Ok(PerformanceMeasure::DecisionValue),
            "launch-only" | "launch-only-decision-value" => {
                Ok(PerformanceMeasure::LaunchOnlyDecisionValue)
            }
            other => Err(Error::InvalidParameter(format!(
                "unknown performance measure `{other}`"
            ))),
        }
    }
}

/// Checks that the split configuration, methodology and measure form a
/// runnable combination and returns them unchanged.
pub fn validate_run_config(
    config: SplitConfig,
    methodology: MethodologySpec,
    measure: PerformanceMeasure,
) -> Result<(SplitConfig, MethodologySpec, PerformanceMeasure)> {
    config.validate()?;
    methodology.validate()?;
    measure.check_compatible(methodology.output_class())?;
    Ok((config, methodology, measure))
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

pub(crate) fn check_variance(what: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveVariance { what, value })
    }
}
