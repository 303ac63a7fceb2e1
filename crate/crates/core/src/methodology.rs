//! Plug-in methodologies applied to training-split estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_variance, MethodologySpec, OutputClass};

/// Output of a methodology: an estimate, or a launch decision encoded as 1.0/0.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodologyOutput {
    pub value: f64,
    pub output_class: OutputClass,
}

/// A deterministic function of the sufficient statistics `(delta_hat, tau_sq)`.
///
/// This is the extension point for methodologies beyond the built-in
/// [`MethodologySpec`] kinds. Implementations must be pure: the evaluation
/// pipeline calls them concurrently and relies on identical inputs giving
/// identical outputs. Decision rules must return exactly 0.0 or 1.0.
pub trait PlugIn: Send + Sync {
    fn output_class(&self) -> OutputClass;

    fn value(&self, delta_hat: f64, tau_sq: f64) -> f64;

    /// Label used in reports.
    fn label(&self) -> String;

    /// Values of `delta_hat` where the output jumps, for the given `tau_sq`.
    /// Numeric integration splits its domain at these points.
    fn discontinuities(&self, _tau_sq: f64) -> Vec<f64> {
        Vec::new()
    }
}

impl PlugIn for MethodologySpec {
    fn output_class(&self) -> OutputClass {
        MethodologySpec::output_class(self)
    }

    #[inline]
    fn value(&self, delta_hat: f64, tau_sq: f64) -> f64 {
        match *self {
            MethodologySpec::Identity => delta_hat,
            MethodologySpec::FixedShrinkage { weight } => weight * delta_hat,
            MethodologySpec::BayesShrinkage { sigma_sq } => {
                sigma_sq / (sigma_sq + tau_sq) * delta_hat
            }
            // Strict inequality: no launch on ties.
            MethodologySpec::ThresholdRule { c } => indicator(delta_hat > tau_sq.sqrt() * c),
            MethodologySpec::BayesSignRule { sigma_sq } => {
                indicator(sigma_sq / (sigma_sq + tau_sq) * delta_hat > 0.0)
            }
        }
    }

    fn label(&self) -> String {
        self.to_string()
    }

    fn discontinuities(&self, tau_sq: f64) -> Vec<f64> {
        match *self {
            MethodologySpec::ThresholdRule { c } => vec![tau_sq.sqrt() * c],
            MethodologySpec::BayesSignRule { .. } => vec![0.0],
            _ => Vec::new(),
        }
    }
}

#[inline]
fn indicator(condition: bool) -> f64 {
    if condition {
        1.0
    } else {
        0.0
    }
}

/// Applies a methodology to one `(delta_hat, tau_sq)`.
pub fn apply<M: PlugIn + ?Sized>(
    methodology: &M,
    delta_hat: f64,
    tau_sq: f64,
) -> Result<MethodologyOutput> {
    check_variance("tau_sq", tau_sq)?;
    if !delta_hat.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "delta_hat must be finite, got {delta_hat}"
        )));
    }
    Ok(MethodologyOutput {
        value: methodology.value(delta_hat, tau_sq),
        output_class: methodology.output_class(),
    })
}
