//! Plug-in split sampler: draws `(delta_hat_a, delta_hat_b)` directly from
//! their joint normal law given the full-sample estimate, without unit data.
//!
//! Given `(delta_hat, tau_sq)` the pair is normal with both means equal to
//! `delta_hat`, variances `tau_sq/alpha - tau_sq` and `tau_sq/(1-alpha) - tau_sq`
//! and covariance `-tau_sq`. The covariance matrix is singular: the pair always
//! satisfies `alpha * a + (1 - alpha) * b = delta_hat`. We draw `a` from its
//! marginal and solve the constraint for `b`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{check_alpha, check_variance, SplitConfig, SplitPair, TestSummary};
use crate::rng::TestStreams;

/// Conditional law of the split estimates given the full-sample estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSplitLaw {
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub cov_ab: f64,
}

impl ConditionalSplitLaw {
    pub fn determinant(&self) -> f64 {
        self.var_a * self.var_b - self.cov_ab * self.cov_ab
    }

    pub fn correlation(&self) -> f64 {
        self.cov_ab / (self.var_a * self.var_b).sqrt()
    }
}

pub fn conditional_law(test: &TestSummary, alpha: f64) -> Result<ConditionalSplitLaw> {
    check_alpha(alpha)?;
    check_variance("tau_sq", test.tau_sq)?;
    let (tau_sq_a, tau_sq_b) = split_variances(test.tau_sq, alpha)?;
    Ok(ConditionalSplitLaw {
        mean_a: test.delta_hat,
        mean_b: test.delta_hat,
        var_a: tau_sq_a - test.tau_sq,
        var_b: tau_sq_b - test.tau_sq,
        cov_ab: -test.tau_sq,
    })
}

/// Sampling variances of the training and evaluation split estimates.
pub fn split_variances(tau_sq: f64, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    check_variance("tau_sq", tau_sq)?;
    Ok((tau_sq / alpha, tau_sq / (1.0 - alpha)))
}

/// Draws one split pair from `rng`.
pub fn draw_split_pair<R: Rng + ?Sized>(
    test: &TestSummary,
    alpha: f64,
    partition_index: usize,
    rng: &mut R,
) -> Result<SplitPair> {
    let (tau_sq_a, tau_sq_b) = split_variances(test.tau_sq, alpha)?;
    let sd_a = (test.tau_sq * (1.0 - alpha) / alpha).sqrt();
    let z: f64 = rng.sample(StandardNormal);
    let delta_hat_a = test.delta_hat + sd_a * z;
    let delta_hat_b = (test.delta_hat - alpha * delta_hat_a) / (1.0 - alpha);
    Ok(SplitPair {
        partition_index,
        delta_hat_a,
        tau_sq_a,
        delta_hat_b,
        tau_sq_b,
    })
}

/// Draws the `S` split pairs of one test, each partition from its own stream.
pub fn draw_split_pairs(
    test: &TestSummary,
    config: &SplitConfig,
    streams: &TestStreams,
) -> Result<Vec<SplitPair>> {
    config.validate()?;
    (1..=config.num_partitions)
        .map(|s| draw_split_pair(test, config.alpha, s, &mut streams.plugin_split(s)))
        .collect()
}
