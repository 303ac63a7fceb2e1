//! Unit-level sample splitting on synthetic data.
//!
//! A [`UnitPanel`] holds Gaussian unit outcomes for a balanced two-arm test.
//! Each partition assigns `round_half_even(alpha * n)` units of every arm to
//! the training split by simple random sampling; split estimates are
//! differences in means, and split variances are fixed from the parent
//! variance rather than re-estimated.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{check_alpha, check_variance, SplitConfig, SplitPair};
use crate::rng::TestStreams;
use crate::sampler::split_variances;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Treatment,
    Control,
}

impl Arm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::Treatment => "treatment",
            Arm::Control => "control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitRecord {
    pub unit_id: usize,
    pub arm: Arm,
    pub outcome: f64,
}

/// Outcomes of a balanced A/B test. Unit ids run over the treatment arm
/// first, then the control arm.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitPanel {
    pub parent_test_id: String,
    treatment: Vec<f64>,
    control: Vec<f64>,
}

impl UnitPanel {
    pub fn new(parent_test_id: impl Into<String>, treatment: Vec<f64>, control: Vec<f64>) -> Result<Self> {
        if treatment.len() != control.len() {
            return Err(Error::InvalidSize(format!(
                "unbalanced panel: {} treatment vs {} control units",
                treatment.len(),
                control.len()
            )));
        }
        if treatment.len() < 2 {
            return Err(Error::InvalidSize(format!(
                "need at least 2 units per arm, got {}",
                treatment.len()
            )));
        }
        if treatment.iter().chain(&control).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("unit outcomes must be finite".into()));
        }
        Ok(UnitPanel {
            parent_test_id: parent_test_id.into(),
            treatment,
            control,
        })
    }

    pub fn n_per_arm(&self) -> usize {
        self.treatment.len()
    }

    pub fn treatment(&self) -> &[f64] {
        &self.treatment
    }

    pub fn control(&self) -> &[f64] {
        &self.control
    }

    pub fn units(&self) -> impl Iterator<Item = UnitRecord> + '_ {
        let n = self.n_per_arm();
        let t = self.treatment.iter().enumerate().map(|(i, &outcome)| UnitRecord {
            unit_id: i,
            arm: Arm::Treatment,
            outcome,
        });
        let c = self.control.iter().enumerate().map(move |(i, &outcome)| UnitRecord {
            unit_id: n + i,
            arm: Arm::Control,
            outcome,
        });
        t.chain(c)
    }

    pub fn difference_in_means(&self) -> f64 {
        mean(&self.treatment) - mean(&self.control)
    }

    /// Shifts treatment outcomes so the full-sample difference in means equals `delta_hat`.
    pub fn recenter(&mut self, delta_hat: f64) {
        let shift = delta_hat - self.difference_in_means();
        for y in &mut self.treatment {
            *y += shift;
        }
    }

    /// Writes `unit_id,arm,outcome` rows. Debugging aid only.
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "unit_id,arm,outcome")?;
        for unit in self.units() {
            writeln!(out, "{},{},{}", unit.unit_id, unit.arm.as_str(), unit.outcome)?;
        }
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Simulates a balanced panel whose difference-in-means estimator has variance `tau_sq`.
///
/// Outcomes are normal with per-unit variance `v = tau_sq * n / 2`; the treatment
/// mean is shifted by `true_delta`. Within each arm the deviations from the arm
/// mean are then rescaled so the sample variance equals `v` exactly, which
/// leaves the arm means (and so the estimator's law) untouched and makes the
/// repartitioning variance match `tau_sq` without finite-sample noise.
pub fn simulate_units<R: Rng + ?Sized>(
    true_delta: f64,
    tau_sq: f64,
    n_per_arm: usize,
    rng: &mut R,
) -> Result<UnitPanel> {
    if n_per_arm < 2 {
        return Err(Error::InvalidSize(format!(
            "need at least 2 units per arm, got {n_per_arm}"
        )));
    }
    check_variance("tau_sq", tau_sq)?;
    let unit_var = tau_sq * n_per_arm as f64 / 2.0;
    let sd = unit_var.sqrt();
    let mut draw_arm = |shift: f64| -> Vec<f64> {
        let mut arm: Vec<f64> = (0..n_per_arm)
            .map(|_| shift + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        calibrate_variance(&mut arm, unit_var);
        arm
    };
    let treatment = draw_arm(true_delta);
    let control = draw_arm(0.0);
    UnitPanel::new("", treatment, control)
}

fn calibrate_variance(arm: &mut [f64], target: f64) {
    let m = mean(arm);
    let ss: f64 = arm.iter().map(|y| (y - m) * (y - m)).sum();
    let sample_var = ss / (arm.len() - 1) as f64;
    if sample_var > 0.0 {
        let scale = (target / sample_var).sqrt();
        for y in arm.iter_mut() {
            *y = m + (*y - m) * scale;
        }
    }
}

/// Number of units of an `n`-unit arm placed in the training split.
pub fn training_count(n: usize, alpha: f64) -> usize {
    (alpha * n as f64).round_ties_even() as usize
}

/// Unit membership of one partition, as indices into each arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelPartition {
    pub treatment_a: Vec<usize>,
    pub treatment_b: Vec<usize>,
    pub control_a: Vec<usize>,
    pub control_b: Vec<usize>,
}

/// Reusable repartitioning state for one panel.
#[derive(Debug)]
pub struct Partitioner<'p> {
    panel: &'p UnitPanel,
    alpha: f64,
    k: usize,
    tau_sq_a: f64,
    tau_sq_b: f64,
    total_treatment: f64,
    total_control: f64,
    perm_treatment: Vec<usize>,
    perm_control: Vec<usize>,
}

impl<'p> Partitioner<'p> {
    pub fn new(panel: &'p UnitPanel, alpha: f64, parent_tau_sq: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let (tau_sq_a, tau_sq_b) = split_variances(parent_tau_sq, alpha)?;
        let n = panel.n_per_arm();
        let k = training_count(n, alpha);
        if k == 0 {
            return Err(Error::EmptySplit {
                arm: "a",
                units: n,
                alpha,
            });
        }
        if k == n {
            return Err(Error::EmptySplit {
                arm: "b",
                units: n,
                alpha,
            });
        }
        Ok(Partitioner {
            panel,
            alpha,
            k,
            tau_sq_a,
            tau_sq_b,
            total_treatment: panel.treatment.iter().sum(),
            total_control: panel.control.iter().sum(),
            perm_treatment: (0..n).collect(),
            perm_control: (0..n).collect(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn training_count(&self) -> usize {
        self.k
    }

    fn shuffle<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.panel.n_per_arm();
        for perm in [&mut self.perm_treatment, &mut self.perm_control] {
            // Reset so each partition depends only on its own stream.
            for (i, p) in perm.iter_mut().enumerate() {
                *p = i;
            }
            for i in 0..self.k {
                let j = rng.random_range(i..n);
                perm.swap(i, j);
            }
        }
    }

    /// Draws a partition and returns the split estimates.
    pub fn next_pair<R: Rng + ?Sized>(&mut self, partition_index: usize, rng: &mut R) -> SplitPair {
        self.shuffle(rng);
        let n = self.panel.n_per_arm();
        let k = self.k;
        let sum_of = |arm: &[f64], idx: &[usize]| idx.iter().map(|&i| arm[i]).sum::<f64>();
        let t_a = sum_of(&self.panel.treatment, &self.perm_treatment[..k]);
        let c_a = sum_of(&self.panel.control, &self.perm_control[..k]);
        let t_b = self.total_treatment - t_a;
        let c_b = self.total_control - c_a;
        let (ka, kb) = (k as f64, (n - k) as f64);
        SplitPair {
            partition_index,
            delta_hat_a: t_a / ka - c_a / ka,
            tau_sq_a: self.tau_sq_a,
            delta_hat_b: t_b / kb - c_b / kb,
            tau_sq_b: self.tau_sq_b,
        }
    }

    /// Draws a partition and returns its unit membership.
    pub fn next_partition<R: Rng + ?Sized>(&mut self, rng: &mut R) -> PanelPartition {
        self.shuffle(rng);
        let k = self.k;
        let split = |perm: &[usize]| {
            let mut a = perm[..k].to_vec();
            let mut b = perm[k..].to_vec();
            a.sort_unstable();
            b.sort_unstable();
            (a, b)
        };
        let (treatment_a, treatment_b) = split(&self.perm_treatment);
        let (control_a, control_b) = split(&self.perm_control);
        PanelPartition {
            treatment_a,
            treatment_b,
            control_a,
            control_b,
        }
    }
}

/// Randomly partitions the panel once and re-estimates the split impacts.
pub fn partition_and_estimate<R: Rng + ?Sized>(
    panel: &UnitPanel,
    alpha: f64,
    parent_tau_sq: f64,
    partition_index: usize,
    rng: &mut R,
) -> Result<SplitPair> {
    Ok(Partitioner::new(panel, alpha, parent_tau_sq)?.next_pair(partition_index, rng))
}

/// `S` random partitions of the same panel, partition `s` drawn from its own stream.
pub fn repartition_series(
    panel: &UnitPanel,
    config: &SplitConfig,
    parent_tau_sq: f64,
    streams: &TestStreams,
) -> Result<Vec<SplitPair>> {
    config.validate()?;
    let mut partitioner = Partitioner::new(panel, config.alpha, parent_tau_sq)?;
    Ok((1..=config.num_partitions)
        .map(|s| partitioner.next_pair(s, &mut streams.unit_partition(s)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Domain, StreamRng};

    fn rng(tag: u64) -> StreamRng {
        StreamRng::new(tag, Domain::Validation, &[])
    }

    #[test]
    fn rejects_tiny_panels() {
        assert!(matches!(
            simulate_units(0.0, 1.0, 1, &mut rng(1)),
            Err(Error::InvalidSize(_))
        ));
    }

    #[test]
    fn fixed_seed_reproduces_panel() {
        let a = simulate_units(0.5, 1.0, 50, &mut rng(3)).unwrap();
        let b = simulate_units(0.5, 1.0, 50, &mut rng(3)).unwrap();
        assert_eq!(a, b);
        let c = simulate_units(0.5, 1.0, 50, &mut rng(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn arm_variance_is_calibrated() {
        let panel = simulate_units(0.0, 2.0, 400, &mut rng(5)).unwrap();
        let v = 2.0 * 400.0 / 2.0;
        for arm in [panel.treatment(), panel.control()] {
            let m = mean(arm);
            let s2 = arm.iter().map(|y| (y - m).powi(2)).sum::<f64>() / 399.0;
            assert!((s2 / v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rounding_gives_exact_counts() {
        let panel = simulate_units(0.0, 1.0, 10, &mut rng(6)).unwrap();
        let mut partitioner = Partitioner::new(&panel, 0.5, 1.0).unwrap();
        let part = partitioner.next_partition(&mut rng(7));
        assert_eq!(part.treatment_a.len(), 5);
        assert_eq!(part.control_a.len(), 5);
        assert_eq!(training_count(10, 0.25), 2); // 2.5 rounds to even
        assert_eq!(training_count(10, 0.35), 4); // 3.5 rounds to even
        assert_eq!(training_count(10, 0.45), 4); // 4.5 rounds to even
    }

    #[test]
    fn splits_are_disjoint_and_cover_panel() {
        let panel = simulate_units(1.0, 1.0, 101, &mut rng(8)).unwrap();
        let mut partitioner = Partitioner::new(&panel, 0.3, 1.0).unwrap();
        for s in 0..20 {
            let part = partitioner.next_partition(&mut rng(100 + s));
            for (a, b) in [
                (&part.treatment_a, &part.treatment_b),
                (&part.control_a, &part.control_b),
            ] {
                let mut all: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
                all.sort_unstable();
                assert_eq!(all, (0..101).collect::<Vec<_>>());
                assert!(a.iter().all(|i| b.binary_search(i).is_err()));
            }
        }
    }

    #[test]
    fn empty_split_rejected() {
        let panel = simulate_units(0.0, 1.0, 4, &mut rng(9)).unwrap();
        assert!(matches!(
            Partitioner::new(&panel, 0.1, 1.0),
            Err(Error::EmptySplit { arm: "a", .. })
        ));
        assert!(matches!(
            Partitioner::new(&panel, 0.9, 1.0),
            Err(Error::EmptySplit { arm: "b", .. })
        ));
    }

    #[test]
    fn stratified_means_reconstruct_full_estimate() {
        // Exact counts: alpha * n is an integer for every case.
        for &(n, alpha) in &[(10usize, 0.5), (100, 0.3), (40, 0.75)] {
            let panel = simulate_units(0.7, 1.3, n, &mut rng(n as u64)).unwrap();
            let full = panel.difference_in_means();
            for s in 1..=10 {
                let pair = partition_and_estimate(&panel, alpha, 1.3, s, &mut rng(s as u64)).unwrap();
                let recon = alpha * pair.delta_hat_a + (1.0 - alpha) * pair.delta_hat_b;
                assert!((recon - full).abs() <= 1e-9 * full.abs().max(1.0));
                assert_eq!(pair.tau_sq_a, 1.3 / alpha);
                assert_eq!(pair.tau_sq_b, 1.3 / (1.0 - alpha));
            }
        }
    }

    #[test]
    fn repartition_series_is_deterministic() {
        let panel = simulate_units(0.0, 1.0, 200, &mut rng(10)).unwrap();
        let config = SplitConfig::new(0.5, 1, 4).unwrap();
        let streams = TestStreams::new(4, 0, 0);
        let single = repartition_series(&panel, &config, 1.0, &streams).unwrap();
        assert_eq!(single.len(), 1);
        let config = SplitConfig::new(0.5, 25, 4).unwrap();
        let a = repartition_series(&panel, &config, 1.0, &streams).unwrap();
        let b = repartition_series(&panel, &config, 1.0, &streams).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], single[0]);
    }

    #[test]
    fn recenter_matches_target() {
        let mut panel = simulate_units(0.0, 1.0, 30, &mut rng(12)).unwrap();
        panel.recenter(0.25);
        assert!((panel.difference_in_means() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn dump_writes_all_units() {
        let panel = simulate_units(0.0, 1.0, 3, &mut rng(13)).unwrap();
        let mut buf = Vec::new();
        panel.dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().nth(4).unwrap().starts_with("3,control,"));
    }
}
