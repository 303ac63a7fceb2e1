use proptest::prelude::*;

use splitval::estimators::{
    average_performance, confidence_interval, performance_variance, per_test_average, score_panels,
    report_from_panel,
};
use splitval::harness::{generate_dataset, DgpParams};
use splitval::io::{read_summaries, write_summaries};
use splitval::rng::{Domain, StreamRng};
use splitval::sampler::draw_split_pair;
use splitval::unit_sim::{simulate_units, training_count, Partitioner};
use splitval::{
    compare, evaluate, EvalSettings, MethodologySpec, PerformanceMeasure, PlugIn, SplitConfig,
    TestSummary,
};

fn dataset(values: &[(f64, f64)]) -> Vec<TestSummary> {
    values
        .iter()
        .enumerate()
        .map(|(i, &(d, t))| TestSummary::new(format!("t{i}"), d, t).unwrap())
        .collect()
}

fn summaries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-5.0f64..5.0, 0.05f64..4.0), 2..40)
}

fn methodology() -> impl Strategy<Value = MethodologySpec> {
    prop_oneof![
        Just(MethodologySpec::Identity),
        (0.05f64..1.0).prop_map(|weight| MethodologySpec::FixedShrinkage { weight }),
        (0.1f64..5.0).prop_map(|sigma_sq| MethodologySpec::BayesShrinkage { sigma_sq }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_pairs_reconstruct_the_full_estimate(
        delta_hat in -50.0f64..50.0,
        tau_sq in 1e-3f64..100.0,
        alpha in 0.01f64..0.99,
        seed in any::<u64>(),
    ) {
        let test = TestSummary::new("t", delta_hat, tau_sq).unwrap();
        let mut rng = StreamRng::new(seed, Domain::Validation, &[0]);
        for s in 1..=20 {
            let p = draw_split_pair(&test, alpha, s, &mut rng).unwrap();
            let rebuilt = alpha * p.delta_hat_a + (1.0 - alpha) * p.delta_hat_b;
            prop_assert!((rebuilt - delta_hat).abs() <= 1e-12 * delta_hat.abs().max(1.0) * 10.0);
            prop_assert!((p.tau_sq_a - tau_sq / alpha).abs() <= 1e-12 * p.tau_sq_a);
            prop_assert!((p.tau_sq_b - tau_sq / (1.0 - alpha)).abs() <= 1e-12 * p.tau_sq_b);
        }
    }

    #[test]
    fn interval_is_centred_with_normal_half_width(
        values in summaries(),
        m in methodology(),
        alpha in 0.1f64..0.9,
        level in 0.5f64..0.999,
        seed in any::<u64>(),
    ) {
        let tests = dataset(&values);
        let settings = EvalSettings::new(SplitConfig::new(alpha, 4, seed).unwrap()).with_level(level);
        let r = evaluate(&tests, &m, PerformanceMeasure::SquaredError, &settings).unwrap();
        prop_assert!(r.ci_low <= r.theta_hat && r.theta_hat <= r.ci_high);
        prop_assert!(r.zeta_sq_hat >= 0.0);
        let z = splitval::normal::quantile(1.0 - (1.0 - level) / 2.0);
        let expected = z * (r.zeta_sq_hat / tests.len() as f64).sqrt();
        prop_assert!((r.half_width() - expected).abs() <= 1e-9 * expected.max(1e-12));
    }

    #[test]
    fn identical_methodologies_do_not_differ(
        values in summaries(),
        m in methodology(),
        seed in any::<u64>(),
    ) {
        let tests = dataset(&values);
        let settings = EvalSettings::new(SplitConfig::new(0.5, 5, seed).unwrap());
        let c = compare(&tests, &m, &m, PerformanceMeasure::SquaredError, &settings).unwrap();
        prop_assert_eq!(c.relative_difference, 0.0);
        prop_assert_eq!(c.report_1, c.report_2);
    }

    #[test]
    fn aggregates_match_their_definitions(
        values in summaries(),
        m in methodology(),
        partitions in 1usize..12,
        seed in any::<u64>(),
    ) {
        let tests = dataset(&values);
        let settings = EvalSettings::new(SplitConfig::new(0.4, partitions, seed).unwrap());
        let panels = score_panels(&tests, &[&m as &dyn PlugIn], PerformanceMeasure::Bias, &settings).unwrap();
        let panel = &panels[0];
        prop_assert_eq!(panel.num_tests(), tests.len());
        for i in 0..tests.len() {
            let row = panel.partition_scores(i);
            prop_assert_eq!(row.len(), partitions);
            let mean = row.iter().sum::<f64>() / partitions as f64;
            prop_assert!((panel.per_test()[i] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            prop_assert_eq!(per_test_average(row).unwrap(), panel.per_test()[i]);
        }
        let report = report_from_panel(panel, 0.95).unwrap();
        let theta = average_performance(panel.per_test()).unwrap();
        let n = tests.len() as f64;
        let manual = panel.per_test().iter().map(|y| (y - theta).powi(2)).sum::<f64>() / n;
        prop_assert_eq!(report.theta_hat, theta);
        prop_assert!((performance_variance(panel.per_test(), theta).unwrap() - manual).abs() <= 1e-12 * manual.max(1e-12));
        let (lo, hi) = confidence_interval(theta, report.zeta_sq_hat, tests.len(), 0.95).unwrap();
        prop_assert_eq!((lo, hi), (report.ci_low, report.ci_high));
    }

    #[test]
    fn unit_partitions_are_disjoint_and_sized(
        n in 4usize..300,
        alpha in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let k = training_count(n, alpha);
        prop_assume!(k > 0 && k < n);
        let mut rng = StreamRng::new(seed, Domain::Validation, &[9]);
        let panel = simulate_units(0.3, 1.0, n, &mut rng).unwrap();
        let mut partitioner = Partitioner::new(&panel, alpha, 1.0).unwrap();
        let p = partitioner.next_partition(&mut rng);
        for (a, b) in [(&p.treatment_a, &p.treatment_b), (&p.control_a, &p.control_b)] {
            prop_assert_eq!(a.len(), k);
            prop_assert_eq!(b.len(), n - k);
            let mut all: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        let pair = partitioner.next_pair(1, &mut rng);
        let (ka, kb) = (k as f64 / n as f64, (n - k) as f64 / n as f64);
        let rebuilt = ka * pair.delta_hat_a + kb * pair.delta_hat_b;
        prop_assert!((rebuilt - panel.difference_in_means()).abs() <= 1e-9 * (n as f64).sqrt());
    }

    #[test]
    fn datasets_are_deterministic(
        seed in any::<u64>(),
        replication in 0u64..1000,
        heteroskedastic in any::<bool>(),
    ) {
        let params = DgpParams { sigma_sq: 1.0, tau_sq: 1.0, heteroskedastic, num_tests: 25 };
        let a = generate_dataset(&params, seed, replication).unwrap();
        let b = generate_dataset(&params, seed, replication).unwrap();
        prop_assert_eq!(&a, &b);
        for t in &a {
            prop_assert!(t.tau_sq >= params.tau_sq);
            if !heteroskedastic {
                prop_assert_eq!(t.tau_sq, params.tau_sq);
            }
        }
    }

    #[test]
    fn summaries_round_trip_through_csv(values in summaries()) {
        let tests = dataset(&values);
        let mut buf = Vec::new();
        write_summaries(&tests, &mut buf).unwrap();
        let back = read_summaries(buf.as_slice()).unwrap();
        prop_assert_eq!(back, tests);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let params = DgpParams { num_tests: 300, ..DgpParams::benchmark() };
    let tests = generate_dataset(&params, 5, 0).unwrap();
    let settings = EvalSettings::new(SplitConfig::new(0.5, 8, 5).unwrap());
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                compare(
                    &tests,
                    &MethodologySpec::Identity,
                    &MethodologySpec::BayesShrinkage { sigma_sq: 1.0 },
                    PerformanceMeasure::SquaredError,
                    &settings,
                )
                .unwrap()
            })
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(7));
}
