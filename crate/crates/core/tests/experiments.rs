mod common;

use netdep::experiments::*;
use netdep::graph::Network;

fn small_network() -> Network {
    default_network(50, 4.0, 2).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn quick_tests() -> TestSettings {
    TestSettings { permutations: 49, ..TestSettings::default() }
}

fn check_report(r: &ExperimentReport, reps: usize) {
    assert_eq!(r.schema_version, REPORT_SCHEMA_VERSION);
    assert_eq!(r.replicates, reps);
    assert!(r.config.get("seed").is_some(), "config must echo the seed: {}", r.config);
    for s in &r.settings {
        assert_eq!(s.replicates, reps);
        let rates = [s.coverage, s.reject_y, s.reject_x, s.reject_residuals, s.coverage_lmm, s.sign_consistency, s.frac_abs_correlation_gt_half];
        for v in rates.into_iter().flatten() {
            assert!((0.0..=1.0).contains(&v), "{} rate {v}", s.label);
        }
    }
}

#[test]
fn experiments_independent_of_thread_count() {
    let net = small_network();
    let reps = 12;
    let runs = |threads| {
        in_pool(threads, || {
            vec![
                run_correlation_distribution(&net, &CorrelationConfig { reps: 100, seed: 4, ..Default::default() }).unwrap(),
                run_coverage_experiment(&net, &CoverageConfig { reps, seed: 4, tests: quick_tests(), keep_replicates: true, ..Default::default() }).unwrap(),
                run_spurious_regression_experiment(&net, &SpuriousConfig { reps, seed: 4, tests: quick_tests(), ..Default::default() }).unwrap(),
                run_degree_confounding_experiment(&net, &ConfoundingConfig { reps, seed: 4, tests: quick_tests(), ..Default::default() }).unwrap(),
                run_gls_correction_experiment(&net, &GlsCorrectionConfig { reps, seed: 4, ..Default::default() }).unwrap(),
            ]
        })
    };
    let one = runs(1);
    assert_eq!(one, runs(3));
    assert_eq!(one[1].replicate_records.len(), 4 * reps);
    for r in &one {
        check_report(r, r.replicates);
    }
}

#[test]
fn report_csv_has_one_row_per_setting() {
    let net = small_network();
    let r = run_spurious_regression_experiment(&net, &SpuriousConfig { reps: 5, tests: quick_tests(), ..Default::default() }).unwrap();
    let mut buf = Vec::new();
    r.write_report_csv(&mut buf).unwrap();
    let mut rd = csv::Reader::from_reader(buf.as_slice());
    let headers = rd.headers().unwrap().clone();
    for col in ["label", "coverage", "reject_y", "reject_x", "reject_residuals"] {
        assert!(headers.iter().any(|h| h == col), "missing {col}");
    }
    assert_eq!(rd.records().count(), r.settings.len());
    assert_eq!(r.settings[0].label, PERMUTED_BASELINE);
}

#[test]
fn bad_configs_are_rejected() {
    let net = small_network();
    assert!(run_coverage_experiment(&net, &CoverageConfig { kappas: vec![1, 2], ..Default::default() }).is_err());
    let gls = GlsCorrectionConfig { lambdas: vec![1.5], reps: 3, ..Default::default() };
    assert!(run_gls_correction_experiment(&net, &gls).is_err());
    assert!(run_correlation_distribution(&net, &CorrelationConfig { reps: 10, ..Default::default() }).is_err());
    assert!("no-such-study".parse::<ExperimentName>().unwrap_err().to_string().contains("coverage"));
}

/// All control columns (no dependence, no confounding, exact covariance)
/// calibrated at once in one seeded run on the default network.
#[test]
fn control_columns_jointly_calibrated() {
    let net = default_network(DEFAULT_N, DEFAULT_MEAN_DEGREE, DEFAULT_NETWORK_SEED).unwrap();
    let reps = DEFAULT_REPS;
    let (cov_lo, cov_hi) = common::binomial_band(reps as u64, 0.95, 0.99);
    let (rej_lo, rej_hi) = common::binomial_band(reps as u64, 0.05, 0.99);
    let within = |v: Option<f64>, lo: f64, hi: f64, what: &str| {
        let v = v.unwrap();
        assert!(lo <= v && v <= hi, "{what}: {v} outside [{lo}, {hi}]");
    };

    let cov = run_coverage_experiment(&net, &CoverageConfig::default()).unwrap();
    let k0 = cov.setting("kappa=0").unwrap();
    within(k0.coverage, cov_lo, cov_hi, "coverage kappa=0");
    within(k0.reject_y, rej_lo, rej_hi, "rejection kappa=0");

    let sp = run_spurious_regression_experiment(&net, &SpuriousConfig::default()).unwrap();
    let base = sp.setting(PERMUTED_BASELINE).unwrap();
    within(base.coverage, cov_lo, cov_hi, "permuted baseline coverage");
    within(base.reject_y, rej_lo, rej_hi, "permuted baseline Y rejection");
    within(base.reject_residuals, rej_lo, rej_hi, "permuted baseline residual rejection");

    let conf = run_degree_confounding_experiment(&net, &ConfoundingConfig::default()).unwrap();
    let b0 = conf.setting("b=0").unwrap();
    within(b0.coverage, cov_lo, cov_hi, "b=0 coverage");

    let gls = run_gls_correction_experiment(&net, &GlsCorrectionConfig::default()).unwrap();
    for s in gls.settings.iter().filter(|s| s.kappa == Some(0)) {
        within(s.coverage, cov_lo, cov_hi, &s.label);
        within(s.coverage_lmm, cov_lo, cov_hi, &s.label);
    }
    // GLS with the true covariance is unbiased.
    for s in gls.settings.iter().filter(|s| s.lambda == Some(0.0)) {
        assert!(s.bias.unwrap().abs() < 4.0 * s.mc_se.unwrap(), "{}: bias {:?}", s.label, s.bias);
    }
}
