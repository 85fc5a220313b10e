#![allow(dead_code)]
//! Strategies and invariant checks shared by the property suites and the
//! acceptance runner.

use nalgebra::DMatrix;
use netdep::deptest::{self, NodeValues, PermutationConfig};
use netdep::graph::{Network, WeightMatrix};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};

/// Values and a weight matrix on a connected random network.
#[derive(Debug, Clone)]
pub struct Case {
    pub net: Network,
    pub y: Vec<f64>,
    pub w: DMatrix<f64>,
}

impl Case {
    pub fn values(&self) -> NodeValues {
        NodeValues::new(self.y.clone()).unwrap()
    }

    pub fn weights(&self) -> WeightMatrix {
        WeightMatrix::new(self.w.clone()).unwrap()
    }
}

/// Connected network: a random recursive tree plus extra random edges.
pub fn connected_network(n_min: usize, n_max: usize) -> impl Strategy<Value = Network> {
    (n_min..=n_max).prop_flat_map(|n| {
        let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
        let extra = proptest::collection::vec((0..n, 0..n), 0..=n);
        (Just(n), parents, extra).prop_map(|(n, parents, extra)| {
            let mut pairs: Vec<(usize, usize)> = parents.into_iter().enumerate().map(|(i, p)| (i + 1, p)).collect();
            pairs.extend(extra.into_iter().filter(|(a, b)| a != b));
            Network::new(n, pairs).unwrap()
        })
    })
}

fn non_constant(y: &[f64]) -> bool {
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo > 1e-3 * (1.0 + hi.abs().max(lo.abs()))
}

/// `weighted = false` gives adjacency weights; otherwise each tie gets an
/// independent positive weight in each direction (asymmetric W).
pub fn case(n_min: usize, n_max: usize, weighted: bool) -> impl Strategy<Value = Case> {
    connected_network(n_min, n_max)
        .prop_flat_map(move |net| {
            let n = net.node_count();
            let y = proptest::collection::vec(-10.0f64..10.0, n);
            let wts = proptest::collection::vec(0.1f64..5.0, n * n);
            (Just(net), y, wts)
        })
        .prop_filter("values must vary", |(_, y, _)| non_constant(y))
        .prop_map(move |(net, y, wts)| {
            let n = net.node_count();
            let mut w = DMatrix::zeros(n, n);
            for &(i, j) in net.edges() {
                if weighted {
                    w[(i, j)] = wts[i * n + j];
                    w[(j, i)] = wts[j * n + i];
                } else {
                    w[(i, j)] = 1.0;
                    w[(j, i)] = 1.0;
                }
            }
            Case { net, y, w }
        })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

macro_rules! ensure_close {
    ($a:expr, $b:expr, $tol:expr, $what:expr) => {{
        let (a, b) = ($a, $b);
        prop_assert!(close(a, b, $tol), "{}: {} vs {}", $what, a, b);
    }};
}

pub const INVARIANCE_TOL: f64 = 1e-9;

/// I, c and I_std unchanged under `y -> a + b·y`.
pub fn check_affine(c: &Case, shift: f64, scale: f64) -> Result<(), TestCaseError> {
    let (y, w) = (c.values(), c.weights());
    let t = y.affine(shift, scale).unwrap();
    ensure_close!(deptest::morans_i(&y, &w).unwrap(), deptest::morans_i(&t, &w).unwrap(), INVARIANCE_TOL, "I");
    ensure_close!(deptest::gearys_c(&y, &w).unwrap(), deptest::gearys_c(&t, &w).unwrap(), INVARIANCE_TOL, "c");
    if y.len() >= 4 {
        let r0 = deptest::normal_test(&y, &w, Default::default()).unwrap();
        let r1 = deptest::normal_test(&t, &w, Default::default()).unwrap();
        if let (Some(a), Some(b)) = (r0.i_std, r1.i_std) {
            ensure_close!(a, b, 1e-7, "I_std");
        }
    }
    Ok(())
}

/// I, c and the null moments of I unchanged under `W -> k·W`.
pub fn check_weight_scale(c: &Case, k: f64) -> Result<(), TestCaseError> {
    let (y, w) = (c.values(), c.weights());
    let ws = w.scaled(k).unwrap();
    ensure_close!(deptest::morans_i(&y, &w).unwrap(), deptest::morans_i(&y, &ws).unwrap(), INVARIANCE_TOL, "I");
    ensure_close!(deptest::gearys_c(&y, &w).unwrap(), deptest::gearys_c(&y, &ws).unwrap(), INVARIANCE_TOL, "c");
    if y.len() >= 4 {
        let m0 = deptest::null_moments(&y, &w).unwrap();
        let m1 = deptest::null_moments(&y, &ws).unwrap();
        ensure_close!(m0.var_i, m1.var_i, INVARIANCE_TOL, "Var I");
    }
    Ok(())
}

/// I, c and the null moments of I unchanged under `W -> (W + Wᵀ)/2`.
pub fn check_symmetrization(c: &Case) -> Result<(), TestCaseError> {
    let (y, w) = (c.values(), c.weights());
    let ws = w.symmetrized();
    ensure_close!(deptest::morans_i(&y, &w).unwrap(), deptest::morans_i(&y, &ws).unwrap(), INVARIANCE_TOL, "I");
    ensure_close!(deptest::gearys_c(&y, &w).unwrap(), deptest::gearys_c(&y, &ws).unwrap(), INVARIANCE_TOL, "c");
    if y.len() >= 4 {
        let m0 = deptest::null_moments(&y, &w).unwrap();
        let m1 = deptest::null_moments(&y, &ws).unwrap();
        ensure_close!(m0.var_i, m1.var_i, INVARIANCE_TOL, "Var I");
    }
    Ok(())
}

/// Permutation results identical in thread pools of 1, 2 and 4 workers.
pub fn check_thread_determinism(c: &Case, seed: u64, m: usize) -> Result<(), TestCaseError> {
    let (y, w) = (c.values(), c.weights());
    let cfg = PermutationConfig::new(m, seed);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| deptest::permutation_test(&y, &w, &cfg).unwrap())
    };
    let base = run(1);
    for t in [2, 4] {
        prop_assert_eq!(&base, &run(t), "{} threads", t);
    }
    let p = base.p_perm.unwrap();
    prop_assert!(p > 0.0 && p <= 1.0);
    Ok(())
}

/// Analytic mean and variance of I against exhaustive enumeration.
pub fn check_moments_vs_enumeration(c: &Case, tol: f64) -> Result<(), TestCaseError> {
    let (y, w) = (c.values(), c.weights());
    let m = deptest::null_moments(&y, &w).unwrap();
    let e = deptest::enumerate_null(&y, &w).unwrap();
    prop_assert!((m.mean_i - e.mean).abs() <= tol, "mean {} vs {}", m.mean_i, e.mean);
    prop_assert!((m.var_i - e.variance).abs() <= tol, "var {} vs {}", m.var_i, e.variance);
    Ok(())
}

/// Seeded runner for use outside the `proptest!` macro.
pub fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn msg<T: std::fmt::Debug>(r: Result<(), TestError<T>>) -> Result<(), String> {
    r.map_err(|e| format!("{e:?}").chars().take(400).collect())
}

/// The four invariance suites, as `(suite, cases, outcome)`.
pub fn invariance_suites(cases: u32) -> Vec<(&'static str, u32, Result<(), String>)> {
    let scalar = prop_oneof![-50.0f64..-0.01, 0.01f64..50.0];
    let affine = runner(cases).run(&(case(2, 12, true), -100.0f64..100.0, scalar), |(c, s, b)| check_affine(&c, s, b));
    let scale = runner(cases).run(&(case(2, 12, true), 1e-3f64..1e3), |(c, k)| check_weight_scale(&c, k));
    let sym = runner(cases).run(&case(2, 12, true), |c| check_symmetrization(&c));
    let det = runner(cases).run(&(case(4, 30, true), any::<u64>()), |(c, s)| check_thread_determinism(&c, s, 99));
    vec![
        ("affine", cases, msg(affine)),
        ("weight-scale", cases, msg(scale)),
        ("symmetrization", cases, msg(sym)),
        ("determinism-under-parallelism", cases, msg(det)),
    ]
}

/// Central binomial interval for a rate over `trials` with success
/// probability `p`, as fractions: `[q(α/2), q(1-α/2)] / trials`.
pub fn binomial_band(trials: u64, p: f64, confidence: f64) -> (f64, f64) {
    use statrs::distribution::{Binomial, DiscreteCDF};
    let b = Binomial::new(p, trials).unwrap();
    let tail = (1.0 - confidence) / 2.0;
    let lo = b.inverse_cdf(tail);
    let hi = b.inverse_cdf(1.0 - tail);
    (lo as f64 / trials as f64, hi as f64 / trials as f64)
}
