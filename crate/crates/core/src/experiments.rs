//! Seeded Monte Carlo studies of inference under network dependence.
//!
//! Replicate `r` of every study draws from streams keyed by
//! `(master seed, r, tag)` only. Settings within a study therefore share
//! random numbers (common random numbers), which keeps between-setting
//! comparisons sharp, and every report is a pure function of its config.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deptest::{self, NodeValues, PermutationConfig, DEFAULT_PERMUTATIONS};
use crate::error::{Error, Result};
use crate::graph::{generate_random_network, Network, RandomModel, WeightMatrix};
use crate::inference::{self, design_with_intercept, GlsScale, LmmModel};
use crate::rng::{self, tag};
use crate::simulate::{self, Transmission, TransmissionRule};
use crate::stats;

/// Version of the report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_REPS: usize = 500;
pub const DEFAULT_N: usize = 200;
pub const DEFAULT_MEAN_DEGREE: f64 = 5.0;
pub const DEFAULT_NETWORK_SEED: u64 = 1;

/// Connected Erdős–Rényi network with the given size and mean degree.
pub fn default_network(n: usize, mean_degree: f64, seed: u64) -> Result<Network> {
    generate_random_network(n, RandomModel::erdos_renyi_mean_degree(n, mean_degree), seed, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    CorrelationDistribution,
    Coverage,
    SpuriousRegression,
    DegreeConfounding,
    GlsCorrection,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 5] = [
        ExperimentName::CorrelationDistribution,
        ExperimentName::Coverage,
        ExperimentName::SpuriousRegression,
        ExperimentName::DegreeConfounding,
        ExperimentName::GlsCorrection,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentName::CorrelationDistribution => "correlation-distribution",
            ExperimentName::Coverage => "coverage",
            ExperimentName::SpuriousRegression => "spurious-regression",
            ExperimentName::DegreeConfounding => "degree-confounding",
            ExperimentName::GlsCorrection => "gls-correction",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL.into_iter().find(|e| e.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = ExperimentName::ALL.iter().map(|e| e.as_str()).collect();
            Error::InvalidParameter(format!("unknown experiment `{s}`; valid names: {}", names.join(", ")))
        })
    }
}

/// Aggregates for one setting (one column of a results table).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    pub label: String,
    pub kappa: Option<usize>,
    pub lambda: Option<f64>,
    pub sigma: Option<f64>,
    pub effect: Option<f64>,
    pub replicates: usize,
    /// Fraction of intervals containing the true parameter.
    pub coverage: Option<f64>,
    /// Mean estimate minus the true parameter.
    pub bias: Option<f64>,
    pub mean_abs_error: Option<f64>,
    pub mean_se: Option<f64>,
    pub sd_estimates: Option<f64>,
    /// Monte Carlo standard error of the mean estimate, `sd / √reps`.
    pub mc_se: Option<f64>,
    /// Fraction of replicates whose estimate has the sign of the grand mean.
    pub sign_consistency: Option<f64>,
    pub reject_y: Option<f64>,
    pub reject_x: Option<f64>,
    pub reject_residuals: Option<f64>,
    pub mean_p_y: Option<f64>,
    pub mean_p_x: Option<f64>,
    pub mean_p_residuals: Option<f64>,
    /// Coverage of the mixed-model interval, where fitted.
    pub coverage_lmm: Option<f64>,
    pub mean_correlation: Option<f64>,
    pub sd_correlation: Option<f64>,
    /// Fraction of replicates with |correlation| > 0.5.
    pub frac_abs_correlation_gt_half: Option<f64>,
}

/// Raw values from one replicate of one setting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub setting: String,
    pub replicate: usize,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub covered: Option<bool>,
    pub p_y: Option<f64>,
    pub p_x: Option<f64>,
    pub p_residuals: Option<f64>,
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: ExperimentName,
    pub master_seed: u64,
    pub replicates: usize,
    /// Every parameter used, so any row can be regenerated.
    pub config: serde_json::Value,
    pub network: NetworkSummary,
    pub settings: Vec<SettingSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub replicate_records: Vec<ReplicateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub nodes: usize,
    pub edges: usize,
    pub mean_degree: f64,
    pub connected: bool,
}

impl NetworkSummary {
    pub fn of(net: &Network) -> Self {
        NetworkSummary {
            nodes: net.node_count(),
            edges: net.edge_count(),
            mean_degree: 2.0 * net.edge_count() as f64 / net.node_count() as f64,
            connected: net.is_connected(),
        }
    }
}

impl ExperimentReport {
    pub fn setting(&self, label: &str) -> Option<&SettingSummary> {
        self.settings.iter().find(|s| s.label == label)
    }

    pub fn write_report_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.settings {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_replicates_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.replicate_records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Permutation-test settings shared by the studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSettings {
    pub permutations: usize,
    pub alpha: f64,
    pub level: f64,
}

impl Default for TestSettings {
    fn default() -> Self {
        TestSettings { permutations: DEFAULT_PERMUTATIONS, alpha: 0.05, level: 0.95 }
    }
}

fn check_reps(reps: usize, min: usize) -> Result<()> {
    if reps < min {
        return Err(Error::InvalidParameter(format!("need at least {min} replicates, got {reps}")));
    }
    Ok(())
}

fn perm_p(y: &[f64], w: &WeightMatrix, m: usize, seed: u64, path: &[u64]) -> Result<f64> {
    let cfg = PermutationConfig::new(m, rng::derive_seed(seed, path));
    let r = deptest::permutation_test(&NodeValues::new(y.to_vec())?, w, &cfg)?;
    Ok(r.p_perm.expect("permutation test sets p_perm"))
}

fn rate(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut k, mut n) = (0usize, 0usize);
    for f in flags {
        k += usize::from(f);
        n += 1;
    }
    k as f64 / n as f64
}

/// One replicate's interval estimate plus optional test p-values.
#[derive(Debug, Clone, Copy, Default)]
struct Draw {
    estimate: f64,
    se: f64,
    ci: (f64, f64),
    p_y: Option<f64>,
    p_x: Option<f64>,
    p_res: Option<f64>,
}

fn summarize(label: String, draws: &[Draw], target: f64, alpha: f64) -> SettingSummary {
    let est: Vec<f64> = draws.iter().map(|d| d.estimate).collect();
    let reps = draws.len();
    let mean = stats::mean(&est);
    let sd = stats::sample_sd(&est);
    let sign = if mean >= 0.0 { 1.0 } else { -1.0 };
    let opt_rate = |f: fn(&Draw) -> Option<f64>| -> (Option<f64>, Option<f64>) {
        let ps: Option<Vec<f64>> = draws.iter().map(f).collect();
        match ps {
            Some(ps) if !ps.is_empty() => {
                (Some(rate(ps.iter().map(|&p| p <= alpha))), Some(stats::mean(&ps)))
            }
            _ => (None, None),
        }
    };
    let (reject_y, mean_p_y) = opt_rate(|d| d.p_y);
    let (reject_x, mean_p_x) = opt_rate(|d| d.p_x);
    let (reject_residuals, mean_p_residuals) = opt_rate(|d| d.p_res);
    SettingSummary {
        label,
        replicates: reps,
        coverage: Some(rate(draws.iter().map(|d| d.ci.0 <= target && target <= d.ci.1))),
        bias: Some(mean - target),
        mean_abs_error: Some(stats::mean(&est.iter().map(|e| (e - target).abs()).collect::<Vec<_>>())),
        mean_se: Some(stats::mean(&draws.iter().map(|d| d.se).collect::<Vec<_>>())),
        sd_estimates: Some(sd),
        mc_se: Some(sd / (reps as f64).sqrt()),
        sign_consistency: Some(rate(est.iter().map(|e| e * sign > 0.0))),
        reject_y,
        reject_x,
        reject_residuals,
        mean_p_y,
        mean_p_x,
        mean_p_residuals,
        ..Default::default()
    }
}

fn records<'a>(label: &str, draws: &'a [Draw], target: f64) -> impl Iterator<Item = ReplicateRecord> + 'a {
    let label = label.to_string();
    draws.iter().enumerate().map(move |(r, d)| ReplicateRecord {
        setting: label.clone(),
        replicate: r,
        estimate: Some(d.estimate),
        se: Some(d.se),
        ci_lower: Some(d.ci.0),
        ci_upper: Some(d.ci.1),
        covered: Some(d.ci.0 <= target && target <= d.ci.1),
        p_y: d.p_y,
        p_x: d.p_x,
        p_residuals: d.p_res,
        correlation: None,
    })
}

fn kappa_label(k: usize) -> String {
    format!("kappa={k}")
}

#[allow(clippy::too_many_arguments)]
fn report(
    experiment: ExperimentName,
    seed: u64,
    reps: usize,
    config: &impl Serialize,
    net: &Network,
    settings: Vec<SettingSummary>,
    replicate_records: Vec<ReplicateRecord>,
    keep_replicates: bool,
) -> Result<ExperimentReport> {
    Ok(ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment,
        master_seed: seed,
        replicates: reps,
        config: serde_json::to_value(config)?,
        network: NetworkSummary::of(net),
        settings,
        replicate_records: if keep_replicates { replicate_records } else { Vec::new() },
    })
}

// ---------------------------------------------------------------------------
// Correlation between independent, equally dependent variables.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    /// Per-step noise scales; an iid baseline is always included.
    pub sigmas: Vec<f64>,
    pub rule: TransmissionRule,
    pub a: f64,
    pub kappa: usize,
    pub reps: usize,
    pub seed: u64,
    pub keep_replicates: bool,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            sigmas: vec![2.0, 0.5, 0.05],
            rule: TransmissionRule::NeighborSum,
            a: 0.9,
            kappa: 10,
            reps: DEFAULT_REPS,
            seed: 0,
            keep_replicates: false,
        }
    }
}

/// Pearson correlations between independently generated X and Y that share
/// a network. Under strong dependence with little noise the distribution
/// spreads toward ±1.
pub fn run_correlation_distribution(net: &Network, cfg: &CorrelationConfig) -> Result<ExperimentReport> {
    check_reps(cfg.reps, 100)?;
    let processes: Vec<Transmission> = cfg.sigmas.iter().map(|&s| Transmission { rule: cfg.rule, a: cfg.a, sigma: s }).collect();
    for p in &processes {
        p.validate()?;
    }
    let n = net.node_count();
    // Column 0 is the iid baseline, then one column per sigma.
    let per_rep: Vec<Vec<f64>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let r = r as u64;
            let mut row = Vec::with_capacity(cfg.sigmas.len() + 1);
            let mut rx = rng::stream(cfg.seed, &[r, tag::COVARIATE]);
            let mut ry = rng::stream(cfg.seed, &[r, tag::OUTCOME]);
            let x: Vec<f64> = (0..n).map(|_| rx.sample(StandardNormal)).collect();
            let y: Vec<f64> = (0..n).map(|_| ry.sample(StandardNormal)).collect();
            row.push(stats::pearson(&x, &y));
            for p in &processes {
                let mut rx = rng::stream(cfg.seed, &[r, tag::COVARIATE]);
                let mut ry = rng::stream(cfg.seed, &[r, tag::OUTCOME]);
                let x = p.path(net, cfg.kappa, &mut rx).pop().unwrap();
                let y = p.path(net, cfg.kappa, &mut ry).pop().unwrap();
                row.push(stats::pearson(&x, &y));
            }
            row
        })
        .collect();
    let mut labels = vec!["iid".to_string()];
    labels.extend(cfg.sigmas.iter().map(|s| format!("sigma={s}")));
    let mut settings = Vec::new();
    let mut recs = Vec::new();
    for (c, label) in labels.iter().enumerate() {
        let rho: Vec<f64> = per_rep.iter().map(|row| row[c]).collect();
        let sd = stats::sample_sd(&rho);
        settings.push(SettingSummary {
            label: label.clone(),
            sigma: (c > 0).then(|| cfg.sigmas[c - 1]),
            kappa: (c > 0).then_some(cfg.kappa),
            replicates: cfg.reps,
            mean_correlation: Some(stats::mean(&rho)),
            sd_correlation: Some(sd),
            mc_se: Some(sd / (cfg.reps as f64).sqrt()),
            frac_abs_correlation_gt_half: Some(rate(rho.iter().map(|r| r.abs() > 0.5))),
            ..Default::default()
        });
        recs.extend(rho.iter().enumerate().map(|(r, &v)| ReplicateRecord {
            setting: label.clone(),
            replicate: r,
            correlation: Some(v),
            ..Default::default()
        }));
    }
    report(ExperimentName::CorrelationDistribution, cfg.seed, cfg.reps, cfg, net, settings, recs, cfg.keep_replicates)
}

// ---------------------------------------------------------------------------
// Naive confidence intervals for the mean.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub kappas: Vec<usize>,
    #[serde(flatten)]
    pub process: Transmission,
    pub reps: usize,
    pub seed: u64,
    pub tests: TestSettings,
    pub keep_replicates: bool,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            kappas: vec![0, 1, 2, 3],
            process: Transmission::new(0.5, 0.5),
            reps: DEFAULT_REPS,
            seed: 0,
            tests: TestSettings::default(),
            keep_replicates: false,
        }
    }
}

/// Coverage of `E[Y] = 0` by the independence-assuming interval `Ȳ ± z·s/√n`
/// as transmission steps accumulate, plus the Moran rejection rate.
pub fn run_coverage_experiment(net: &Network, cfg: &CoverageConfig) -> Result<ExperimentReport> {
    check_reps(cfg.reps, 2)?;
    if !cfg.kappas.contains(&0) {
        return Err(Error::InvalidParameter("kappa list must include 0 (independence column)".into()));
    }
    cfg.process.validate()?;
    let w = WeightMatrix::adjacency(net)?;
    let kmax = *cfg.kappas.iter().max().unwrap();
    let t = cfg.tests;
    let per_rep: Vec<Vec<Draw>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<Draw>> {
            let r = r as u64;
            let mut ry = rng::stream(cfg.seed, &[r, tag::OUTCOME]);
            let path = cfg.process.path(net, kmax, &mut ry);
            cfg.kappas
                .iter()
                .map(|&k| {
                    let y = NodeValues::new(path[k].clone())?;
                    let m = inference::mean_ci_naive(&y, t.level)?;
                    let p = perm_p(y.as_slice(), &w, t.permutations, cfg.seed, &[r, tag::TEST_Y])?;
                    Ok(Draw { estimate: m.ybar, se: m.se_naive, ci: m.ci, p_y: Some(p), ..Default::default() })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut settings = Vec::new();
    let mut recs = Vec::new();
    for (c, &k) in cfg.kappas.iter().enumerate() {
        let draws: Vec<Draw> = per_rep.iter().map(|row| row[c]).collect();
        let label = kappa_label(k);
        let mut s = summarize(label.clone(), &draws, 0.0, t.alpha);
        s.kappa = Some(k);
        settings.push(s);
        recs.extend(records(&label, &draws, 0.0));
    }
    report(ExperimentName::Coverage, cfg.seed, cfg.reps, cfg, net, settings, recs, cfg.keep_replicates)
}

// ---------------------------------------------------------------------------
// Regression of one dependent variable on another, independent one.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpuriousConfig {
    pub kappas: Vec<usize>,
    #[serde(flatten)]
    pub process: Transmission,
    pub reps: usize,
    pub seed: u64,
    /// Add a column where Y at the largest κ is randomly relabeled.
    pub include_permuted_baseline: bool,
    pub tests: TestSettings,
    pub keep_replicates: bool,
}

impl Default for SpuriousConfig {
    fn default() -> Self {
        SpuriousConfig {
            kappas: vec![1, 2, 3],
            process: Transmission::new(STRONG_A, STRONG_SIGMA),
            reps: DEFAULT_REPS,
            seed: 0,
            include_permuted_baseline: true,
            tests: TestSettings::default(),
            keep_replicates: false,
        }
    }
}

pub const PERMUTED_BASELINE: &str = "permuted-y";

/// Default transmission for the regression studies: heavy neighbor weight
/// and little fresh noise, so dependence builds quickly over a few steps.
pub const STRONG_A: f64 = 0.9;
pub const STRONG_SIGMA: f64 = 0.05;

/// X and Y from two independent transmission runs over the same network
/// and κ; OLS of Y on X with i.i.d. standard errors. The true slope is 0.
pub fn run_spurious_regression_experiment(net: &Network, cfg: &SpuriousConfig) -> Result<ExperimentReport> {
    check_reps(cfg.reps, 2)?;
    if cfg.kappas.is_empty() {
        return Err(Error::InvalidParameter("kappa list is empty".into()));
    }
    cfg.process.validate()?;
    let w = WeightMatrix::adjacency(net)?;
    let kmax = *cfg.kappas.iter().max().unwrap();
    let t = cfg.tests;
    let fit_one = |x: &[f64], y: &[f64], r: u64| -> Result<Draw> {
        let design = design_with_intercept(&[x]);
        let fit = inference::ols(&NodeValues::new(y.to_vec())?, &design, t.level)?;
        Ok(Draw {
            estimate: fit.beta[1],
            se: fit.se[1],
            ci: fit.ci[1],
            p_y: Some(perm_p(y, &w, t.permutations, cfg.seed, &[r, tag::TEST_Y])?),
            p_x: Some(perm_p(x, &w, t.permutations, cfg.seed, &[r, tag::TEST_X])?),
            p_res: Some(perm_p(&fit.residuals, &w, t.permutations, cfg.seed, &[r, tag::TEST_RESIDUAL])?),
        })
    };
    let per_rep: Vec<Vec<Draw>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<Draw>> {
            let r = r as u64;
            let xs = cfg.process.path(net, kmax, &mut rng::stream(cfg.seed, &[r, tag::COVARIATE]));
            let ys = cfg.process.path(net, kmax, &mut rng::stream(cfg.seed, &[r, tag::OUTCOME]));
            let mut row = Vec::new();
            if cfg.include_permuted_baseline {
                let mut y = ys[kmax].clone();
                y.shuffle(&mut rng::stream(cfg.seed, &[r, tag::PERMUTE]));
                row.push(fit_one(&xs[kmax], &y, r)?);
            }
            for &k in &cfg.kappas {
                row.push(fit_one(&xs[k], &ys[k], r)?);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut columns: Vec<(String, Option<usize>)> = Vec::new();
    if cfg.include_permuted_baseline {
        columns.push((PERMUTED_BASELINE.to_string(), Some(kmax)));
    }
    columns.extend(cfg.kappas.iter().map(|&k| (kappa_label(k), Some(k))));
    let mut settings = Vec::new();
    let mut recs = Vec::new();
    for (c, (label, k)) in columns.iter().enumerate() {
        let draws: Vec<Draw> = per_rep.iter().map(|row| row[c]).collect();
        let mut s = summarize(label.clone(), &draws, 0.0, t.alpha);
        s.kappa = *k;
        settings.push(s);
        recs.extend(records(label, &draws, 0.0));
    }
    report(ExperimentName::SpuriousRegression, cfg.seed, cfg.reps, cfg, net, settings, recs, cfg.keep_replicates)
}

// ---------------------------------------------------------------------------
// Confounding by degree.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundingConfig {
    /// Degree effects on the covariate's mean, one setting each.
    pub effects: Vec<f64>,
    pub covariate_noise: f64,
    /// Degree effect on the outcome.
    pub outcome_effect: f64,
    pub outcome_noise: f64,
    pub control_degree: bool,
    pub reps: usize,
    pub seed: u64,
    pub tests: TestSettings,
    pub keep_replicates: bool,
}

impl Default for ConfoundingConfig {
    fn default() -> Self {
        ConfoundingConfig {
            effects: vec![0.0, 0.5, 1.0],
            covariate_noise: 1.0,
            outcome_effect: 1.0,
            outcome_noise: 1.0,
            control_degree: false,
            reps: DEFAULT_REPS,
            seed: 0,
            tests: TestSettings::default(),
            keep_replicates: false,
        }
    }
}

/// A fixed outcome driven by degree regressed on freshly drawn covariates
/// whose mean also rises with degree. Without adjustment the slope is
/// biased away from 0; adding standardized degree to the design removes it.
pub fn run_degree_confounding_experiment(net: &Network, cfg: &ConfoundingConfig) -> Result<ExperimentReport> {
    check_reps(cfg.reps, 2)?;
    if cfg.effects.is_empty() {
        return Err(Error::InvalidParameter("effect list is empty".into()));
    }
    let sdeg = simulate::standardized_degree(net)?;
    let w = WeightMatrix::adjacency(net)?;
    let t = cfg.tests;
    let y = simulate::degree_driven_outcome(net, cfg.outcome_effect, cfg.outcome_noise, rng::derive_seed(cfg.seed, &[tag::OUTCOME]))?;
    let p_y = perm_p(y.as_slice(), &w, t.permutations, cfg.seed, &[tag::TEST_Y])?;
    let per_rep: Vec<Vec<Draw>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<Draw>> {
            let r = r as u64;
            cfg.effects
                .iter()
                .map(|&b| {
                    let xcfg = simulate::ConfoundConfig { b, noise: cfg.covariate_noise, seed: rng::derive_seed(cfg.seed, &[r]) };
                    let x = simulate::degree_confounded_covariate(net, &xcfg)?;
                    let design = if cfg.control_degree {
                        design_with_intercept(&[x.as_slice(), &sdeg])
                    } else {
                        design_with_intercept(&[x.as_slice()])
                    };
                    let fit = inference::ols(&y, &design, t.level)?;
                    Ok(Draw {
                        estimate: fit.beta[1],
                        se: fit.se[1],
                        ci: fit.ci[1],
                        p_y: Some(p_y),
                        p_x: Some(perm_p(x.as_slice(), &w, t.permutations, cfg.seed, &[r, tag::TEST_X])?),
                        p_res: Some(perm_p(&fit.residuals, &w, t.permutations, cfg.seed, &[r, tag::TEST_RESIDUAL])?),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut settings = Vec::new();
    let mut recs = Vec::new();
    for (c, &b) in cfg.effects.iter().enumerate() {
        let draws: Vec<Draw> = per_rep.iter().map(|row| row[c]).collect();
        let label = format!("b={b}");
        let mut s = summarize(label.clone(), &draws, 0.0, t.alpha);
        s.effect = Some(b);
        settings.push(s);
        recs.extend(records(&label, &draws, 0.0));
    }
    report(ExperimentName::DegreeConfounding, cfg.seed, cfg.reps, cfg, net, settings, recs, cfg.keep_replicates)
}

// ---------------------------------------------------------------------------
// Correction with the true (or perturbed) covariance.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlsCorrectionConfig {
    pub kappas: Vec<usize>,
    /// Mixing weights toward the diagonal: `Σ_λ = (1-λ)Σ + λ diag(Σ)`.
    pub lambdas: Vec<f64>,
    #[serde(flatten)]
    pub process: Transmission,
    pub reps: usize,
    pub seed: u64,
    /// Also fit the mixed model with `K = Σ_λ`.
    pub fit_lmm: bool,
    pub level: f64,
    pub keep_replicates: bool,
}

impl Default for GlsCorrectionConfig {
    fn default() -> Self {
        GlsCorrectionConfig {
            kappas: vec![0, 1, 2, 3],
            lambdas: vec![0.0, 0.1, 0.25, 0.5],
            process: Transmission::new(STRONG_A, STRONG_SIGMA),
            reps: DEFAULT_REPS,
            seed: 0,
            fit_lmm: true,
            level: 0.95,
            keep_replicates: false,
        }
    }
}

/// Shrinks the off-diagonal of `sigma` toward zero by the factor `1 - λ`.
pub fn mix_with_diagonal(sigma: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let diag = DMatrix::from_diagonal(&sigma.diagonal());
    sigma * (1.0 - lambda) + diag * lambda
}

/// The spurious-regression design refit by GLS with the exact transmission
/// covariance (λ = 0) and with progressively misspecified versions of it.
pub fn run_gls_correction_experiment(net: &Network, cfg: &GlsCorrectionConfig) -> Result<ExperimentReport> {
    check_reps(cfg.reps, 2)?;
    if cfg.kappas.is_empty() || cfg.lambdas.is_empty() {
        return Err(Error::InvalidParameter("kappa and lambda lists must be non-empty".into()));
    }
    if let Some(l) = cfg.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::InvalidParameter(format!("lambda {l} outside [0, 1]")));
    }
    cfg.process.validate()?;
    let kmax = *cfg.kappas.iter().max().unwrap();
    // (kappa, lambda, whitening factor, mixed model)
    let mut cells = Vec::new();
    for &k in &cfg.kappas {
        let truth = cfg.process.covariance(net, k);
        for &l in &cfg.lambdas {
            let s = mix_with_diagonal(&truth, l);
            let lmm = if cfg.fit_lmm { Some(LmmModel::new(&s)?) } else { None };
            cells.push((k, l, inference::GlsModel::new(&s)?, lmm));
        }
    }
    let per_rep: Vec<Vec<(Draw, Option<bool>)>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<(Draw, Option<bool>)>> {
            let r = r as u64;
            let xs = cfg.process.path(net, kmax, &mut rng::stream(cfg.seed, &[r, tag::COVARIATE]));
            let ys = cfg.process.path(net, kmax, &mut rng::stream(cfg.seed, &[r, tag::OUTCOME]));
            cells
                .iter()
                .map(|(k, _, gls, lmm)| {
                    let design = design_with_intercept(&[&xs[*k]]);
                    let y = NodeValues::new(ys[*k].clone())?;
                    let fit = gls.fit(&y, &design, GlsScale::Known, cfg.level)?;
                    let lmm_cover = match lmm {
                        Some(m) => Some(m.fit(&y, &design, cfg.level)?.covers(1, 0.0)),
                        None => None,
                    };
                    Ok((Draw { estimate: fit.beta[1], se: fit.se[1], ci: fit.ci[1], ..Default::default() }, lmm_cover))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut settings = Vec::new();
    let mut recs = Vec::new();
    for (c, (k, l, _, _)) in cells.iter().enumerate() {
        let draws: Vec<Draw> = per_rep.iter().map(|row| row[c].0).collect();
        let label = format!("kappa={k},lambda={l}");
        let mut s = summarize(label.clone(), &draws, 0.0, 0.05);
        s.kappa = Some(*k);
        s.lambda = Some(*l);
        if cfg.fit_lmm {
            s.coverage_lmm = Some(rate(per_rep.iter().map(|row| row[c].1 == Some(true))));
        }
        settings.push(s);
        recs.extend(records(&label, &draws, 0.0));
    }
    report(ExperimentName::GlsCorrection, cfg.seed, cfg.reps, cfg, net, settings, recs, cfg.keep_replicates)
}
