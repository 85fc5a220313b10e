use std::io::Write;
use std::path::Path;

use netdep::deptest::{self, Alternative, NodeValues, PermutationConfig, NORMAL_APPROX_MIN_N};
use netdep::experiments::{self as exp, ExperimentName, ExperimentReport};
use netdep::graph::{self, generate_random_network, LabeledNetwork, Network, RandomModel, WeightMatrix};
use netdep::inference;
use netdep::io::{self as nio, MoranDocument};
use netdep::simulate::{self, Transmission};
use serde::Serialize;

use crate::output::{io_err, open, with_sink, write_json, Document};
use crate::{
    AlternativeArg, CliError, Command, ExperimentArgs, Format, GenerateArgs, Method, NetworkModelArg, ResidualArgs, SimModel,
    SimulateArgs, TestArgs, TestOptions,
};

const ALPHA_NOTE: &str = "note: the alpha threshold is a convention, not a calibrated decision rule for these tests; report the p-value itself";

pub fn dispatch(cmd: &Command, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    match cmd {
        Command::Test(a) => test(a, out),
        Command::ResidualTest(a) => residual_test(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::Experiment(a) => experiment(a, out),
        Command::GenerateNetwork(a) => generate_network(a, out),
    }
}

fn load_network(path: &Path) -> Result<LabeledNetwork, CliError> {
    graph::load_edge_list(open(path)?).map_err(|e| match e {
        netdep::Error::Io(io) => io_err(path, io),
        e => CliError::Input(format!("{}: {e}", path.display())),
    })
}

/// Library errors from reading a file keep their exit class but gain the path.
fn in_file<T>(path: &Path, r: netdep::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| if e.is_degenerate() { CliError::Lib(e) } else { CliError::Input(format!("{}: {e}", path.display())) })
}

#[derive(Debug, Serialize)]
struct GearyDocument {
    statistic: f64,
    p_perm: f64,
    m: usize,
}

#[derive(Debug, Serialize)]
struct RegressionSummary {
    names: Vec<String>,
    beta: Vec<f64>,
    se: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct TestResult {
    moran: MoranDocument,
    #[serde(skip_serializing_if = "Option::is_none")]
    geary: Option<GearyDocument>,
    #[serde(skip_serializing_if = "Option::is_none")]
    regression: Option<RegressionSummary>,
    alpha: f64,
    /// Which p-value the verdict uses: `permutation` or `normal`.
    verdict_from: &'static str,
    p_value: f64,
    reject: bool,
}

#[derive(Debug, Serialize)]
struct TestCsvRow {
    statistic: f64,
    i_std: Option<f64>,
    mean_null: Option<f64>,
    var_null: Option<f64>,
    p_perm: Option<f64>,
    p_normal: Option<f64>,
    m: usize,
    n: usize,
    s0: f64,
    geary_c: Option<f64>,
    geary_p_perm: Option<f64>,
    seed: u64,
    reject: bool,
}

fn run_tests(y: &NodeValues, w: &WeightMatrix, opts: &TestOptions) -> Result<(TestResult, Vec<String>), CliError> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(CliError::Input(format!("--alpha must be in (0, 1), got {}", opts.alpha)));
    }
    let alternative = match opts.alternative {
        AlternativeArg::Greater => Alternative::Greater,
        AlternativeArg::TwoSided => Alternative::TwoSided,
    };
    let cfg = PermutationConfig { m: opts.permutations, seed: opts.seed, alternative };
    let mut r = match opts.method {
        Method::Perm | Method::Both => deptest::permutation_test(y, w, &cfg)?,
        Method::Normal => deptest::normal_test(y, w, alternative)?,
    };
    if opts.method == Method::Perm {
        r.p_normal = None;
    }
    let mut warnings = Vec::new();
    if opts.method != Method::Perm {
        if r.p_normal.is_none() {
            warnings.push(format!("normal approximation unavailable for n = {}; only the permutation p-value is reported", y.len()));
        } else if y.len() < NORMAL_APPROX_MIN_N {
            warnings.push(format!(
                "normal approximation is unreliable for n = {} < {NORMAL_APPROX_MIN_N}; prefer the permutation p-value",
                y.len()
            ));
        }
    }
    let (verdict_from, p_value) = match (r.p_perm, r.p_normal) {
        (Some(p), _) => ("permutation", p),
        (None, Some(p)) => ("normal", p),
        (None, None) => unreachable!("one of the tests always runs"),
    };
    let geary = if opts.geary {
        let g = deptest::geary_permutation_test(y, w, &cfg)?;
        Some(GearyDocument { statistic: g.c_stat, p_perm: g.p_perm, m: g.m_used })
    } else {
        None
    };
    let result = TestResult {
        moran: MoranDocument::new(&r, w.s0()),
        geary,
        regression: None,
        alpha: opts.alpha,
        verdict_from,
        p_value,
        reject: p_value <= opts.alpha,
    };
    Ok((result, warnings))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

fn write_test_text(w: &mut dyn Write, r: &TestResult, warnings: &[String]) -> std::io::Result<()> {
    let m = &r.moran;
    writeln!(w, "Moran's I        {:.6}", m.statistic)?;
    writeln!(w, "null mean        {}", opt(m.mean_null))?;
    writeln!(w, "null variance    {}", opt(m.var_null))?;
    writeln!(w, "standardized I   {}", opt(m.i_std))?;
    writeln!(w, "permutation p    {} (M = {})", opt(m.p_perm), m.m)?;
    writeln!(w, "normal p         {}", opt(m.p_normal))?;
    if let Some(g) = &r.geary {
        writeln!(w, "Geary's c        {:.6} (permutation p {:.6})", g.statistic, g.p_perm)?;
    }
    if let Some(reg) = &r.regression {
        for ((name, b), se) in reg.names.iter().zip(&reg.beta).zip(&reg.se) {
            writeln!(w, "coef {name:<11} {b:.6} (se {se:.6})")?;
        }
    }
    let verdict = if r.reject { "dependence detected" } else { "no dependence detected" };
    writeln!(w, "at alpha = {}: {verdict} ({} p = {:.6})", r.alpha, r.verdict_from, r.p_value)?;
    writeln!(w, "{ALPHA_NOTE}")?;
    for warning in warnings {
        writeln!(w, "warning: {warning}")?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn emit_test(
    command: &str,
    args_doc: &impl Serialize,
    opts: &TestOptions,
    output: &crate::OutputOptions,
    labels: &[String],
    result: TestResult,
    warnings: Vec<String>,
    out: &mut (dyn Write + Send),
) -> Result<(), CliError> {
    for warning in &warnings {
        eprintln!("netdep: warning: {warning}");
    }
    let format = output.format.unwrap_or(Format::Json);
    with_sink(output.out.as_deref(), out, |w| match format {
        Format::Json => {
            let mut doc = Document::new(command, opts.seed, args_doc, &result);
            doc.labels = Some(labels);
            doc.warnings = warnings.clone();
            write_json(w, &doc)
        }
        Format::Csv => {
            let m = &result.moran;
            let row = TestCsvRow {
                statistic: m.statistic,
                i_std: m.i_std,
                mean_null: m.mean_null,
                var_null: m.var_null,
                p_perm: m.p_perm,
                p_normal: m.p_normal,
                m: m.m,
                n: m.n,
                s0: m.s0,
                geary_c: result.geary.as_ref().map(|g| g.statistic),
                geary_p_perm: result.geary.as_ref().map(|g| g.p_perm),
                seed: opts.seed,
                reject: result.reject,
            };
            let mut cw = csv::Writer::from_writer(w);
            cw.serialize(row).map_err(netdep::Error::from)?;
            cw.flush().map_err(|e| CliError::Input(format!("write failed: {e}")))
        }
        Format::Text => write_test_text(w, &result, &warnings).map_err(|e| CliError::Input(format!("write failed: {e}"))),
    })
}

fn test(args: &TestArgs, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let ln = load_network(&args.edges)?;
    let y = in_file(&args.values, nio::read_values(open(&args.values)?, &ln.labels))?;
    let w = args.test.weights.build(&ln.network)?;
    let (result, warnings) = run_tests(&y, &w, &args.test)?;
    emit_test("test", args, &args.test, &args.output, &ln.labels, result, warnings, out)
}

fn residual_test(args: &ResidualArgs, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let ln = load_network(&args.edges)?;
    let y = in_file(&args.values, nio::read_values(open(&args.values)?, &ln.labels))?;
    let design = in_file(&args.design, nio::read_design(open(&args.design)?, &ln.labels, !args.no_intercept))?;
    let fit = inference::ols(&y, &design.matrix, 0.95)?;
    let resid = NodeValues::new(fit.residuals.clone())?;
    let w = args.test.weights.build(&ln.network)?;
    let (mut result, warnings) = run_tests(&resid, &w, &args.test)?;
    result.regression = Some(RegressionSummary { names: design.names.clone(), beta: fit.beta.clone(), se: fit.se.clone() });
    emit_test("residual-test", args, &args.test, &args.output, &ln.labels, result, warnings, out)
}

#[derive(Debug, Serialize)]
struct SimulateResult<'a> {
    values: &'a [f64],
}

fn simulate(args: &SimulateArgs, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let ln = load_network(&args.edges)?;
    let net = &ln.network;
    let y = match args.model {
        SimModel::Transmission => {
            let process = Transmission { rule: args.rule.into(), a: args.a, sigma: args.sigma };
            simulate::direct_transmission(net, &simulate::TransmissionConfig { process, kappa: args.kappa, seed: args.seed })?
        }
        SimModel::Latent => simulate::latent_variable_outcome(
            net,
            &simulate::LatentConfig { length_scale: args.length_scale, noise: args.noise, seed: args.seed },
        )?,
        SimModel::DegreeOutcome => simulate::degree_driven_outcome(net, args.effect, args.noise, args.seed)?,
        SimModel::DegreeCovariate => simulate::degree_confounded_covariate(
            net,
            &simulate::ConfoundConfig { b: args.effect, noise: args.noise, seed: args.seed },
        )?,
    };
    let format = args.output.format.unwrap_or(Format::Csv);
    with_sink(args.output.out.as_deref(), out, |w| match format {
        Format::Json => {
            let mut doc = Document::new("simulate", args.seed, args, SimulateResult { values: y.as_slice() });
            doc.labels = Some(&ln.labels);
            write_json(w, &doc)
        }
        Format::Csv | Format::Text => Ok(nio::write_values(w, &ln.labels, &y)?),
    })
}

fn experiment_network(args: &ExperimentArgs) -> Result<Network, CliError> {
    match &args.edges {
        Some(p) => Ok(load_network(p)?.network),
        None => Ok(exp::default_network(args.n, args.mean_degree, args.network_seed)?),
    }
}

fn with_process(mut p: Transmission, args: &ExperimentArgs) -> Transmission {
    if let Some(a) = args.a {
        p.a = a;
    }
    if let Some(s) = args.sigma {
        p.sigma = s;
    }
    if let Some(r) = args.rule {
        p.rule = r.into();
    }
    p
}

fn run_experiment(name: ExperimentName, net: &Network, args: &ExperimentArgs) -> Result<ExperimentReport, CliError> {
    let mut tests = exp::TestSettings::default();
    if let Some(m) = args.permutations {
        tests.permutations = m;
    }
    let reps = args.reps.unwrap_or(exp::DEFAULT_REPS);
    let keep = args.replicates;
    let report = match name {
        ExperimentName::CorrelationDistribution => {
            let mut c = exp::CorrelationConfig { reps, seed: args.seed, keep_replicates: keep, ..Default::default() };
            if let Some(s) = &args.sigmas {
                c.sigmas = s.clone();
            }
            if let Some(a) = args.a {
                c.a = a;
            }
            if let Some(r) = args.rule {
                c.rule = r.into();
            }
            if let Some(k) = &args.kappas {
                match k.as_slice() {
                    [k] => c.kappa = *k,
                    _ => return Err(CliError::Input("correlation-distribution takes a single --kappas value".into())),
                }
            }
            exp::run_correlation_distribution(net, &c)?
        }
        ExperimentName::Coverage => {
            let mut c = exp::CoverageConfig { reps, seed: args.seed, tests, keep_replicates: keep, ..Default::default() };
            c.process = with_process(c.process, args);
            if let Some(k) = &args.kappas {
                c.kappas = k.clone();
            }
            exp::run_coverage_experiment(net, &c)?
        }
        ExperimentName::SpuriousRegression => {
            let mut c = exp::SpuriousConfig { reps, seed: args.seed, tests, keep_replicates: keep, ..Default::default() };
            c.process = with_process(c.process, args);
            if let Some(k) = &args.kappas {
                c.kappas = k.clone();
            }
            exp::run_spurious_regression_experiment(net, &c)?
        }
        ExperimentName::DegreeConfounding => {
            let mut c = exp::ConfoundingConfig {
                reps,
                seed: args.seed,
                tests,
                keep_replicates: keep,
                control_degree: args.control_degree,
                ..Default::default()
            };
            if let Some(e) = &args.effects {
                c.effects = e.clone();
            }
            exp::run_degree_confounding_experiment(net, &c)?
        }
        ExperimentName::GlsCorrection => {
            let mut c = exp::GlsCorrectionConfig { reps, seed: args.seed, keep_replicates: keep, fit_lmm: !args.no_lmm, ..Default::default() };
            c.process = with_process(c.process, args);
            if let Some(k) = &args.kappas {
                c.kappas = k.clone();
            }
            if let Some(l) = &args.lambdas {
                c.lambdas = l.clone();
            }
            exp::run_gls_correction_experiment(net, &c)?
        }
    };
    Ok(report)
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let mut sink = std::io::sink();
    with_sink(Some(path), &mut sink, f)
}

fn write_summary_table(w: &mut dyn Write, r: &ExperimentReport) -> std::io::Result<()> {
    writeln!(w, "{} (seed {}, {} replicates)", r.experiment, r.master_seed, r.replicates)?;
    writeln!(w, "{:<22} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}", "setting", "coverage", "bias", "mean SE", "SD est", "reject Y", "|rho|>.5")?;
    for s in &r.settings {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        writeln!(
            w,
            "{:<22} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            s.label,
            f(s.coverage),
            f(s.bias),
            f(s.mean_se),
            f(s.sd_estimates),
            f(s.reject_y),
            f(s.frac_abs_correlation_gt_half)
        )?;
    }
    Ok(())
}

fn experiment(args: &ExperimentArgs, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let name: ExperimentName = args.name.parse()?;
    let net = experiment_network(args)?;
    let report = run_experiment(name, &net, args)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
    let mut written = Vec::new();
    match args.format {
        Format::Json => {
            let path = args.out_dir.join(format!("{name}_report.json"));
            write_file(&path, |w| write_json(w, &Document::new("experiment", args.seed, args, &report)))?;
            written.push(path);
        }
        Format::Csv | Format::Text => {
            let path = args.out_dir.join(format!("{name}_report.csv"));
            write_file(&path, |w| Ok(report.write_report_csv(w)?))?;
            written.push(path);
            if args.replicates {
                let path = args.out_dir.join(format!("{name}_replicates.csv"));
                write_file(&path, |w| Ok(report.write_replicates_csv(w)?))?;
                written.push(path);
            }
        }
    }
    let io = |e: std::io::Error| CliError::Input(format!("write failed: {e}"));
    if args.format == Format::Text {
        write_summary_table(out, &report).map_err(io)?;
    }
    for p in written {
        writeln!(out, "{}", p.display()).map_err(io)?;
    }
    Ok(())
}

fn generate_network(args: &GenerateArgs, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let model = match args.model {
        NetworkModelArg::ErdosRenyi => match args.p {
            Some(p) => RandomModel::ErdosRenyi { p },
            None => RandomModel::erdos_renyi_mean_degree(args.n, args.mean_degree),
        },
        NetworkModelArg::SmallWorld => RandomModel::SmallWorld { k: args.k, rewire: args.rewire },
    };
    let net = generate_random_network(args.n, model, args.seed, !args.allow_disconnected)?;
    let isolated = net.degrees().iter().filter(|&&d| d == 0).count();
    if isolated > 0 {
        eprintln!("netdep: warning: {isolated} isolated node(s) cannot appear in an edge list");
    }
    let ln = LabeledNetwork::with_index_labels(net);
    with_sink(args.out.as_deref(), out, |w| Ok(ln.write_edge_list(w)?))
}
