//! The `netdep` command-line tool.
//!
//! Exit codes: 0 success, 2 input error, 3 degenerate statistic (constant
//! values, a network without ties, ...), 4 numeric failure.

mod commands;
mod output;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netdep::deptest::DEFAULT_PERMUTATIONS;
use netdep::graph::{Network, WeightMatrix};
use netdep::simulate::TransmissionRule;
use serde::Serialize;

pub use output::OUTPUT_SCHEMA_VERSION;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(clap::Error),
    Input(String),
    Lib(netdep::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(e) => e.exit_code(),
            CliError::Input(_) => EXIT_INPUT,
            CliError::Lib(e) if e.is_degenerate() => EXIT_DEGENERATE,
            CliError::Lib(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Lib(_) => EXIT_INPUT,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(e) => write!(f, "{e}"),
            CliError::Input(msg) => f.write_str(msg),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<netdep::Error> for CliError {
    fn from(e: netdep::Error) -> Self {
        CliError::Lib(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "netdep", version, about = "Tests for network dependence, and simulations of what it does to naive inference")]
pub struct Cli {
    /// Worker threads; never changes results. Falls back to NETDEP_THREADS.
    #[arg(long, global = true, env = "NETDEP_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Moran's I (optionally Geary's c) for node values on a network.
    Test(TestArgs),
    /// Moran's I on the OLS residuals of the values regressed on a design.
    ResidualTest(ResidualArgs),
    /// Draw node values from one of the dependence generators.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo study and write its report.
    Experiment(ExperimentArgs),
    /// Draw a random network and write it as an edge list.
    GenerateNetwork(GenerateArgs),
}

/// `adjacency`, or `inverse-geodesic[:gamma]` for `w_ij = d(i,j)^-gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSpec {
    Adjacency,
    InverseGeodesic(f64),
}

impl WeightSpec {
    pub fn build(&self, net: &Network) -> netdep::Result<WeightMatrix> {
        match *self {
            WeightSpec::Adjacency => WeightMatrix::adjacency(net),
            WeightSpec::InverseGeodesic(g) => WeightMatrix::inverse_geodesic(net, g),
        }
    }
}

impl FromStr for WeightSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "adjacency" => Ok(WeightSpec::Adjacency),
            None if s == "inverse-geodesic" => Ok(WeightSpec::InverseGeodesic(1.0)),
            Some(("inverse-geodesic", g)) => match g.parse::<f64>() {
                Ok(g) if g.is_finite() && g > 0.0 => Ok(WeightSpec::InverseGeodesic(g)),
                _ => Err(format!("gamma must be a positive number, got `{g}`")),
            },
            _ => Err(format!("expected `adjacency` or `inverse-geodesic[:gamma]`, got `{s}`")),
        }
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Adjacency => f.write_str("adjacency"),
            WeightSpec::InverseGeodesic(g) => write!(f, "inverse-geodesic:{g}"),
        }
    }
}

impl Serialize for WeightSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Perm,
    Normal,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlternativeArg {
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleArg {
    NeighborMean,
    NeighborSum,
}

impl From<RuleArg> for TransmissionRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::NeighborMean => TransmissionRule::NeighborMean,
            RuleArg::NeighborSum => TransmissionRule::NeighborSum,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TestOptions {
    /// Weight matrix: adjacency or inverse-geodesic[:gamma].
    #[arg(long, default_value = "adjacency")]
    pub weights: WeightSpec,
    #[arg(long, value_enum, default_value_t = Method::Perm)]
    pub method: Method,
    /// Number of random relabelings for the permutation p-value.
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = AlternativeArg::Greater)]
    pub alternative: AlternativeArg,
    /// Also report Geary's c with its own permutation p-value.
    #[arg(long)]
    pub geary: bool,
    /// Threshold used for the reported verdict.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputOptions {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TestArgs {
    /// Edge list CSV with header `src,dst`.
    #[arg(long)]
    pub edges: PathBuf,
    /// Values CSV with header `node,value`.
    #[arg(long)]
    pub values: PathBuf,
    #[command(flatten)]
    pub test: TestOptions,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputOptions,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ResidualArgs {
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long)]
    pub values: PathBuf,
    /// Covariates CSV; a leading `node` column aligns rows by label.
    #[arg(long)]
    pub design: PathBuf,
    /// Do not add an intercept column.
    #[arg(long)]
    pub no_intercept: bool,
    #[command(flatten)]
    pub test: TestOptions,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimModel {
    /// Repeated mixing with neighbors plus fresh noise.
    Transmission,
    /// Geodesically smoothed latent traits plus noise.
    Latent,
    /// Outcome proportional to standardized degree plus noise.
    DegreeOutcome,
    /// Covariate whose mean rises with degree.
    DegreeCovariate,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long, value_enum, default_value_t = SimModel::Transmission)]
    pub model: SimModel,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Transmission: weight on the neighbor term.
    #[arg(long, default_value_t = 0.5)]
    pub a: f64,
    /// Transmission: per-step noise scale.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Transmission: number of steps.
    #[arg(long, default_value_t = 3)]
    pub kappa: usize,
    #[arg(long, value_enum, default_value_t = RuleArg::NeighborMean)]
    pub rule: RuleArg,
    /// Latent: geodesic decay length.
    #[arg(long, default_value_t = 1.0)]
    pub length_scale: f64,
    /// Latent and degree models: noise scale.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    /// Degree models: effect of standardized degree.
    #[arg(long, default_value_t = 1.0)]
    pub effect: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputOptions,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentArgs {
    /// correlation-distribution, coverage, spurious-regression,
    /// degree-confounding or gls-correction.
    pub name: String,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Use this network instead of generating one.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long, default_value_t = netdep::experiments::DEFAULT_N)]
    pub n: usize,
    #[arg(long, default_value_t = netdep::experiments::DEFAULT_MEAN_DEGREE)]
    pub mean_degree: f64,
    #[arg(long, default_value_t = netdep::experiments::DEFAULT_NETWORK_SEED)]
    pub network_seed: u64,
    /// Override the transmission neighbor weight.
    #[arg(long)]
    pub a: Option<f64>,
    /// Override the transmission noise scale.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
    #[arg(long, value_delimiter = ',')]
    pub kappas: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Correlation study: per-step noise scales.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// Confounding study: degree effects on the covariate.
    #[arg(long, value_delimiter = ',')]
    pub effects: Option<Vec<f64>>,
    /// Confounding study: add standardized degree to the regression.
    #[arg(long)]
    pub control_degree: bool,
    /// Correction study: skip the mixed-model fit.
    #[arg(long)]
    pub no_lmm: bool,
    /// Also write per-replicate values.
    #[arg(long)]
    pub replicates: bool,
    /// Directory for the report files.
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    #[serde(skip)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkModelArg {
    ErdosRenyi,
    SmallWorld,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = NetworkModelArg::ErdosRenyi)]
    pub model: NetworkModelArg,
    /// Erdős–Rényi expected degree (ignored when --p is given).
    #[arg(long, default_value_t = netdep::experiments::DEFAULT_MEAN_DEGREE)]
    pub mean_degree: f64,
    /// Erdős–Rényi tie probability.
    #[arg(long)]
    pub p: Option<f64>,
    /// Small-world lattice degree (even).
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Small-world rewiring probability.
    #[arg(long, default_value_t = 0.1)]
    pub rewire: f64,
    #[arg(long, default_value_t = netdep::experiments::DEFAULT_NETWORK_SEED)]
    pub seed: u64,
    /// Accept a disconnected draw (isolated nodes are lost from the edge list).
    #[arg(long)]
    pub allow_disconnected: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command,
/// writing primary output to `out` unless `--out` redirects it.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send)) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(CliError::Usage)?;
    match cli.threads {
        Some(0) => Err(CliError::Input("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Input(format!("cannot start thread pool: {e}")))?
            .install(|| commands::dispatch(&cli.command, out)),
        None => commands::dispatch(&cli.command, out),
    }
}

/// Runs the tool against the real standard output and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut stdout = std::io::stdout();
    match run(args, &mut stdout) {
        Ok(()) => 0,
        Err(CliError::Usage(e)) => {
            let _ = e.print();
            e.exit_code()
        }
        Err(e) => {
            eprintln!("netdep: error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_spec_parses_and_prints() {
        assert_eq!("adjacency".parse(), Ok(WeightSpec::Adjacency));
        assert_eq!("inverse-geodesic".parse(), Ok(WeightSpec::InverseGeodesic(1.0)));
        assert_eq!("inverse-geodesic:2.5".parse(), Ok(WeightSpec::InverseGeodesic(2.5)));
        for bad in ["", "geodesic", "inverse-geodesic:0", "inverse-geodesic:x", "adjacency:1"] {
            assert!(bad.parse::<WeightSpec>().is_err(), "{bad}");
        }
        assert_eq!(WeightSpec::InverseGeodesic(2.5).to_string(), "inverse-geodesic:2.5");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
