//! Command implementations behind the `cmi` binary.
//!
//! Subcommands:
//! - `estimate`: one estimate from a two-column CSV with an `x,y` header.
//! - `sweep`: Monte-Carlo experiment grids, one CSV record per cell.
//! - `gen`: synthetic samples as CSV.
//! - `genie`: reference SMI / MI values with standard errors.
//!
//! Options can also come from a flat `key = value` file given with
//! `--config`; command-line flags take precedence over the file, which takes
//! precedence over the `CMI_SEED` environment variable.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::analog::{self, FeatureConfig, Method, RealPairedSamples, DEFAULT_ALPHA, DEFAULT_K, DEFAULT_Q};
use crate::discrete::{self, DiscretePairedSamples};
use crate::measures::{mutual_information, smi_exact};
use crate::simulate::{self, GenieConfig, GmmSpec};
use crate::{szego, Estimate};

/// Silverman scale used when neither `--sigma2` nor `--silverman-p` is given.
pub const DEFAULT_SILVERMAN_P: f64 = 0.25;

/// Stream stride between data cells; trial `t` of data cell `c` uses stream
/// `c * STREAM_STRIDE + t`.
pub const STREAM_STRIDE: u64 = 1 << 20;

#[derive(Debug, Parser)]
#[command(name = "cmi", version, about = "Squared-loss mutual information estimation", args_override_self = true)]
pub struct Cli {
    /// Flat `key = value` file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate SMI (or HGR) from a CSV with columns x and y.
    Estimate(EstimateArgs),
    /// Run an experiment plan and write one record per grid cell.
    Sweep(SweepArgs),
    /// Generate synthetic samples.
    Gen(GenArgs),
    /// Genie-aided reference values for the benchmark mixture.
    Genie(GenieArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorKind {
    /// Characteristic-feature estimator with exact whitening.
    Analog,
    /// Fourier-diagonal approximation of the analog estimator.
    Fast,
    /// Plug-in SMI for integer symbol streams.
    Discrete,
    /// Plug-in HGR maximal correlation for integer symbol streams.
    Hgr,
}

impl EstimatorKind {
    fn name(self) -> &'static str {
        match self {
            EstimatorKind::Analog => "analog",
            EstimatorKind::Fast => "fast",
            EstimatorKind::Discrete => "discrete",
            EstimatorKind::Hgr => "hgr",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FeatureArgs {
    /// Smoothing variance; default is the Silverman rule with p = 0.25.
    #[arg(long, conflicts_with = "silverman_p")]
    pub sigma2: Option<f64>,
    /// Silverman scale p in sigma2 = p L^(-2/5).
    #[arg(long)]
    pub silverman_p: Option<f64>,
    /// Frequency sampling period.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Feature dimension N (odd); overrides the k/q rule.
    #[arg(long, conflicts_with_all = ["k", "q"])]
    pub dim: Option<usize>,
    /// Support factor of the dimension rule.
    #[arg(long)]
    pub k: Option<f64>,
    /// Dynamic-range factor of the dimension rule.
    #[arg(long)]
    pub q: Option<f64>,
    /// Use the data as given instead of standardizing it.
    #[arg(long)]
    pub raw: bool,
}

/// How the smoothing variance is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    Sigma2(f64),
    Silverman(f64),
}

impl Smoothing {
    pub fn sigma2(self, samples: usize) -> crate::Result<f64> {
        match self {
            Smoothing::Sigma2(s) => Ok(s),
            Smoothing::Silverman(p) => analog::sigma_from_silverman(p, samples),
        }
    }
}

impl FeatureArgs {
    fn smoothing(&self) -> Smoothing {
        match (self.sigma2, self.silverman_p) {
            (Some(s), _) => Smoothing::Sigma2(s),
            (None, Some(p)) => Smoothing::Silverman(p),
            (None, None) => Smoothing::Silverman(DEFAULT_SILVERMAN_P),
        }
    }

    /// Resolve the feature configuration for a data set.
    pub fn resolve(&self, s: &RealPairedSamples) -> crate::Result<FeatureConfig> {
        let scale = if self.raw { s.max_std() } else { 1.0 };
        feature_config(
            self.smoothing(),
            s.len(),
            self.dim,
            self.alpha,
            self.k.unwrap_or(DEFAULT_K),
            self.q.unwrap_or(DEFAULT_Q),
            scale,
            !self.raw,
        )
    }
}

/// Feature configuration from a smoothing rule, an optional explicit
/// dimension and the source scale (1 for standardized data).
#[allow(clippy::too_many_arguments)]
pub fn feature_config(
    smoothing: Smoothing,
    samples: usize,
    dim: Option<usize>,
    alpha: Option<f64>,
    k: f64,
    q: f64,
    scale: f64,
    standardize: bool,
) -> crate::Result<FeatureConfig> {
    let sigma2 = smoothing.sigma2(samples)?;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut cfg = match dim {
        Some(n) => FeatureConfig::new(sigma2, DEFAULT_ALPHA, n)?,
        None => FeatureConfig::derived(sigma2, k, q, scale)?,
    };
    cfg.k = k;
    cfg.q = q;
    if let Smoothing::Silverman(p) = smoothing {
        cfg.silverman_p = Some(p);
    }
    cfg = cfg.with_alpha(alpha.unwrap_or(DEFAULT_ALPHA / scale))?;
    Ok(cfg.with_standardize(standardize))
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Input CSV with header `x,y` (`-` reads standard input).
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimatorKind::Analog)]
    pub estimator: EstimatorKind,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Subtract the estimate on circularly shifted y.
    #[arg(long)]
    pub bias_reduce: bool,
    /// Circular shift for --bias-reduce (default L/2).
    #[arg(long, requires = "bias_reduce")]
    pub shift: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Experiment plan file (`key = value` lines).
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Built-in scenario, used when no plan file is given or to override it.
    #[arg(long, value_enum)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, env = "CMI_SEED")]
    pub seed: Option<u64>,
    /// Output CSV; existing complete cells are kept and skipped.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Dependence parameter of the uncorrelated two-component mixture.
    #[arg(long, conflicts_with_all = ["smi", "rho"])]
    pub r: Option<f64>,
    /// Target SMI of the uncorrelated two-component mixture.
    #[arg(long, conflicts_with = "rho")]
    pub smi: Option<f64>,
    /// Correlation of a single bivariate normal.
    #[arg(long)]
    pub rho: Option<f64>,
}

impl SourceArgs {
    fn spec(&self) -> crate::Result<GmmSpec> {
        match (self.r, self.smi, self.rho) {
            (Some(r), _, _) => GmmSpec::x_shaped(r),
            (_, Some(s), _) => GmmSpec::x_shaped_with_smi(s),
            (_, _, Some(rho)) => GmmSpec::bivariate_normal(rho),
            _ => GmmSpec::x_shaped(0.0),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Random discrete channel `INPUTS,OUTPUTS` instead of a mixture.
    #[arg(long, value_parser = parse_pair, conflicts_with_all = ["r", "smi", "rho", "noise"])]
    pub channel: Option<(usize, usize)>,
    /// Number of sample pairs.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, env = "CMI_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// Add independent Gaussian noise of this variance to both columns.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenieArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Contamination variance.
    #[arg(long, default_value_t = 0.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_samples: usize,
    #[arg(long, env = "CMI_SEED", default_value_t = 0)]
    pub seed: u64,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected INPUTS,OUTPUTS, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((p(a)?, p(b)?))
}

/// Failure of a command, with the process exit code to use.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn data(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::data(e.to_string())
    }
}

/// Parse a flat `key = value` file. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> std::result::Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Splice config-file entries in front of the user's subcommand flags so the
/// latter win.
fn with_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let entries = parse_key_values(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let commands = ["estimate", "sweep", "gen", "genie"];
    let Some(at) = args.iter().position(|a| commands.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };
    let mut spliced: Vec<OsString> = args[..=at].to_vec();
    for (k, v) in entries {
        let flag = format!("--{}", k.replace('_', "-"));
        match v.as_str() {
            "true" => spliced.push(flag.into()),
            "false" => {}
            _ => spliced.push(format!("{flag}={v}").into()),
        }
    }
    spliced.extend_from_slice(&args[at + 1..]);
    Ok(spliced)
}

/// Entry point used by the binary. Returns the exit code.
pub fn main_with_args(args: Vec<OsString>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let args = match with_config(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return e.code;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    match run(&cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.code
        }
    }
}

pub fn run(command: &Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Estimate(a) => estimate_command(a, stdout, stderr),
        Command::Sweep(a) => sweep_command(a, stdout, stderr),
        Command::Gen(a) => gen_command(a, stdout),
        Command::Genie(a) => genie_command(a, stdout),
    }
}

fn open_input(path: &Path) -> Result<Box<dyn Read>, CliError> {
    if path.as_os_str() == "-" {
        Ok(Box::new(io::stdin()))
    } else {
        File::open(path)
            .map(|f| Box::new(BufReader::new(f)) as Box<dyn Read>)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }
}

/// Read the `x` and `y` columns of a headed CSV, parsing each cell as `T`.
pub fn read_columns<T: FromStr>(input: impl Read) -> Result<(Vec<T>, Vec<T>), CliError>
where
    T::Err: fmt::Display,
{
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| CliError::data(format!("input has no `{name}` column")))
    };
    let (ix, iy) = (col("x")?, col("y")?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let cell = |i: usize, name: &str| -> Result<T, CliError> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse::<T>().map_err(|e| CliError::data(format!("line {line}: column {name}: `{raw}`: {e}")))
        };
        xs.push(cell(ix, "x")?);
        ys.push(cell(iy, "y")?);
    }
    Ok((xs, ys))
}

fn fmt_opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn report_warnings(e: &Estimate, stderr: &mut dyn Write) {
    for w in &e.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
}

pub fn estimate_command(a: &EstimateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let input = open_input(&a.input)?;
    let (est, dim, sigma2, alpha, samples) = match a.estimator {
        EstimatorKind::Discrete | EstimatorKind::Hgr => {
            if a.bias_reduce {
                return Err(CliError::usage("--bias-reduce applies to the analog estimators only"));
            }
            let (x, y) = read_columns::<usize>(input)?;
            let s = DiscretePairedSamples::with_inferred_alphabets(x, y)?;
            let est = if a.estimator == EstimatorKind::Discrete {
                discrete::smi_plugin_simplex(&s)?
            } else {
                discrete::hgr_plugin(&s)?
            };
            (est, None, None, None, s.len())
        }
        EstimatorKind::Analog | EstimatorKind::Fast => {
            let (x, y) = read_columns::<f64>(input)?;
            let s = RealPairedSamples::new(x, y)?;
            let cfg = a.features.resolve(&s)?;
            let method = if a.estimator == EstimatorKind::Fast { Method::Fast } else { Method::Exact };
            let shift = a.bias_reduce.then(|| a.shift.unwrap_or_else(|| analog::default_shift(s.len())));
            let est = analog::estimate(&s, &cfg, method, shift)?;
            (est, Some(cfg.dim), Some(cfg.sigma2), Some(cfg.alpha), s.len())
        }
    };
    report_warnings(&est, stderr);
    let name = if a.bias_reduce { format!("{}_bias_reduced", a.estimator.name()) } else { a.estimator.name().to_string() };
    let mut w = csv::Writer::from_writer(stdout);
    w.write_record(["estimator", "value", "N", "sigma2", "alpha", "L"])?;
    w.write_record([name, est.value.to_string(), fmt_opt(dim), fmt_opt(sigma2), fmt_opt(alpha), samples.to_string()])?;
    w.flush()?;
    Ok(())
}

fn write_samples<T: fmt::Display>(x: &[T], y: &[T], out: &mut dyn Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y"])?;
    for (a, b) in x.iter().zip(y) {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn gen_command(a: &GenArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut file;
    let out: &mut dyn Write = match &a.out {
        Some(p) => {
            file = io::BufWriter::new(File::create(p)?);
            &mut file
        }
        None => stdout,
    };
    if let Some((inputs, outputs)) = a.channel {
        let spec = simulate::random_dmc_stream(inputs, outputs, a.seed, a.stream)?;
        let s = simulate::sample_joint(&spec.joint(), a.samples, a.seed, a.stream + STREAM_STRIDE / 2);
        return write_samples(s.x(), s.y(), out);
    }
    let spec = a.source.spec()?;
    let mut s = simulate::gmm_sample_stream(&spec, a.samples, a.seed, a.stream);
    if let Some(v) = a.noise {
        s = simulate::contaminate(&s, v, a.seed, a.stream + STREAM_STRIDE / 2);
    }
    write_samples(s.x(), s.y(), out)
}

pub fn genie_command(a: &GenieArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let spec = a.source.spec()?;
    let cfg = GenieConfig::new(a.mc_samples, a.seed, a.sigma2)?;
    let run = simulate::genie(&spec, &cfg);
    let mut w = csv::Writer::from_writer(stdout);
    w.write_record(["quantity", "value", "std_error", "samples"])?;
    for (name, e) in [("smi", run.smi), ("mi", run.mi), ("half_smi_over_mi", run.half_ratio)] {
        w.write_record([name.to_string(), e.value.to_string(), e.std_error.to_string(), e.samples.to_string()])?;
    }
    w.write_record(["smi_closed_form".to_string(), spec.smi_closed_form(a.sigma2).to_string(), "0".into(), "0".into()])?;
    if let Some(mi) = spec.mi_closed_form(a.sigma2) {
        w.write_record(["mi_closed_form".to_string(), mi.to_string(), "0".into(), "0".into()])?;
    }
    w.flush()?;
    Ok(())
}

/// Built-in experiment scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// SMI versus MI on random discrete channels.
    Fig3,
    /// Estimator mean versus true SMI.
    Fig5,
    /// Bias and variance versus data size under the Silverman rule.
    Fig6,
    /// Fast versus exact estimator over the feature dimension.
    Fig8,
    /// Grids taken entirely from the plan file.
    Custom,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig3 => "fig3",
            Scenario::Fig5 => "fig5",
            Scenario::Fig6 => "fig6",
            Scenario::Fig8 => "fig8",
            Scenario::Custom => "custom",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Scenario as ValueEnum>::from_str(s, true)
    }
}

/// Estimators available to sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepEstimator {
    Analog,
    Fast,
    BiasReduced,
    BiasReducedFast,
    /// `|fast - analog|` per trial.
    FastGap,
    /// Plug-in SMI on symbols drawn from a channel.
    Discrete,
}

impl SweepEstimator {
    pub fn name(self) -> &'static str {
        match self {
            SweepEstimator::Analog => "analog",
            SweepEstimator::Fast => "fast",
            SweepEstimator::BiasReduced => "bias_reduced",
            SweepEstimator::BiasReducedFast => "bias_reduced_fast",
            SweepEstimator::FastGap => "fast_gap",
            SweepEstimator::Discrete => "discrete",
        }
    }
}

impl FromStr for SweepEstimator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "analog" => SweepEstimator::Analog,
            "fast" => SweepEstimator::Fast,
            "bias_reduced" => SweepEstimator::BiasReduced,
            "bias_reduced_fast" => SweepEstimator::BiasReducedFast,
            "fast_gap" => SweepEstimator::FastGap,
            "discrete" => SweepEstimator::Discrete,
            _ => return Err(format!("unknown estimator `{s}`")),
        })
    }
}

/// Grid of Monte-Carlo cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub scenario: Scenario,
    /// Target SMI values of the uncorrelated mixture.
    pub smi_targets: Vec<f64>,
    /// Data sizes `L`.
    pub samples: Vec<usize>,
    pub smoothing: Vec<Smoothing>,
    /// Explicit feature dimensions; empty means the k/q rule.
    pub dims: Vec<usize>,
    pub estimators: Vec<SweepEstimator>,
    pub trials: usize,
    pub seed: u64,
    pub alpha: f64,
    pub k: f64,
    pub q: f64,
    /// Monte-Carlo draws for genie MI.
    pub genie_samples: usize,
    /// Random channels (fig3).
    pub channels: usize,
    pub channel_size: (usize, usize),
    pub output: Option<PathBuf>,
}

impl ExperimentPlan {
    pub fn preset(scenario: Scenario) -> Self {
        let base = Self {
            scenario,
            smi_targets: vec![0.1],
            samples: vec![1000],
            smoothing: vec![Smoothing::Sigma2(0.1)],
            dims: Vec::new(),
            estimators: vec![SweepEstimator::Analog],
            trials: 10,
            seed: 0,
            alpha: DEFAULT_ALPHA,
            k: DEFAULT_K,
            q: DEFAULT_Q,
            genie_samples: 200_000,
            channels: 0,
            channel_size: (4, 4),
            output: None,
        };
        match scenario {
            Scenario::Fig3 => Self {
                samples: vec![10_000],
                estimators: vec![SweepEstimator::Discrete],
                trials: 5,
                channels: 100,
                ..base
            },
            Scenario::Fig5 => Self {
                smi_targets: vec![0.0, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
                samples: vec![1000, 10_000],
                smoothing: vec![Smoothing::Sigma2(0.1), Smoothing::Sigma2(0.4)],
                estimators: vec![SweepEstimator::Analog, SweepEstimator::BiasReduced],
                trials: 20,
                ..base
            },
            Scenario::Fig6 => Self {
                smi_targets: vec![0.5],
                samples: vec![250, 500, 1000, 2000, 4000],
                smoothing: vec![Smoothing::Silverman(DEFAULT_SILVERMAN_P)],
                estimators: vec![SweepEstimator::Analog, SweepEstimator::BiasReduced],
                trials: 50,
                ..base
            },
            Scenario::Fig8 => Self {
                smi_targets: vec![0.5],
                samples: vec![10_000],
                smoothing: vec![Smoothing::Sigma2(0.4)],
                dims: vec![17, 31, 61],
                estimators: vec![SweepEstimator::Analog, SweepEstimator::Fast, SweepEstimator::FastGap],
                trials: 5,
                ..base
            },
            Scenario::Custom => base,
        }
    }

    /// Plan from `key = value` text. A `scenario` key selects the preset the
    /// remaining keys override.
    pub fn parse(text: &str) -> Result<Self, String> {
        let entries = parse_key_values(text)?;
        let scenario = entries
            .iter()
            .find(|(k, _)| k == "scenario")
            .map(|(_, v)| v.parse::<Scenario>())
            .transpose()?
            .unwrap_or(Scenario::Custom);
        let mut plan = Self::preset(scenario);
        for (k, v) in &entries {
            plan.set(k, v)?;
        }
        plan.validate()?;
        Ok(plan)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, String>
        where
            T::Err: fmt::Display,
        {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<T>().map_err(|e| format!("{key}: `{s}`: {e}")))
                .collect()
        }
        fn one<T: FromStr>(key: &str, v: &str) -> Result<T, String>
        where
            T::Err: fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("{key}: `{v}`: {e}"))
        }
        match key {
            "scenario" => {}
            "smi" | "smi_targets" => self.smi_targets = list(key, value)?,
            "r" => {
                self.smi_targets = list::<f64>(key, value)?.into_iter().map(|r| r.powi(4) / (1.0 - r.powi(4))).collect()
            }
            "samples" | "L" => self.samples = list(key, value)?,
            "sigma2" => self.smoothing = list::<f64>(key, value)?.into_iter().map(Smoothing::Sigma2).collect(),
            "silverman_p" | "p" => {
                self.smoothing = list::<f64>(key, value)?.into_iter().map(Smoothing::Silverman).collect()
            }
            "dim" | "dims" | "N" => self.dims = list(key, value)?,
            "estimators" | "estimator" => self.estimators = list(key, value)?,
            "trials" => self.trials = one(key, value)?,
            "seed" => self.seed = one(key, value)?,
            "alpha" => self.alpha = one(key, value)?,
            "k" => self.k = one(key, value)?,
            "q" => self.q = one(key, value)?,
            "genie_samples" => self.genie_samples = one(key, value)?,
            "channels" => self.channels = one(key, value)?,
            "channel_size" => self.channel_size = parse_pair(value)?,
            "out" | "output" => self.output = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown plan key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.trials == 0 {
            return Err("trials must be >= 1".into());
        }
        if self.samples.is_empty() || self.estimators.is_empty() {
            return Err("samples and estimators must be non-empty".into());
        }
        if self.scenario == Scenario::Fig3 {
            if self.channels == 0 {
                return Err("channels must be >= 1".into());
            }
        } else if self.smi_targets.is_empty() || self.smoothing.is_empty() {
            return Err("smi targets and smoothing grids must be non-empty".into());
        }
        if self.genie_samples < 2 {
            return Err("genie_samples must be >= 2".into());
        }
        Ok(())
    }

    /// Cells in plan order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        if self.scenario == Scenario::Fig3 {
            for ch in 0..self.channels {
                for (li, &l) in self.samples.iter().enumerate() {
                    for &e in &self.estimators {
                        cells.push(Cell {
                            index: cells.len(),
                            data_index: ch * self.samples.len() + li,
                            channel: Some(ch),
                            smi_target: None,
                            samples: l,
                            smoothing: None,
                            dim: None,
                            estimator: e,
                        });
                    }
                }
            }
            return cells;
        }
        let dims: Vec<Option<usize>> = if self.dims.is_empty() { vec![None] } else { self.dims.iter().map(|&d| Some(d)).collect() };
        for (ti, &t) in self.smi_targets.iter().enumerate() {
            for (li, &l) in self.samples.iter().enumerate() {
                for &sm in &self.smoothing {
                    for &d in &dims {
                        for &e in &self.estimators {
                            cells.push(Cell {
                                index: cells.len(),
                                data_index: ti * self.samples.len() + li,
                                channel: None,
                                smi_target: Some(t),
                                samples: l,
                                smoothing: Some(sm),
                                dim: d,
                                estimator: e,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

/// One grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    /// Index of the data-defining parameters; trials of every cell sharing it
    /// see the same samples.
    pub data_index: usize,
    pub channel: Option<usize>,
    pub smi_target: Option<f64>,
    pub samples: usize,
    pub smoothing: Option<Smoothing>,
    pub dim: Option<usize>,
    pub estimator: SweepEstimator,
}

impl Cell {
    /// Substream of trial `t`.
    pub fn stream(&self, trial: usize) -> u64 {
        self.data_index as u64 * STREAM_STRIDE + trial as u64
    }
}

/// Summary of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub scenario: Scenario,
    pub cell: usize,
    pub channel: Option<usize>,
    pub smi_target: Option<f64>,
    pub r: Option<f64>,
    pub samples: usize,
    pub sigma2: Option<f64>,
    pub silverman_p: Option<f64>,
    pub dim: Option<usize>,
    pub estimator: &'static str,
    pub mean: f64,
    pub variance: f64,
    pub normalized_bias: f64,
    pub normalized_variance: f64,
    /// Reference SMI of the clean source.
    pub genie_smi: f64,
    /// Reference SMI after Gaussian contamination with `sigma2`.
    pub genie_smi_contaminated: Option<f64>,
    pub genie_mi: f64,
    pub genie_mi_se: f64,
    pub trials: usize,
}

pub const RECORD_HEADER: [&str; 19] = [
    "scenario",
    "cell",
    "channel",
    "smi_target",
    "r",
    "L",
    "sigma2",
    "silverman_p",
    "N",
    "estimator",
    "mean",
    "variance",
    "normalized_bias",
    "normalized_variance",
    "genie_smi",
    "genie_smi_contaminated",
    "genie_mi",
    "genie_mi_se",
    "trials",
];

impl ResultRecord {
    fn fields(&self) -> Vec<String> {
        vec![
            self.scenario.name().to_string(),
            self.cell.to_string(),
            fmt_opt(self.channel),
            fmt_opt(self.smi_target),
            fmt_opt(self.r),
            self.samples.to_string(),
            fmt_opt(self.sigma2),
            fmt_opt(self.silverman_p),
            fmt_opt(self.dim),
            self.estimator.to_string(),
            self.mean.to_string(),
            self.variance.to_string(),
            self.normalized_bias.to_string(),
            self.normalized_variance.to_string(),
            self.genie_smi.to_string(),
            fmt_opt(self.genie_smi_contaminated),
            self.genie_mi.to_string(),
            self.genie_mi_se.to_string(),
            self.trials.to_string(),
        ]
    }
}

fn mean_variance(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var)
}

fn normalized(mean: f64, var: f64, genie: f64) -> (f64, f64) {
    if genie > 0.0 {
        ((mean - genie) / genie, var / (genie * genie))
    } else {
        (f64::NAN, f64::NAN)
    }
}

fn analog_trial(plan: &ExperimentPlan, cell: &Cell, s: &RealPairedSamples) -> crate::Result<f64> {
    let cfg = feature_config(cell.smoothing.expect("mixture cell"), s.len(), cell.dim, Some(plan.alpha), plan.k, plan.q, 1.0, true)?;
    let shift = analog::default_shift(s.len());
    Ok(match cell.estimator {
        SweepEstimator::Analog => analog::smi_analog(s, &cfg)?.value,
        SweepEstimator::Fast => szego::smi_analog_fast(s, &cfg)?.value,
        SweepEstimator::BiasReduced => analog::smi_bias_reduced_with(s, &cfg, shift, Method::Exact)?.value,
        SweepEstimator::BiasReducedFast => analog::smi_bias_reduced_with(s, &cfg, shift, Method::Fast)?.value,
        SweepEstimator::FastGap => {
            let stats = analog::compute_feature_stats(s, &cfg)?;
            (szego::smi_fast_from_stats(&stats).value - analog::smi_from_stats(&stats).value).abs()
        }
        SweepEstimator::Discrete => {
            return Err(crate::Error::InvalidParameter("the discrete estimator needs the fig3 scenario".into()))
        }
    })
}

/// Evaluate one cell.
pub fn run_cell(plan: &ExperimentPlan, cell: &Cell) -> crate::Result<ResultRecord> {
    let trials: Vec<crate::Result<f64>>;
    let (genie_smi, contaminated, genie_mi, genie_mi_se, r, sigma2, p);
    if let Some(ch) = cell.channel {
        let (ni, no) = plan.channel_size;
        let spec = simulate::random_dmc_stream(ni, no, plan.seed, ch as u64)?;
        let j = spec.joint();
        genie_smi = smi_exact(&j)?;
        genie_mi = mutual_information(&j)?;
        genie_mi_se = 0.0;
        contaminated = None;
        (r, sigma2, p) = (None, None, None);
        trials = (0..plan.trials)
            .into_par_iter()
            .map(|t| {
                let s = simulate::sample_joint(&j, cell.samples, plan.seed, cell.stream(t) + STREAM_STRIDE / 2);
                match cell.estimator {
                    SweepEstimator::Discrete => discrete::smi_plugin_simplex(&s).map(|e| e.value),
                    _ => Err(crate::Error::InvalidParameter("fig3 cells take the discrete estimator".into())),
                }
            })
            .collect();
    } else {
        let target = cell.smi_target.expect("mixture cell");
        let spec = GmmSpec::x_shaped_with_smi(target)?;
        let smoothing = cell.smoothing.expect("mixture cell");
        let s2 = smoothing.sigma2(cell.samples)?;
        genie_smi = spec.smi_closed_form(0.0);
        contaminated = Some(spec.smi_closed_form(s2));
        let g = simulate::genie_mi(&spec, &GenieConfig::new(plan.genie_samples, plan.seed, 0.0)?);
        genie_mi = g.value;
        genie_mi_se = g.std_error;
        r = Some(spec.components()[0].rho);
        sigma2 = Some(s2);
        p = match smoothing {
            Smoothing::Silverman(p) => Some(p),
            Smoothing::Sigma2(_) => None,
        };
        trials = (0..plan.trials)
            .into_par_iter()
            .map(|t| {
                let s = simulate::gmm_sample_stream(&spec, cell.samples, plan.seed, cell.stream(t));
                analog_trial(plan, cell, &s)
            })
            .collect();
    }
    let values = trials.into_iter().collect::<crate::Result<Vec<f64>>>()?;
    let (mean, variance) = mean_variance(&values);
    let reference = match cell.estimator {
        SweepEstimator::FastGap => 0.0,
        _ => genie_smi,
    };
    let (normalized_bias, normalized_variance) = normalized(mean, variance, reference);
    let dim = match (cell.dim, sigma2) {
        (Some(d), _) => Some(d),
        (None, Some(s2)) => Some(analog::dimension_from_sigma(plan.k, plan.q, 1.0, s2.sqrt())?),
        _ => None,
    };
    Ok(ResultRecord {
        scenario: plan.scenario,
        cell: cell.index,
        channel: cell.channel,
        smi_target: cell.smi_target,
        r,
        samples: cell.samples,
        sigma2,
        silverman_p: p,
        dim,
        estimator: cell.estimator.name(),
        mean,
        variance,
        normalized_bias,
        normalized_variance,
        genie_smi,
        genie_smi_contaminated: contaminated,
        genie_mi,
        genie_mi_se,
        trials: plan.trials,
    })
}

/// Cells already present in an output file.
fn completed_cells(path: &Path) -> io::Result<HashSet<usize>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(HashSet::new()),
        Err(e) => return Err(e),
    };
    let mut done = HashSet::new();
    for line in BufReader::new(file).lines().skip(1) {
        let line = line?;
        // records are only ever appended whole; a truncated last line has too
        // few fields and is ignored
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() == RECORD_HEADER.len() {
            if let Ok(c) = fields[1].parse() {
                done.insert(c);
            }
        }
    }
    Ok(done)
}

fn truncate_partial_line(path: &Path) -> io::Result<()> {
    let Ok(bytes) = std::fs::read(path) else { return Ok(()) };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map(|i| i + 1).unwrap_or(0);
    OpenOptions::new().write(true).open(path)?.set_len(keep as u64)
}

fn record_line(rec: &ResultRecord) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(rec.fields())?;
    w.into_inner().map_err(|e| CliError::data(e.to_string()))
}

fn header_line() -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORD_HEADER)?;
    w.into_inner().map_err(|e| CliError::data(e.to_string()))
}

/// Run a plan, writing records in plan order. With an output path, each
/// record is flushed as soon as its cell finishes and cells already present
/// are skipped.
pub fn run_plan(plan: &ExperimentPlan, out: &mut dyn Write, resume: &HashSet<usize>, write_header: bool, stderr: &mut dyn Write) -> Result<usize, CliError> {
    if write_header {
        out.write_all(&header_line()?)?;
        out.flush()?;
    }
    let mut failures = 0;
    for cell in plan.cells() {
        if resume.contains(&cell.index) {
            continue;
        }
        let written = run_cell(plan, &cell)
            .map_err(CliError::from)
            .and_then(|rec| record_line(&rec))
            .and_then(|line| {
                out.write_all(&line)?;
                out.flush()?;
                Ok(())
            });
        if let Err(e) = written {
            failures += 1;
            let _ = writeln!(stderr, "cell {}: {e}", cell.index);
        }
    }
    Ok(failures)
}

pub fn sweep_command(a: &SweepArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let mut plan = match (&a.plan, a.scenario) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            ExperimentPlan::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        (None, Some(s)) => ExperimentPlan::preset(s),
        (None, None) => return Err(CliError::usage("sweep needs --plan or --scenario")),
    };
    if let (Some(_), Some(s)) = (&a.plan, a.scenario) {
        plan.scenario = s;
    }
    if let Some(t) = a.trials {
        plan.trials = t;
    }
    if let Some(s) = a.seed {
        plan.seed = s;
    }
    if let Some(o) = &a.out {
        plan.output = Some(o.clone());
    }
    plan.validate().map_err(CliError::usage)?;
    let failures = match &plan.output {
        Some(path) => {
            truncate_partial_line(path)?;
            let done = completed_cells(path)?;
            let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            run_plan(&plan, &mut file, &done, fresh, stderr)?
        }
        None => run_plan(&plan, stdout, &HashSet::new(), true, stderr)?,
    };
    if failures > 0 {
        return Err(CliError::data(format!("{failures} cell(s) failed")));
    }
    Ok(())
}
