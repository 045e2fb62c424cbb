//! Subcommands and their exit-code contract: 0 success, 2 configuration
//! error, 3 data error, 4 numerical failure.

use std::fmt::Display;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use medmi_core::datagen::{generate_complete, impose_missingness, DatagenError, MdagLabel};
use medmi_core::impute::{impute, ImputeError, MethodKind, MissingMethod};
use medmi_core::mediation::{EstimatorKind, MediationError};
use medmi_core::simstudy::{compute_metrics, SimError, TruthValues};
use medmi_core::variance::{analyze, Analysis, Estimand, VarianceApproach, VarianceError};
use medmi_core::{Dataset, StreamSeed};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, Overrides, RunConfig};
use crate::io::{self, IoError};
use crate::report;
use crate::runner::run_scenario;
use crate::truth::{cached_truth, TruthError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Config,
    Data,
    Numerical,
}

impl Failure {
    pub fn code(self) -> i32 {
        match self {
            Failure::Config => 2,
            Failure::Data => 3,
            Failure::Numerical => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Failure,
    pub message: String,
}

impl CliError {
    fn new(kind: Failure, message: impl Display) -> Self {
        CliError { kind, message: message.to_string() }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new(Failure::Config, e)
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::new(Failure::Data, e)
    }
}

fn impute_kind(e: &ImputeError) -> Failure {
    match e {
        ImputeError::InvalidPairing { .. } | ImputeError::NotImputation(_) | ImputeError::InvalidSetting(_) => {
            Failure::Config
        }
        ImputeError::NoCompleteCases | ImputeError::AllMissing(_) | ImputeError::Unimputable(_) | ImputeError::Data(_) => {
            Failure::Data
        }
        ImputeError::NotConverged { .. } | ImputeError::Glm(_) => Failure::Numerical,
    }
}

fn mediation_kind(e: &MediationError) -> Failure {
    match e {
        MediationError::InvalidSpec(_) => Failure::Config,
        MediationError::Data(_) | MediationError::EmptyExposureGroup(_) => Failure::Data,
        _ => Failure::Numerical,
    }
}

impl From<VarianceError> for CliError {
    fn from(e: VarianceError) -> Self {
        let kind = match &e {
            VarianceError::TooFew { .. } | VarianceError::InvalidApproach { .. } => Failure::Config,
            VarianceError::Impute(i) => impute_kind(i),
            VarianceError::Mediation(m) => mediation_kind(m),
            VarianceError::TooManyFailures { .. } | VarianceError::LengthMismatch(..) => Failure::Numerical,
        };
        CliError::new(kind, e)
    }
}

impl From<DatagenError> for CliError {
    fn from(e: DatagenError) -> Self {
        let kind = match e {
            DatagenError::Unbracketed { .. } => Failure::Numerical,
            _ => Failure::Config,
        };
        CliError::new(kind, e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let kind = match &e {
            SimError::InvalidConfig(_) => Failure::Config,
            SimError::Empty => Failure::Data,
            SimError::TooManyFailures { .. } | SimError::InsufficientReps(_) => Failure::Numerical,
            SimError::Datagen(d) => return d.clone().into(),
            SimError::Mediation(m) => mediation_kind(m),
        };
        CliError::new(kind, e)
    }
}

impl From<TruthError> for CliError {
    fn from(e: TruthError) -> Self {
        match e {
            TruthError::Io(e) => e.into(),
            TruthError::Sim(e) => e.into(),
        }
    }
}

fn parse<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "medmi", version, about = "Interventional mediation effects with incomplete binary data")]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

/// Shared flags; each overrides the matching config-file key.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed [scenario.base_seed].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads, 0 for all cores [scenario.threads].
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Existing output directory [out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Replications [scenario.reps].
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Rows per dataset [scenario.n].
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Missingness mechanism A..F [scenario.mdag].
    #[arg(long, global = true, value_parser = parse::<MdagLabel>)]
    pub mdag: Option<MdagLabel>,
    /// Comma-separated missing-data methods [scenario.methods].
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse::<MethodKind>)]
    pub method: Option<Vec<MethodKind>>,
    /// dr or mc [scenario.estimator].
    #[arg(long, global = true, value_parser = parse::<EstimatorKind>)]
    pub estimator: Option<EstimatorKind>,
    /// Comma-separated variance approaches for MI methods: miboot, bootmi
    /// [scenario.approaches].
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse::<VarianceApproach>)]
    pub variance: Option<Vec<VarianceApproach>>,
    /// Imputations per MI-Boot analysis [scenario.variance.miboot_m].
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Bootstrap samples for every approach [scenario.variance.*_b].
    #[arg(long, global = true)]
    pub b: Option<usize>,
    /// Monte Carlo draws per cell [scenario.mc_draws].
    #[arg(long, global = true)]
    pub draws: Option<usize>,
    /// Full-scale study: 2000 replications unless --reps is given.
    #[arg(long, global = true)]
    pub full: bool,
}

impl Flags {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            threads: self.threads,
            out: self.out.clone(),
            reps: self.reps,
            n: self.n,
            mdag: self.mdag,
            methods: self.method.clone(),
            estimator: self.estimator,
            approaches: self.variance.clone(),
            m: self.m,
            b: self.b,
            draws: self.draws,
            full: self.full,
        }
    }

    /// Config file (if any) with flags applied.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        self.overrides().apply(&mut c);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the true effects on a large complete sample (cached).
    Truth,
    /// Write one masked dataset as CSV.
    Generate {
        /// File name inside the output directory.
        #[arg(long, default_value = "data.csv")]
        file: String,
    },
    /// Analyze a CSV dataset with every selected method and approach.
    Analyze {
        data: PathBuf,
    },
    /// Run a simulation scenario and summarize it.
    Simulate,
    /// Re-render tables (and plots) from a metrics file.
    Report {
        /// Defaults to metrics.csv in the output directory.
        metrics: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn out_dir(c: &RunConfig) -> Result<&Path, CliError> {
    if c.out.is_dir() {
        Ok(&c.out)
    } else {
        Err(CliError::new(Failure::Config, format!("output directory {} does not exist", c.out.display())))
    }
}

fn log(c: &RunConfig, msg: impl Display) {
    if c.verbosity > 0 {
        eprintln!("{msg}");
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::new(Failure::Data, e))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::new(Failure::Data, format!("{}: {e}", path.display())))
}

pub fn cmd_truth(c: &RunConfig) -> Result<TruthValues, CliError> {
    let dir = out_dir(c)?;
    let t0 = Instant::now();
    let (truth, hit) = cached_truth(dir, &c.params, c.truth_n, c.truth_seed)?;
    log(c, format!("truth {} in {:.1?}", if hit { "read from cache" } else { "computed" }, t0.elapsed()));
    write_json(&dir.join("truth.json"), &truth)?;
    println!("indirect {:.5}  direct {:.5}  total {:.5}  (n = {}, seed {})", truth.indirect, truth.direct, truth.total, truth.n, truth.seed);
    Ok(truth)
}

/// The masked dataset of replication 0 of the configured scenario.
pub fn generated_dataset(c: &RunConfig) -> Result<Dataset, CliError> {
    let mdag = c.mdag_spec()?;
    let seed = StreamSeed(c.scenario.base_seed).child(0);
    let complete = generate_complete(c.scenario.n, &c.params, &mut seed.stream(0))?;
    Ok(impose_missingness(&complete, &mdag, &mut seed.stream(1))?)
}

pub fn cmd_generate(c: &RunConfig, file: &str) -> Result<PathBuf, CliError> {
    let dir = out_dir(c)?;
    let data = generated_dataset(c)?;
    let path = dir.join(file);
    io::write_dataset_file(&data, &path)?;
    let s = medmi_core::datagen::summarize_missingness(&data);
    log(c, format!("wrote {} rows to {} ({:.1}% incomplete)", data.n(), path.display(), 100.0 * s.any));
    Ok(path)
}

/// One analysis of `cmd_analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub method: MethodKind,
    pub approach: VarianceApproach,
    pub estimator: EstimatorKind,
    pub n: usize,
    pub analysis: Analysis,
}

fn per_100(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

fn describe(r: &AnalysisReport) -> String {
    let mut s = format!("{} ({} g-computation, n = {}):\n", report::analysis_label(r.method, Some(r.approach)), r.estimator, r.n);
    for e in Estimand::ALL {
        let p = r.analysis.get(e);
        s += &format!(
            "  {:<8} {} per 100 (95% CI {} to {} per 100; SE {})\n",
            e.name(),
            per_100(p.point),
            per_100(p.ci_low),
            per_100(p.ci_high),
            per_100(p.se)
        );
    }
    s
}

fn method_index(m: MethodKind) -> u64 {
    MethodKind::ALL.iter().position(|&k| k == m).unwrap() as u64
}

pub fn cmd_analyze(c: &RunConfig, data_path: &Path) -> Result<Vec<AnalysisReport>, CliError> {
    let dir = out_dir(c)?;
    let data = io::read_dataset_file(data_path)?;
    let s = &c.scenario;
    if s.methods.is_empty() {
        return Err(CliError::new(Failure::Config, "no methods selected"));
    }
    if let Some(m) = s.methods.iter().find(|m| !m.supports(s.estimator)) {
        return Err(CliError::new(Failure::Config, ImputeError::InvalidPairing { method: *m, estimator: s.estimator }));
    }
    if s.methods.iter().any(|m| m.is_imputation()) && s.approaches.is_empty() {
        return Err(CliError::new(Failure::Config, "MI methods need at least one variance approach"));
    }
    let spec = s.analysis_spec();
    let base = StreamSeed(s.base_seed);
    let mut reports = Vec::new();
    let stdout = std::io::stdout();
    for &method in &s.methods {
        let mut mm = MissingMethod::new(method).with_cycles(s.cycles).with_m(s.variance.miboot_m);
        mm.auxiliary = data.auxiliaries();
        let approaches = if method.is_imputation() { s.approaches.clone() } else { vec![VarianceApproach::Boot] };
        for (k, approach) in approaches.into_iter().enumerate() {
            let mut rng = base.path(&[3, method_index(method), k as u64]).stream(0);
            let t0 = Instant::now();
            let analysis = analyze(&data, &mm, s.estimator, &spec, approach, &s.variance, &mut rng)?;
            let r = AnalysisReport { method, approach, estimator: s.estimator, n: data.n(), analysis };
            write!(stdout.lock(), "{}", describe(&r)).ok();
            log(c, format!("  ({:.1?})", t0.elapsed()));
            reports.push(r);
        }
        if c.export_imputations && method.is_imputation() {
            let mut rng = base.path(&[4, method_index(method)]).stream(0);
            let set = impute(&data, &mm, s.estimator, &spec.outcome, &mut rng).map_err(VarianceError::from)?;
            let path = dir.join(format!("imputed-{method}.csv"));
            io::write_imputed(&set, io::create(&path)?)?;
        }
    }
    write_json(&dir.join("analysis.json"), &reports)?;
    Ok(reports)
}

pub fn cmd_simulate(c: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let dir = out_dir(c)?;
    let truth_values = cmd_truth(c)?;
    let mdag = c.mdag_spec()?;
    let reps = c.scenario.reps;
    let step = (reps / 20).max(1);
    let t0 = Instant::now();
    let progress = |k: usize| {
        if c.verbosity > 0 && (k.is_multiple_of(step) || k == reps) {
            eprintln!("replication {k}/{reps} ({:.0?})", t0.elapsed());
        }
    };
    let records = run_scenario(&c.scenario, &c.params, &mdag, &progress)?;
    let raw = dir.join("raw.jsonl");
    io::write_records(&records, io::create(&raw)?)?;
    let metrics = compute_metrics(&records, &truth_values)?;
    let mut written = vec![raw];
    written.extend(report::write_report(&metrics.rows, dir, c.plots)?);
    print!("{}", report::format_table(&metrics.rows)?);
    Ok(written)
}

pub fn cmd_report(c: &RunConfig, metrics: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let dir = out_dir(c)?;
    let path = metrics.map(Path::to_path_buf).unwrap_or_else(|| dir.join("metrics.csv"));
    let rows = io::read_metrics(io::open(&path)?)?;
    let written = report::write_report(&rows, dir, c.plots)?;
    print!("{}", report::format_table(&rows)?);
    Ok(written)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let c = cli.flags.resolve()?;
    match &cli.command {
        Command::Truth => cmd_truth(&c).map(drop),
        Command::Generate { file } => cmd_generate(&c, file).map(drop),
        Command::Analyze { data } => cmd_analyze(&c, data).map(drop),
        Command::Simulate => cmd_simulate(&c).map(drop),
        Command::Report { metrics } => cmd_report(&c, metrics.as_deref()).map(drop),
        Command::Config => {
            print!("{}", c.to_toml()?);
            Ok(())
        }
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { Failure::Config.code() } else { 0 };
            e.print().ok();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind.code()
        }
    }
}
