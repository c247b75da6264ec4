//! Config parsing, experiment dispatch and byte-stable artifact output.
//!
//! Floats are written as `{:.16e}` (17 significant digits) in every JSON and
//! CSV artifact, so identical runs give identical files.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde::ser::Serialize;
use serde::Deserialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::dynamics::{integrate, IntegratorOptions, Record, State, Trajectory};
use crate::ensemble::{robustness_sweep, rstar_ensemble, sample_community, ParameterDistributions, SimOptions};
use crate::equilibrium::{solve_special_equilibrium, FixedPointOptions};
use crate::estimates::biodiversity_bounds;
use crate::model::{compute_rho_viable, EcosystemParams};

pub const SCHEMA: &str = include_str!("../config.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Equilibrium,
    Bounds,
    Rstar,
    Robustness,
}

impl Command {
    fn needs_distributions(self) -> bool {
        matches!(self, Command::Rstar | Command::Robustness)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_atol")]
    pub atol: f64,
    #[serde(default = "d_event_tol")]
    pub event_tol: f64,
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    #[serde(default = "d_window")]
    pub window: f64,
    /// `null` integrates to the horizon.
    #[serde(default = "d_conv")]
    pub convergence_tol: Option<f64>,
    #[serde(default = "d_h_init")]
    pub h_init: f64,
    #[serde(default = "d_h_max")]
    pub h_max: f64,
    #[serde(default = "d_max_steps")]
    pub max_steps: usize,
    /// Sampling interval of `trajectory.csv`; every step when absent.
    #[serde(default)]
    pub record_interval: Option<f64>,
}

fn d_tol() -> f64 {
    1e-8
}
fn d_atol() -> f64 {
    1e-10
}
fn d_event_tol() -> f64 {
    1e-10
}
fn d_horizon() -> f64 {
    1e3
}
fn d_window() -> f64 {
    10.0
}
fn d_conv() -> Option<f64> {
    Some(1e-8)
}
fn d_h_init() -> f64 {
    1e-3
}
fn d_h_max() -> f64 {
    10.0
}
fn d_max_steps() -> usize {
    5_000_000
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

impl IntegratorConfig {
    pub fn options(&self) -> IntegratorOptions<f64> {
        IntegratorOptions {
            tol: self.tol,
            atol: self.atol,
            event_tol: self.event_tol,
            convergence_tol: self.convergence_tol,
            window: self.window,
            h_init: self.h_init,
            h_max: self.h_max,
            max_steps: self.max_steps,
            record: self.record_interval.map_or(Record::Steps, Record::Interval),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let pos = [
            ("tol", self.tol),
            ("atol", self.atol),
            ("event_tol", self.event_tol),
            ("horizon", self.horizon),
            ("window", self.window),
            ("h_init", self.h_init),
            ("h_max", self.h_max),
        ];
        for (name, x) in pos.into_iter().chain(self.convergence_tol.map(|x| ("convergence_tol", x))) {
            if !(x.is_finite() && x > 0.0) {
                return Err(CliError::config(format!("/integrator/{name}: must be positive and finite")));
            }
        }
        if let Some(dt) = self.record_interval {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(CliError::config("/integrator/record_interval: must be positive and finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointConfig {
    #[serde(default = "d_fp_tol")]
    pub tol: f64,
    #[serde(default = "d_fp_iter")]
    pub max_iter: usize,
}

fn d_fp_tol() -> f64 {
    1e-10
}
fn d_fp_iter() -> usize {
    100_000
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self { tol: d_fp_tol(), max_iter: d_fp_iter() }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub x: Vec<f64>,
    /// Defaults to the supply.
    #[serde(default)]
    pub v: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RStarConfig {
    #[serde(default = "d_species")]
    pub species: usize,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default = "d_tie")]
    pub tie_tol: f64,
}

fn d_species() -> usize {
    500
}
fn d_trials() -> usize {
    50
}
fn d_tie() -> f64 {
    1e-9
}

impl Default for RStarConfig {
    fn default() -> Self {
        Self { species: d_species(), trials: d_trials(), tie_tol: d_tie() }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    #[serde(default = "d_sweep_species")]
    pub species: usize,
    /// Strictly decreasing supplies.
    pub s_grid: Vec<f64>,
}

fn d_sweep_species() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub params: Option<EcosystemParams<f64>>,
    #[serde(default)]
    pub distributions: Option<ParameterDistributions>,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
    #[serde(default)]
    pub rstar: RStarConfig,
    #[serde(default)]
    pub robustness: Option<RobustnessConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Config, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Numerical, message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Numerical => 3,
        }
    }

    /// One line: `error kind=<config|numerical> message=<text>`.
    pub fn line(&self) -> String {
        let kind = match self.kind {
            ErrorKind::Config => "config",
            ErrorKind::Numerical => "numerical",
        };
        format!("error kind={kind} message={}", self.message.replace(['\n', '\r'], " "))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::config(format!("i/o: {e}"))
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => write!(out, "{index}").unwrap(),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Parses and validates a config document.
pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut ptr = pointer(e.path());
        let inner = e.inner().to_string();
        if let Some(name) = inner.strip_prefix("unknown field `").and_then(|s| s.split('`').next()) {
            if !ptr.ends_with(&format!("/{name}")) {
                ptr = format!("{ptr}/{name}");
            }
        }
        let ptr = if ptr.is_empty() { "/".to_string() } else { ptr };
        CliError::config(format!("{ptr}: {inner}"))
    })?;
    validate(&cfg)?;
    Ok(cfg)
}

/// Reads a config from a file, or from the argument itself when it starts
/// with `{`.
pub fn parse_config(arg: &str) -> Result<RunConfig, CliError> {
    if arg.trim_start().starts_with('{') {
        return parse_config_str(arg);
    }
    let text = std::fs::read_to_string(arg).map_err(|e| CliError::config(format!("{arg}: {e}")))?;
    parse_config_str(&text)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    match (&cfg.params, &cfg.distributions) {
        (Some(_), Some(_)) => {
            return Err(CliError::config(
                "conflicting sections `params` and `distributions`: give exactly one",
            ))
        }
        (None, None) => {
            let want = if cfg.command.needs_distributions() { "distributions" } else { "params" };
            return Err(CliError::config(format!("/{want}: required by this command")));
        }
        (Some(_), None) if cfg.command.needs_distributions() => {
            return Err(CliError::config("/params: this command needs `distributions` instead"))
        }
        (None, Some(_)) if !cfg.command.needs_distributions() => {
            return Err(CliError::config("/distributions: this command needs `params` instead"))
        }
        _ => {}
    }
    if let Some(p) = &cfg.params {
        p.validate().map_err(|e| CliError::config(format!("/params: {e}")))?;
    }
    if let Some(d) = &cfg.distributions {
        d.validate().map_err(|e| CliError::config(format!("/distributions: {e}")))?;
    }
    cfg.integrator.validate()?;
    if let (Some(init), Some(p)) = (&cfg.initial, &cfg.params) {
        if init.x.len() != p.species_count() || init.v.as_ref().is_some_and(|v| v.len() != p.resource_count()) {
            return Err(CliError::config("/initial: dimensions do not match /params"));
        }
    }
    match cfg.command {
        Command::Rstar => {
            if cfg.rstar.trials == 0 {
                return Err(CliError::config("/rstar/trials: must be positive"));
            }
            if cfg.rstar.species == 0 {
                return Err(CliError::config("/rstar/species: must be positive"));
            }
        }
        Command::Robustness => {
            let r = cfg.robustness.as_ref().ok_or_else(|| CliError::config("/robustness: required by this command"))?;
            if r.species == 0 {
                return Err(CliError::config("/robustness/species: must be positive"));
            }
            if r.s_grid.len() < 2 || r.s_grid.windows(2).any(|w| !(w[1] < w[0])) || r.s_grid.iter().any(|&s| !(s > 0.0)) {
                return Err(CliError::config("/robustness/s_grid: needs at least two positive, strictly decreasing values"));
            }
        }
        _ => {}
    }
    Ok(())
}

/// `serde_json` pretty printing with `{:.16e}` floats.
struct StableFormatter(PrettyFormatter<'static>);

impl Formatter for StableFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format_float(value).as_bytes())
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// `{:.16e}`; non-finite values print as `nan`, `inf`, `-inf`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Pretty JSON with stable float formatting and a trailing newline.
pub fn to_stable_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, StableFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializable report");
    buf.push(b'\n');
    String::from_utf8(buf).expect("utf-8 json")
}

/// SHA-256 of the config with `out` removed, keys sorted.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("out");
    }
    let canon = to_stable_json(&v);
    hex::encode(Sha256::digest(canon.as_bytes()))
}

#[derive(Debug, serde::Serialize)]
struct RunMeta<'a> {
    command: Command,
    config_hash: String,
    seed: u64,
    versions: Versions,
    artifacts: &'a [&'a str],
}

#[derive(Debug, serde::Serialize)]
struct Versions {
    ecodyn: &'static str,
    config_schema: u32,
}

pub fn trajectory_csv(traj: &Trajectory<f64>) -> String {
    let (m, r) = match traj.samples.first() {
        Some(s) => (s.x.len(), s.v.len()),
        None => (0, 0),
    };
    let mut out = String::from("t");
    (1..=m).for_each(|i| write!(out, ",x_{i}").unwrap());
    (1..=r).for_each(|k| write!(out, ",v_{k}").unwrap());
    out.push_str(",n_alive\n");
    for s in &traj.samples {
        out.push_str(&format_float(s.t));
        for z in s.x.iter().chain(&s.v) {
            out.push(',');
            out.push_str(&format_float(*z));
        }
        writeln!(out, ",{}", s.n_alive()).unwrap();
    }
    out
}

pub fn events_csv(traj: &Trajectory<f64>) -> String {
    let mut out = String::from("species,t_star\n");
    for e in &traj.events {
        writeln!(out, "{},{}", e.species + 1, format_float(e.time)).unwrap();
    }
    out
}

/// Outcome of [`run`]: artifacts written and a one-line summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
    pub summary: String,
}

fn sim_options(cfg: &RunConfig) -> SimOptions {
    SimOptions {
        integrator: IntegratorOptions { record: Record::Endpoints, ..cfg.integrator.options() },
        horizon: cfg.integrator.horizon,
        fixed_point: fp_options(cfg),
        tie_tol: cfg.rstar.tie_tol,
    }
}

fn fp_options(cfg: &RunConfig) -> FixedPointOptions<f64> {
    FixedPointOptions { tol: cfg.fixed_point.tol, max_iter: cfg.fixed_point.max_iter }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::numerical(e.to_string())
}

/// Runs the configured command and writes its artifacts. Numerical failures
/// that still produce a report write it before returning the error.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::config(format!("{}: {e}", out_dir.display())))?;
    let seed = cfg.seed.unwrap_or(0);
    let mut files: Vec<(&str, String)> = Vec::new();
    let mut failure = None;
    let summary;

    match cfg.command {
        Command::Simulate => {
            let p = cfg.params.as_ref().expect("validated");
            let init = match &cfg.initial {
                Some(i) => State::initial(i.x.clone(), i.v.clone().unwrap_or_else(|| p.s.clone())),
                None => State::initial(vec![1.0; p.species_count()], p.s.clone()),
            };
            let traj = integrate(p, &init, cfg.integrator.horizon, &cfg.integrator.options())
                .map_err(|e| numerical(format!("{} (last good t = {:e})", e.error, e.last_good.t)))?;
            files.push(("trajectory.csv", trajectory_csv(&traj)));
            files.push(("events.csv", events_csv(&traj)));
            let end = traj.terminal();
            summary = format!(
                "simulate: t_end = {:e}, N_e = {}, {} events, converged = {}",
                end.t,
                end.n_alive(),
                traj.events.len(),
                traj.converged.is_some()
            );
        }
        Command::Equilibrium => {
            let p = cfg.params.as_ref().expect("validated");
            let alive = vec![true; p.species_count()];
            let eq = solve_special_equilibrium(p, p.thresholds_active(), &alive, &fp_options(cfg)).map_err(numerical)?;
            #[derive(serde::Serialize)]
            struct Report<'a> {
                equilibrium: &'a crate::equilibrium::EquilibriumResult<f64>,
                stability: Option<crate::model::StabilityReport<f64>>,
            }
            let report = Report { equilibrium: &eq, stability: compute_rho_viable(p) };
            files.push(("equilibrium.json", to_stable_json(&report)));
            summary = format!("equilibrium: v_eq = {:?}, certified = {}", eq.v_eq, eq.unique_certified);
            if !eq.residual.is_finite() {
                failure = Some(numerical("equilibrium residual is not finite"));
            }
        }
        Command::Bounds => {
            let p = cfg.params.as_ref().expect("validated");
            let b = biodiversity_bounds(p);
            #[derive(serde::Serialize)]
            struct Report<'a> {
                #[serde(flatten)]
                bounds: &'a crate::estimates::BiodiversityBounds<f64>,
                n_max_bracket: Option<(u64, u64)>,
            }
            let report = Report { n_max_bracket: b.n_star_bracket.value, bounds: &b };
            files.push(("bounds.json", to_stable_json(&report)));
            summary = format!("bounds: upper_rough = {:?}, n_max_bracket = {:?}", b.upper_rough.value, report.n_max_bracket);
        }
        Command::Rstar => {
            let d = cfg.distributions.as_ref().expect("validated");
            let ens = rstar_ensemble(d, cfg.rstar.species, cfg.rstar.trials, seed, &sim_options(cfg)).map_err(numerical)?;
            let s = &ens.summary;
            summary = format!(
                "rstar: M = {}, {} trials, {} converged, rank-consistent fraction {:?}, mean relative error {:?}",
                s.m, s.trials, s.converged, s.rank_consistent_fraction, s.mean_relative_error
            );
            if s.converged == 0 {
                failure = Some(numerical("no trial converged within the horizon"));
            }
            files.push(("rstar_report.json", to_stable_json(&ens)));
        }
        Command::Robustness => {
            let d = cfg.distributions.as_ref().expect("validated");
            let r = cfg.robustness.as_ref().expect("validated");
            let sample = sample_community(d, r.species, seed).map_err(numerical)?;
            let (report, curve) = robustness_sweep(&sample, &r.s_grid, &sim_options(cfg)).map_err(numerical)?;
            let mut csv = String::from("S,N_e,v_eq,mass_extinct\n");
            for pt in &curve {
                writeln!(csv, "{},{},{},{}", format_float(pt.s), pt.n_e, format_float(pt.v_eq), pt.mass_extinct).unwrap();
            }
            files.push(("sweep.csv", csv));
            files.push(("robustness.json", to_stable_json(&report)));
            summary = format!(
                "robustness: {} supplies, S_critical = {:?}, predicted {:?}",
                curve.len(),
                report.s_critical,
                report.s_predicted
            );
            if !report.all_converged {
                failure = Some(numerical("some sweep points did not converge within the horizon"));
            }
        }
    }

    let mut names: Vec<&str> = files.iter().map(|(n, _)| *n).collect();
    names.push("run_meta.json");
    let meta = RunMeta {
        command: cfg.command,
        config_hash: config_hash(cfg),
        seed,
        versions: Versions { ecodyn: env!("CARGO_PKG_VERSION"), config_schema: 1 },
        artifacts: &names,
    };
    files.push(("run_meta.json", to_stable_json(&meta)));
    for (name, body) in &files {
        write_file(&out_dir.join(name), body)?;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(RunOutcome { out_dir, artifacts: names.iter().map(|s| s.to_string()).collect(), summary })
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

const AFTER_HELP: &str = "\
Config defaults:
  integrator.tol = 1e-8, integrator.atol = 1e-10, integrator.event_tol = 1e-10,
  integrator.horizon = 1e3, integrator.window = 10, integrator.convergence_tol = 1e-8,
  integrator.h_init = 1e-3, integrator.h_max = 10, integrator.max_steps = 5000000,
  fixed_point.tol = 1e-10, fixed_point.max_iter = 100000,
  rstar.species = 500, rstar.trials = 50, rstar.tie_tol = 1e-9,
  robustness.species = 100, seed = 0, out = \"out\".
Print the JSON schema with --print-schema.
Exit status: 0 success, 2 config error, 3 numerical failure.";

/// Simulation and analysis of resource-competition ecosystems.
#[derive(Debug, Parser)]
#[command(name = "ecodyn", version, about, after_help = AFTER_HELP)]
pub struct Cli {
    /// Config file, or an inline JSON document starting with `{`.
    #[arg(long, value_name = "PATH", required_unless_present = "print_schema")]
    pub config: Option<String>,
    /// Overrides the config seed.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker pool width (default: machine parallelism).
    #[arg(long, value_name = "N", env = "ECODYN_THREADS")]
    pub threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// No summary line on stdout.
    #[arg(long)]
    pub quiet: bool,
    /// Overrides `rstar.trials`.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Overrides the species count of `rstar` or `robustness`.
    #[arg(long)]
    pub species: Option<usize>,
    /// Prints the config schema and exits.
    #[arg(long)]
    pub print_schema: bool,
}

/// Applies command-line overrides and re-validates.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = parse_config(cli.config.as_deref().unwrap_or_default())?;
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    let seed = cfg.seed.or(cfg.distributions.as_ref().map(|d| d.rng_seed)).unwrap_or(0);
    cfg.seed = Some(seed);
    if let Some(d) = cfg.distributions.as_mut() {
        d.rng_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(n) = cli.trials {
        cfg.rstar.trials = n;
    }
    if let Some(m) = cli.species {
        cfg.rstar.species = m;
        if let Some(r) = cfg.robustness.as_mut() {
            r.species = m;
        }
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<RunOutcome, CliError> {
    let cfg = resolve(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::config(format!("--threads: {e}")))?;
    pool.install(|| run(&cfg))
}

pub fn main_with(cli: Cli) -> ExitCode {
    if cli.print_schema {
        print!("{SCHEMA}");
        return ExitCode::SUCCESS;
    }
    match execute(&cli) {
        Ok(outcome) => {
            if !cli.quiet {
                println!("{}; wrote {}", outcome.summary, outcome.out_dir.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn main() -> ExitCode {
    main_with(Cli::parse())
}
