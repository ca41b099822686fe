//! Command-line surface.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::PathBuf;
use tensorspike::model::Prior;
use tensorspike::phase::Family;
use tensorspike::quadrature::Integrator;

#[derive(Parser, Debug)]
#[command(name = "tensorspike", version, about = "Bayes-optimal inference for the spiked tensor model")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format (default: from the extension of --out, else per command).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON file with flag values; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample a planted instance and write `Y` (.tns) and `X⁰` (CSV).
    Gen(GenArgs),
    /// Run AMP on a stored tensor.
    Amp(AmpArgs),
    /// Iterate state evolution to its fixed point.
    Se(SeArgs),
    /// Tabulate the replica potential along the overlap line.
    FreeEnergy(FreeEnergyArgs),
    /// Mutual information and MMSE as functions of Δ.
    InfoCurve(InfoCurveArgs),
    /// Δ_c, Δ_Alg, Δ_Dyn, Δ_IT for one prior and order.
    Thresholds(ThresholdArgs),
    /// Phase labels on a (parameter, Δ) grid.
    PhaseDiagram(PhaseDiagramArgs),
    /// Recompute the threshold table against the published values.
    Table1(Table1Args),
    /// Exact small-N references.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Plot-ready data for the three-panel phase-diagram figure.
    Fig1(Fig1Args),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Amp(_) => "amp",
            Command::Se(_) => "se",
            Command::FreeEnergy(_) => "free-energy",
            Command::InfoCurve(_) => "info-curve",
            Command::Thresholds(_) => "thresholds",
            Command::PhaseDiagram(_) => "phase-diagram",
            Command::Table1(_) => "table1",
            Command::Oracle(OracleCommand::Nishimori(_)) => "oracle nishimori",
            Command::Oracle(OracleCommand::FreeEnergy(_)) => "oracle free-energy",
            Command::Fig1(_) => "fig1",
        }
    }

    /// The subcommand's own arguments as JSON.
    pub fn args_json(&self) -> serde_json::Value {
        let v = match self {
            Command::Gen(a) => serde_json::to_value(a),
            Command::Amp(a) => serde_json::to_value(a),
            Command::Se(a) => serde_json::to_value(a),
            Command::FreeEnergy(a) => serde_json::to_value(a),
            Command::InfoCurve(a) => serde_json::to_value(a),
            Command::Thresholds(a) => serde_json::to_value(a),
            Command::PhaseDiagram(a) => serde_json::to_value(a),
            Command::Table1(a) => serde_json::to_value(a),
            Command::Oracle(OracleCommand::Nishimori(a)) => serde_json::to_value(a),
            Command::Oracle(OracleCommand::FreeEnergy(a)) => serde_json::to_value(a),
            Command::Fig1(a) => serde_json::to_value(a),
        };
        v.expect("argument structs serialize")
    }

    pub fn default_format(&self) -> Format {
        match self {
            Command::Amp(_) | Command::Thresholds(_) | Command::Oracle(_) => Format::Json,
            _ => Format::Csv,
        }
    }
}

fn ser_display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// gaussian[:mu] | rademacher | bernoulli:rho | clusters:r | discrete:x@w,…
    #[arg(long)]
    #[serde(serialize_with = "ser_display")]
    pub prior: Prior,
    #[arg(long)]
    pub delta: f64,
    /// Where to write X⁰ (default: next to --out with extension .x0.csv).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AmpInitMode {
    Random,
    Informative,
}

#[derive(Args, Debug, Serialize)]
pub struct AmpArgs {
    /// Observed tensor Y in .tns format.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    #[arg(long)]
    #[serde(serialize_with = "ser_display")]
    pub prior: Prior,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = AmpInitMode::Random)]
    pub init: AmpInitMode,
    #[arg(long, default_value_t = tensorspike::amp::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long, default_value_t = tensorspike::amp::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = 0.0)]
    pub damping: f64,
    /// Amplitude of the random initialization around the prior mean.
    #[arg(long, default_value_t = tensorspike::amp::RANDOM_INIT_AMPLITUDE)]
    pub amplitude: f64,
    /// Planted signal (CSV written by `gen`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SeInitMode {
    Eps,
    Informative,
}

#[derive(Args, Debug, Serialize)]
pub struct SeArgs {
    #[arg(long)]
    #[serde(serialize_with = "ser_display")]
    pub prior: Prior,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = SeInitMode::Eps)]
    pub init: SeInitMode,
    /// gh:<nodes> or mc:<samples>[:<seed>] (default: gh:127 for rank one, mc otherwise).
    #[arg(long)]
    #[serde(serialize_with = "ser_opt_display", skip_serializing_if = "Option::is_none")]
    pub integrator: Option<Integrator>,
    #[arg(long, default_value_t = tensorspike::state_evolution::SE_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = tensorspike::state_evolution::SE_MAX_ITER)]
    pub max_iter: usize,
}

fn ser_opt_display<T: std::fmt::Display, S: serde::Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

#[derive(Args, Debug, Serialize)]
pub struct FreeEnergyArgs {
    #[arg(long)]
    #[serde(serialize_with = "ser_display")]
    pub prior: Prior,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = tensorspike::free_energy::PHI_GRID_POINTS)]
    pub m_grid: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct InfoCurveArgs {
    #[arg(long)]
    #[serde(serialize_with = "ser_display")]
    pub prior: Prior,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub delta_min: f64,
    #[arg(long)]
    pub delta_max: f64,
    /// Number of log-spaced Δ values.
    #[arg(long, default_value_t = 50)]
    pub points: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct ThresholdArgs {
    #[arg(long)]
    #[serde(serialize_with = "ser_display")]
    pub prior: Prior,
    #[arg(long)]
    pub p: usize,
    /// Relative bisection tolerance.
    #[arg(long, default_value_t = tensorspike::phase::DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct PhaseDiagramArgs {
    #[arg(long)]
    pub family: Family,
    #[arg(long, default_value_t = 3)]
    pub p: usize,
    /// Prior-parameter grid `start:stop:count` (μ or ρ).
    #[arg(long)]
    pub grid: String,
    /// Δ grid `start:stop:count` (units of ρ⁴ for bernoulli).
    #[arg(long)]
    pub delta_grid: String,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct Table1Args {
    #[arg(long, default_value_t = tensorspike::phase::DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Subcommand, Debug)]
pub enum OracleCommand {
    /// Per-instance Nishimori identity by exact enumeration.
    Nishimori(NishimoriArgs),
    /// Monte Carlo estimate of the finite-N free energy.
    FreeEnergy(OracleFreeEnergyArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct NishimoriArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub p: usize,
    #[arg(long)]
    #[serde(serialize_with = "ser_display")]
    pub prior: Prior,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct OracleFreeEnergyArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub p: usize,
    #[arg(long, default_value = "rademacher")]
    #[serde(serialize_with = "ser_display")]
    pub prior: Prior,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Panel {
    Left,
    Central,
    Right,
}

pub const FIG1_DAMPING: f64 = 0.5;

#[derive(Args, Debug, Serialize)]
pub struct Fig1Args {
    #[arg(long, value_enum)]
    pub panel: Panel,
    /// System size for the AMP runs (left panel).
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Gaussian prior mean (left panel).
    #[arg(long, default_value_t = 0.2)]
    pub mu: f64,
    /// Δ range and number of points (left panel).
    #[arg(long, default_value_t = 0.02)]
    pub delta_min: f64,
    #[arg(long, default_value_t = 0.3)]
    pub delta_max: f64,
    /// Grid points along the horizontal axis of the chosen panel.
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    /// Independent instances per Δ (left panel).
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    #[arg(long, default_value_t = tensorspike::amp::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Undamped AMP with the Gaussian prior at p = 3 can lock into a
    /// period-two cycle at low noise; at Δ ≈ 0.02 it takes about 0.5 to remove it.
    #[arg(long, default_value_t = FIG1_DAMPING)]
    pub damping: f64,
    /// Relative bisection tolerance (central and right panels).
    #[arg(long, default_value_t = 1e-6)]
    pub threshold_tol: f64,
}
