//! Command arguments. Every argument struct doubles as the JSON schema of the
//! matching `run --config` document.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegKind {
    L1,
    Linf,
    Group,
    Tv1d,
    Polyhedral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Penalized,
    Noiseless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverArg {
    Auto,
    Fista,
    Pd,
    Lp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepModeArg {
    Ic,
    NoiselessRecovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityArg {
    All,
    Bipolar,
    Intersection,
    Scaling,
    MinkowskiSum,
    LinearImage,
    InverseSum,
}

/// Accepts an inline JSON value or a string (itself inline JSON or a path).
fn json_or_path<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    Ok(match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    })
}

fn opt_json_or_path<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    json_or_path(d).map(Some)
}

fn default_block_size() -> usize {
    2
}

fn default_delta() -> f64 {
    regsel::model::DEFAULT_DELTA
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    200_000
}

fn default_dim() -> usize {
    3
}

fn default_trials() -> usize {
    1000
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DecomposeArgs {
    #[arg(long, value_enum)]
    pub reg: RegKind,
    /// Vector as inline JSON array or path to a JSON file.
    #[arg(long)]
    #[serde(deserialize_with = "json_or_path")]
    pub x: String,
    /// Block size of the uniform partition for `--reg group`.
    #[arg(long, default_value_t = default_block_size())]
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    /// `N × M` matrix `H` for `--reg polyhedral`.
    #[arg(long)]
    #[serde(default, deserialize_with = "opt_json_or_path")]
    pub h: Option<String>,
    #[arg(long, default_value_t = default_delta())]
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CertifyArgs {
    #[arg(long, value_enum)]
    pub reg: RegKind,
    /// `Q × N` matrix as a JSON array of rows, inline or from a file.
    #[arg(long)]
    #[serde(deserialize_with = "json_or_path")]
    pub phi: String,
    #[arg(long)]
    #[serde(deserialize_with = "json_or_path")]
    pub x: String,
    #[arg(long, default_value_t = default_block_size())]
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[arg(long)]
    #[serde(default, deserialize_with = "opt_json_or_path")]
    pub h: Option<String>,
    /// Rescale the columns of Φ to unit norm first.
    #[arg(long)]
    #[serde(default)]
    pub normalize: bool,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SolveArgs {
    #[arg(long, value_enum, default_value = "penalized")]
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[arg(long, value_enum)]
    pub reg: RegKind,
    #[arg(long)]
    #[serde(deserialize_with = "json_or_path")]
    pub phi: String,
    #[arg(long)]
    #[serde(deserialize_with = "json_or_path")]
    pub y: String,
    /// Required in penalized mode.
    #[arg(long)]
    #[serde(default)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = default_tol())]
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[arg(long, default_value_t = default_max_iter())]
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value = "auto")]
    #[serde(default = "default_solver")]
    pub solver: SolverArg,
    #[arg(long, default_value_t = default_block_size())]
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[arg(long)]
    #[serde(default, deserialize_with = "opt_json_or_path")]
    pub h: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_mode() -> Mode {
    Mode::Penalized
}

fn default_solver() -> SolverArg {
    SolverArg::Auto
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CsLinfArgs {
    #[arg(long)]
    pub n: usize,
    /// Number of saturated entries.
    #[arg(long)]
    pub i: usize,
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = default_trials())]
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    /// CSV path; a JSON sidecar is written next to it.
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PhaseTransitionArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub i: usize,
    /// Comma-separated measurement counts.
    #[arg(long, value_delimiter = ',', required = true)]
    pub q_grid: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    #[serde(default = "default_sweep_trials")]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "ic")]
    #[serde(default = "default_sweep_mode")]
    pub mode: SweepModeArg,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_sweep_trials() -> usize {
    200
}

fn default_sweep_mode() -> SweepModeArg {
    SweepModeArg::Ic
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PolarArgs {
    #[arg(long, value_enum, default_value = "all")]
    #[serde(default = "default_identity")]
    pub identity: IdentityArg,
    /// Dimension of the random polytopes drawn when none are supplied.
    #[arg(long, default_value_t = default_dim())]
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    /// Polytope JSON (`vertices` and/or `halfspaces`), inline or from a file.
    #[arg(long)]
    #[serde(default, deserialize_with = "opt_json_or_path")]
    pub polytope: Option<String>,
    /// Second polytope for the two-set identities.
    #[arg(long)]
    #[serde(default, deserialize_with = "opt_json_or_path")]
    pub second: Option<String>,
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_identity() -> IdentityArg {
    IdentityArg::All
}

/// A whole invocation as a JSON document, tagged by `command`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Decompose(DecomposeArgs),
    Certify(CertifyArgs),
    Solve(SolveArgs),
    CsLinf(CsLinfArgs),
    PhaseTransition(PhaseTransitionArgs),
    Polar(PolarArgs),
}
