use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use regsel::certificates::{irrepresentability, stability_constants, Verdict};
use regsel::experiments::{cs_linf_experiment, phase_transition_sweep, trial_rng, SweepCell, SweepMode};
use regsel::gauges::{polar_identity, BlockPartition, Gauge, PolarIdentity};
use regsel::linalg::{Matrix, Subspace, Vector};
use regsel::model::{decompose, tv1d_gauge, ModelDecomposition, DEFAULT_DELTA};
use regsel::polytope::{random_polytope, Polytope, PolytopeJson};
use regsel::solvers::{solve_noiseless, solve_penalized, SolveOptions, SolverChoice};
use regsel::Error;

use crate::config::*;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NOT_IDENTIFIABLE: u8 = 3;
pub const EXIT_INCONCLUSIVE: u8 = 4;
pub const EXIT_NO_CONVERGENCE: u8 = 5;
pub const EXIT_IDENTITY_FAILURE: u8 = 6;

/// Failure that aborts a command before any result is produced.
#[derive(Debug)]
pub struct CliError(pub String);

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError(e.to_string())
    }
}

type CmdResult = Result<(Value, u8), CliError>;

fn read_input(src: &str) -> Result<String, CliError> {
    let t = src.trim_start();
    if t.starts_with('[') || t.starts_with('{') {
        return Ok(src.to_string());
    }
    fs::read_to_string(src).map_err(|e| CliError(format!("cannot read {src}: {e}")))
}

fn parse<T: serde::de::DeserializeOwned>(src: &str, what: &str) -> Result<T, CliError> {
    serde_json::from_str(&read_input(src)?).map_err(|e| CliError(format!("invalid {what}: {e}")))
}

pub fn parse_vector(src: &str, what: &str) -> Result<Vector, CliError> {
    let v: Vec<f64> = parse(src, what)?;
    Ok(Vector::from_vec(v))
}

pub fn parse_matrix(src: &str, what: &str) -> Result<Matrix, CliError> {
    let rows: Vec<Vec<f64>> = parse(src, what)?;
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(CliError(format!("{what} must be a non-empty rectangular array of rows")));
    }
    Ok(Matrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn gauge_for(reg: RegKind, n: usize, block_size: usize, h: Option<&str>) -> Result<Gauge, CliError> {
    let g = match reg {
        RegKind::L1 => Gauge::L1(n),
        RegKind::Linf => Gauge::Linf(n),
        RegKind::Group => Gauge::GroupL1L2(BlockPartition::uniform(n, block_size)?),
        RegKind::Tv1d => tv1d_gauge(n),
        RegKind::Polyhedral => {
            let h = h.ok_or_else(|| CliError("--reg polyhedral needs --h".into()))?;
            let h = parse_matrix(h, "H")?;
            if h.nrows() != n {
                return Err(CliError(format!("H has {} rows, expected {n}", h.nrows())));
            }
            Gauge::PolyhedralH(h)
        }
    };
    g.validate()?;
    Ok(g)
}

fn subspace_json(s: &Subspace) -> Value {
    json!({ "dim": s.dim(), "basis": rows_of(&s.basis().transpose()) })
}

fn decomposition_json(md: &ModelDecomposition) -> Value {
    json!({
        "x": md.x.as_slice(),
        "t": subspace_json(&md.t),
        "s": subspace_json(&md.s),
        "e": md.e.as_slice(),
        "f": md.f.as_slice(),
        "regularizer": md.regularizer.name(),
    })
}

pub fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError(format!("cannot write {}: {e}", path.display())))
}

pub fn decompose_cmd(a: &DecomposeArgs) -> CmdResult {
    let x = parse_vector(&a.x, "x")?;
    let g = gauge_for(a.reg, x.len(), a.block_size, a.h.as_deref())?;
    let (md, p) = decompose(&g, &x, a.delta)?;
    let mut out = decomposition_json(&md);
    let mut psfl = serde_json::to_value(&p).expect("serializable");
    psfl["gamma"] = json!(p.gamma.name());
    out["psfl"] = psfl;
    Ok((out, 0))
}

fn normalize_columns(phi: &Matrix) -> Result<Matrix, CliError> {
    let mut out = phi.clone();
    for mut c in out.column_iter_mut() {
        let n = c.norm();
        if n == 0.0 {
            return Err(CliError("cannot normalize a zero column".into()));
        }
        c /= n;
    }
    Ok(out)
}

pub fn certify_cmd(a: &CertifyArgs) -> CmdResult {
    let mut phi = parse_matrix(&a.phi, "Phi")?;
    if a.normalize {
        phi = normalize_columns(&phi)?;
    }
    let x = parse_vector(&a.x, "x")?;
    if phi.ncols() != x.len() {
        return Err(CliError(format!("Phi has {} columns but x has length {}", phi.ncols(), x.len())));
    }
    let g = gauge_for(a.reg, x.len(), a.block_size, a.h.as_deref())?;
    let (md, p) = decompose(&g, &x, DEFAULT_DELTA)?;
    let report = match irrepresentability(&phi, &md) {
        Ok(r) => r,
        Err(e @ Error::NotRestrictedInjective) => {
            let out = json!({ "verdict": Verdict::Inconclusive, "reason": e.to_string(), "restricted_injective": false });
            return Ok((out, EXIT_INCONCLUSIVE));
        }
        Err(e) => return Err(e.into()),
    };
    let mut out = serde_json::to_value(&report).expect("serializable");
    if report.verdict == Verdict::Identifiable {
        out["stability"] = stability_constants(&phi, &md, &p).map_or(Value::Null, |s| serde_json::to_value(s).expect("serializable"));
    }
    let code = match report.verdict {
        Verdict::Identifiable => 0,
        Verdict::NotIdentifiable => EXIT_NOT_IDENTIFIABLE,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    };
    Ok((out, code))
}

pub fn solve_cmd(a: &SolveArgs) -> CmdResult {
    let phi = parse_matrix(&a.phi, "Phi")?;
    let y = parse_vector(&a.y, "y")?;
    let g = gauge_for(a.reg, phi.ncols(), a.block_size, a.h.as_deref())?;
    let solver = match a.solver {
        SolverArg::Auto => SolverChoice::Auto,
        SolverArg::Fista => SolverChoice::Fista,
        SolverArg::Pd => SolverChoice::Pd,
        SolverArg::Lp => SolverChoice::Lp,
    };
    let opts = SolveOptions { tol: a.tol, max_iter: a.max_iter, solver, x0: None };
    let r = match a.mode {
        Mode::Penalized => {
            let lambda = a.lambda.ok_or_else(|| CliError("--lambda is required in penalized mode".into()))?;
            solve_penalized(&phi, &y, lambda, &g, &opts)?
        }
        Mode::Noiseless => solve_noiseless(&phi, &y, &g, &opts)?,
    };
    let code = if r.converged { 0 } else { EXIT_NO_CONVERGENCE };
    Ok((serde_json::to_value(&r).expect("serializable"), code))
}

const CSV_HEADER: [&str; 8] = ["N", "Q", "I_size", "trials", "success", "frequency", "beta", "bound"];

fn write_csv(path: &Path, cells: &[SweepCell]) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(CSV_HEADER).map_err(err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for c in cells {
        w.write_record([
            c.n.to_string(),
            c.q.to_string(),
            c.i_size.to_string(),
            c.trials.to_string(),
            c.success.to_string(),
            c.frequency.to_string(),
            opt(c.beta),
            opt(c.bound),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError(format!("cannot write {}: {e}", path.display())))
}

/// Writes the CSV table and its JSON sidecar when `out` is set.
fn emit_sweep<C: Serialize>(
    out: Option<&PathBuf>,
    config: &C,
    cells: &[SweepCell],
    summary: &Value,
    records: &impl Serialize,
) -> Result<(), CliError> {
    let Some(path) = out else { return Ok(()) };
    write_csv(path, cells)?;
    let sidecar = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "summary": summary,
        "records": records,
    });
    write_output(&path.with_extension("json"), &crate::to_sorted_json(&sidecar))
}

pub fn cs_linf_cmd(a: &CsLinfArgs) -> CmdResult {
    let (cell, records) = cs_linf_experiment(a.n, a.i, a.beta, a.trials, a.seed)?;
    let bound = cell.bound.unwrap_or(0.0);
    let floor = bound - 3.0 * cell.binomial_sigma(bound);
    let summary = json!({
        "cells": [&cell],
        "seed": a.seed,
        "bound_floor": floor,
        "bound_respected": cell.frequency >= floor,
    });
    emit_sweep(a.out.as_ref(), &RunConfig::CsLinf(a.clone()), std::slice::from_ref(&cell), &summary, &records)?;
    Ok((summary, 0))
}

pub fn phase_transition_cmd(a: &PhaseTransitionArgs) -> CmdResult {
    let mode = match a.mode {
        SweepModeArg::Ic => SweepMode::Ic,
        SweepModeArg::NoiselessRecovery => SweepMode::NoiselessRecovery,
    };
    let r = phase_transition_sweep(a.n, a.i, &a.q_grid, a.trials, a.seed, mode)?;
    let summary = json!({
        "cells": &r.cells,
        "crossing": r.crossing,
        "predicted_crossing": r.predicted_crossing,
        "mode": r.mode,
        "seed": r.seed,
    });
    emit_sweep(a.out.as_ref(), &RunConfig::PhaseTransition(a.clone()), &r.cells, &summary, &r.records)?;
    Ok((summary, 0))
}

fn parse_polytope(src: &str) -> Result<Polytope, CliError> {
    let j: PolytopeJson = parse(src, "polytope")?;
    Ok(Polytope::from_json(&j)?)
}

pub fn polar_cmd(a: &PolarArgs) -> CmdResult {
    let mut rng = trial_rng(a.seed, 0);
    let c = match &a.polytope {
        Some(s) => parse_polytope(s)?,
        None => random_polytope(a.dim, 3 * a.dim + 2, &mut rng)?,
    };
    let d = match &a.second {
        Some(s) => parse_polytope(s)?,
        None => random_polytope(c.dim(), 3 * c.dim() + 2, &mut rng)?,
    };
    let ids: Vec<PolarIdentity> = match a.identity {
        IdentityArg::All => PolarIdentity::ALL.to_vec(),
        IdentityArg::Bipolar => vec![PolarIdentity::Bipolar],
        IdentityArg::Intersection => vec![PolarIdentity::Intersection],
        IdentityArg::Scaling => vec![PolarIdentity::Scaling],
        IdentityArg::MinkowskiSum => vec![PolarIdentity::MinkowskiSum],
        IdentityArg::LinearImage => vec![PolarIdentity::LinearImage],
        IdentityArg::InverseSum => vec![PolarIdentity::InverseSum],
    };
    let reports = ids.into_iter().map(|id| polar_identity(id, &c, &d, a.seed)).collect::<Result<Vec<_>, _>>()?;
    let pass = reports.iter().all(|r| r.pass);
    let out = json!({ "dim": c.dim(), "identities": reports, "pass": pass });
    Ok((out, if pass { 0 } else { EXIT_IDENTITY_FAILURE }))
}

pub fn run_config(cfg: &RunConfig) -> (CmdResult, Option<&PathBuf>) {
    match cfg {
        RunConfig::Decompose(a) => (decompose_cmd(a), a.out.as_ref()),
        RunConfig::Certify(a) => (certify_cmd(a), a.out.as_ref()),
        RunConfig::Solve(a) => (solve_cmd(a), a.out.as_ref()),
        RunConfig::CsLinf(a) => (cs_linf_cmd(a), None),
        RunConfig::PhaseTransition(a) => (phase_transition_cmd(a), None),
        RunConfig::Polar(a) => (polar_cmd(a), a.out.as_ref()),
    }
}
