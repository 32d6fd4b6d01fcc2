//! Monte-Carlo harnesses: the ℓ∞ Gaussian sampling bound, phase-transition
//! sweeps and robust model selection over a λ grid.
//!
//! Every trial draws from its own stream `(master seed, trial index)`, so
//! results do not depend on the thread schedule.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use crate::certificates::{check_noisy_optimality, irrepresentability, stability_constants, Optimality, StabilityConstants};
use crate::error::{Error, Result};
use crate::gauges::Gauge;
use crate::linalg::{gaussian_matrix, gaussian_vector, Matrix, Subspace, Vector};
use crate::model::{decompose_linf, decompose_model, ModelDecomposition, PsflParams, DEFAULT_DELTA};
use crate::solvers::{solve_noiseless, solve_penalized, SolveOptions};

/// Largest principal-angle sine at which two subspaces count as equal.
pub const SUBSPACE_TOL: f64 = 1e-6;
/// Sup-norm error below which a noiseless solve counts as exact recovery.
pub const RECOVERY_TOL: f64 = 1e-6;

pub fn subspace_equal(a: &Subspace, b: &Subspace) -> bool {
    a.ambient_dim() == b.ambient_dim() && a.dim() == b.dim() && a.max_angle_sine(b) <= SUBSPACE_TOL
}

/// RNG of trial `trial` under `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// `(Q_min, 1 − 2(|I|/2)^{−f})` for the ℓ∞ sampling bound, with
/// `f = (√(β/(2|I|) + β − 1) − √(β/(2|I|)))²`.
pub fn cs_linf_bound(n: usize, i_size: usize, beta: f64) -> Result<(usize, f64)> {
    if i_size < 3 || i_size > n {
        return Err(Error::InvalidArgument(format!("saturation size must lie in [3, N], got {i_size}")));
    }
    if !(beta > 1.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be finite and > 1, got {beta}")));
    }
    let s = i_size as f64;
    let f = ((beta / (2.0 * s) + beta - 1.0).sqrt() - (beta / (2.0 * s)).sqrt()).powi(2);
    let q = (n as f64 - s + 2.0 * beta * s * (s / 2.0).ln()).ceil();
    Ok((q as usize, 1.0 - 2.0 * (s / 2.0).powf(-f)))
}

/// Exponent `f(β, |I|)` of the ℓ∞ sampling bound.
pub fn cs_linf_exponent(i_size: usize, beta: f64) -> f64 {
    let s = i_size as f64;
    ((beta / (2.0 * s) + beta - 1.0).sqrt() - (beta / (2.0 * s)).sqrt()).powi(2)
}

/// `|I|` entries at `±1`, the rest uniform in `(−½, ½)`.
pub fn linf_signal<R: Rng>(n: usize, i_size: usize, rng: &mut R) -> Vector {
    let inner = Uniform::new(-0.5, 0.5).expect("valid range");
    let mut x = Vector::from_iterator(n, (0..n).map(|_| inner.sample(rng)));
    for i in sample(rng, n, i_size) {
        x[i] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    x
}

/// `s` nonzero entries with random signs and magnitudes in `[1, 2)`.
pub fn sparse_signal<R: Rng>(n: usize, s: usize, rng: &mut R) -> Vector {
    let mag = Uniform::new(1.0, 2.0).expect("valid range");
    let mut x = Vector::zeros(n);
    for i in sample(rng, n, s) {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        x[i] = sign * mag.sample(rng);
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Ic,
    NoiselessRecovery,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub trial: u64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "I_size")]
    pub i_size: usize,
    pub regularizer: String,
    /// `+∞` when restricted injectivity fails.
    pub ic_value: f64,
    pub ic_below_one: bool,
    /// Exact recovery by the constrained solve; absent in IC mode.
    pub recovered: Option<bool>,
    pub recovered_model: Option<bool>,
    pub l2_error: Option<f64>,
    pub lambda: f64,
    pub noise_norm: f64,
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "I_size")]
    pub i_size: usize,
    pub trials: usize,
    pub success: usize,
    pub frequency: f64,
    pub beta: Option<f64>,
    pub bound: Option<f64>,
}

impl SweepCell {
    fn from_records(n: usize, q: usize, i_size: usize, records: &[TrialRecord], mode: SweepMode) -> Self {
        let success = records
            .iter()
            .filter(|r| match mode {
                SweepMode::Ic => r.ic_below_one,
                SweepMode::NoiselessRecovery => r.recovered == Some(true),
            })
            .count();
        let trials = records.len();
        SweepCell {
            n,
            q,
            i_size,
            trials,
            success,
            frequency: if trials > 0 { success as f64 / trials as f64 } else { 0.0 },
            beta: None,
            bound: None,
        }
    }

    /// Binomial standard deviation `√(p(1−p)/n)` at probability `p`.
    pub fn binomial_sigma(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub mode: SweepMode,
    pub seed: u64,
    pub cells: Vec<SweepCell>,
    /// Linear-interpolated `Q` where the success frequency first reaches ½.
    pub crossing: Option<f64>,
    /// `N − |I|/2`.
    pub predicted_crossing: f64,
    pub records: Vec<TrialRecord>,
}

fn linf_trial(n: usize, q: usize, i_size: usize, seed: u64, trial: u64, mode: SweepMode) -> Result<TrialRecord> {
    let mut rng = trial_rng(seed, trial);
    let x0 = linf_signal(n, i_size, &mut rng);
    let phi = gaussian_matrix(q, n, &mut rng);
    let (md, _) = decompose_linf(&x0, DEFAULT_DELTA)?;
    let ic_value = match irrepresentability(&phi, &md) {
        Ok(r) => r.ic,
        Err(Error::NotRestrictedInjective) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let (recovered, recovered_model, l2_error) = match mode {
        SweepMode::Ic => (None, None, None),
        SweepMode::NoiselessRecovery => {
            let r = solve_noiseless(&phi, &(&phi * &x0), &Gauge::Linf(n), &SolveOptions::default())?;
            let x = r.x();
            let model = decompose_linf(&x, DEFAULT_DELTA).map(|(m, _)| subspace_equal(&m.t, &md.t)).unwrap_or(false);
            (Some((&x - &x0).amax() <= RECOVERY_TOL), Some(model), Some((&x - &x0).norm()))
        }
    };
    Ok(TrialRecord {
        seed,
        trial,
        n,
        q,
        i_size,
        regularizer: "linf".into(),
        ic_value,
        ic_below_one: ic_value < 1.0,
        recovered,
        recovered_model,
        l2_error,
        lambda: 0.0,
        noise_norm: 0.0,
    })
}

fn linf_cell(n: usize, q: usize, i_size: usize, trials: usize, seed: u64, mode: SweepMode) -> Result<(SweepCell, Vec<TrialRecord>)> {
    if i_size == 0 || i_size > n || q == 0 {
        return Err(Error::InvalidArgument(format!("invalid sizes N={n}, Q={q}, |I|={i_size}")));
    }
    let records: Vec<TrialRecord> =
        (0..trials as u64).into_par_iter().map(|t| linf_trial(n, q, i_size, seed, t, mode)).collect::<Result<_>>()?;
    Ok((SweepCell::from_records(n, q, i_size, &records, mode), records))
}

/// IC < 1 frequency of Gaussian ℓ∞ instances at one `(N, Q, |I|)`.
pub fn run_linf_cs_trials(n: usize, q: usize, i_size: usize, trials: usize, seed: u64) -> Result<(SweepCell, Vec<TrialRecord>)> {
    if q + i_size < n + 1 {
        return Err(Error::InvalidArgument(format!("Q = {q} is below dim T = {}", n + 1 - i_size.min(n + 1))));
    }
    linf_cell(n, q, i_size, trials, seed, SweepMode::Ic)
}

/// The sampling-bound experiment: `Q = Q_min(β)` with the bound attached.
pub fn cs_linf_experiment(n: usize, i_size: usize, beta: f64, trials: usize, seed: u64) -> Result<(SweepCell, Vec<TrialRecord>)> {
    let (q, bound) = cs_linf_bound(n, i_size, beta)?;
    let (mut cell, records) = run_linf_cs_trials(n, q, i_size, trials, seed)?;
    cell.beta = Some(beta);
    cell.bound = Some(bound);
    Ok((cell, records))
}

/// Sweeps `Q` with shared trial seeds across cells and modes.
pub fn phase_transition_sweep(n: usize, i_size: usize, q_grid: &[usize], trials: usize, seed: u64, mode: SweepMode) -> Result<SweepResult> {
    let mut cells = vec![];
    let mut records = vec![];
    for &q in q_grid {
        let (c, r) = linf_cell(n, q, i_size, trials, seed, mode)?;
        cells.push(c);
        records.extend(r);
    }
    let crossing = half_crossing(&cells.iter().map(|c| (c.q as f64, c.frequency)).collect::<Vec<_>>());
    Ok(SweepResult { mode, seed, cells, crossing, predicted_crossing: n as f64 - i_size as f64 / 2.0, records })
}

/// First abscissa where the linear interpolant of `points` reaches ½.
pub fn half_crossing(points: &[(f64, f64)]) -> Option<f64> {
    let first = points.first()?;
    if first.1 >= 0.5 {
        return Some(first.0);
    }
    points.windows(2).find(|w| w[0].1 < 0.5 && w[1].1 >= 0.5).map(|w| {
        let (a, b) = (w[0], w[1]);
        a.0 + (0.5 - a.1) / (b.1 - a.1) * (b.0 - a.0)
    })
}

/// Largest residual of the least-squares non-decreasing fit to `ys`.
pub fn isotonic_residual(ys: &[f64]) -> f64 {
    // Pool adjacent violators: blocks of (mean, weight).
    let mut blocks: Vec<(f64, usize)> = vec![];
    for &y in ys {
        blocks.push((y, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (m2, w2) = blocks.pop().unwrap();
            let (m1, w1) = blocks.pop().unwrap();
            blocks.push(((m1 * w1 as f64 + m2 * w2 as f64) / (w1 + w2) as f64, w1 + w2));
        }
    }
    let fit = blocks.iter().flat_map(|&(m, w)| std::iter::repeat_n(m, w));
    ys.iter().zip(fit).map(|(y, f)| (y - f).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSelectionCell {
    pub epsilon: f64,
    pub lambda: f64,
    pub trials: usize,
    pub converged: usize,
    pub recovered_model: usize,
    pub unique: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    /// `λ` lies in the certified interval at this noise level.
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSelectionResult {
    pub constants: StabilityConstants,
    pub cells: Vec<ModelSelectionCell>,
    pub records: Vec<TrialRecord>,
}

/// Solves the penalized problem at `y = Φx0 + w`, `‖w‖ = ε`, for every
/// `(ε, λ)` pair and records model recovery and the error ratio
/// `‖x̂ − x0‖ / max(ε, λ)`.
#[allow(clippy::too_many_arguments)]
pub fn model_selection_sweep(
    phi: &Matrix,
    x0: &Vector,
    md: &ModelDecomposition,
    p: &PsflParams,
    noise_levels: &[f64],
    lambda_grid: &[f64],
    trials: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<ModelSelectionResult> {
    let constants = stability_constants(phi, md, p)?;
    if !(constants.ic < 1.0) {
        return Err(Error::InvalidArgument(format!("IC = {} is not below 1", constants.ic)));
    }
    let g = &md.regularizer;
    let (n, q) = (phi.ncols(), phi.nrows());
    let mut cells = vec![];
    let mut records = vec![];
    let mut stream = 0u64;
    for &eps in noise_levels {
        for &lambda in lambda_grid {
            let base = stream;
            stream += trials as u64;
            let rows: Vec<(TrialRecord, bool, bool)> = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_rng(seed, base + t);
                    let dir = gaussian_vector(q, &mut rng);
                    let w = if eps > 0.0 { dir.normalize() * eps } else { Vector::zeros(q) };
                    let y = phi * x0 + &w;
                    let r = solve_penalized(phi, &y, lambda, g, opts)?;
                    let x = r.x();
                    let (model, unique) = match decompose_model(g, &x, DEFAULT_DELTA) {
                        Ok(mdx) => {
                            (subspace_equal(&mdx.t, &md.t), check_noisy_optimality(phi, &y, lambda, &x, &mdx)? == Optimality::UniqueOptimal)
                        }
                        Err(_) => (false, false),
                    };
                    let err = (&x - x0).norm();
                    let rec = TrialRecord {
                        seed,
                        trial: base + t,
                        n,
                        q,
                        i_size: md.t.dim(),
                        regularizer: g.name().to_string(),
                        ic_value: constants.ic,
                        ic_below_one: true,
                        recovered: None,
                        recovered_model: Some(model && r.converged),
                        l2_error: Some(err),
                        lambda,
                        noise_norm: eps,
                    };
                    Ok((rec, unique, r.converged))
                })
                .collect::<Result<_>>()?;
            let ratios: Vec<f64> = rows.iter().map(|(r, _, _)| r.l2_error.unwrap() / eps.max(lambda)).collect();
            cells.push(ModelSelectionCell {
                epsilon: eps,
                lambda,
                trials,
                converged: rows.iter().filter(|r| r.2).count(),
                recovered_model: rows.iter().filter(|r| r.0.recovered_model == Some(true)).count(),
                unique: rows.iter().filter(|r| r.1).count(),
                max_ratio: ratios.iter().cloned().fold(0.0, f64::max),
                mean_ratio: ratios.iter().sum::<f64>() / ratios.len().max(1) as f64,
                certified: constants.lambda_interval(eps).is_some_and(|(lo, hi)| lo <= lambda && lambda <= hi),
            });
            records.extend(rows.into_iter().map(|r| r.0));
        }
    }
    Ok(ModelSelectionResult { constants, cells, records })
}
