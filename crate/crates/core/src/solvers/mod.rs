//! Solvers for the penalized problem `min ½‖y − Φx‖² + λJ(x)`, the
//! constrained problem `min J(x) s.t. Φx = y`, and the same penalized problem
//! restricted to a model subspace.
//!
//! Convergence is declared only on points that pass the first-order test of
//! [`crate::certificates`], after snapping onto an exact model and re-solving
//! there. Uniqueness is never inferred here.

mod fista;
pub mod lp;
mod polish;
mod primal_dual;

use serde::{Deserialize, Serialize};

use crate::certificates::{first_order_residuals, IC_MARGIN};
use crate::error::{check_dim, Error, Result};
use crate::gauges::Gauge;
use crate::linalg::{ensure_finite_mat, ensure_finite_vec, pseudo_inverse, Matrix, Vector};
use crate::model::{decompose_model, ModelDecomposition, DEFAULT_DELTA};

use fista::{fista, objective, LoopOutput};
use lp::{Affine, LpBuilder, LpOutcome, Sense};
pub use polish::restricted_closed_form;
use polish::{converged_noiseless, converged_penalized, group_fixed_point, group_structure};
use primal_dual::{analysis_terms, chambolle_pock, step_size, PrimalProx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    #[default]
    Auto,
    Fista,
    Pd,
    Lp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub solver: SolverChoice,
    /// Starting point; zero when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200_000, solver: SolverChoice::Auto, x0: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    ZeroCheck,
    Fista,
    PrimalDual,
    Lp,
    ClosedForm,
    FixedPoint,
    FistaOnModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub x_hat: Vec<f64>,
    pub iterations: usize,
    /// Penalized: `‖P_T Φᵀ(y − Φx̂)/λ − e‖∞`. Constrained: `‖Φx̂ − y‖∞`.
    pub primal_residual: f64,
    /// Penalized: excess of the off-model gauge over 1. Constrained: zero for
    /// LP solves, iterate change otherwise.
    pub dual_residual: f64,
    pub converged: bool,
    pub objective: f64,
    /// Objective every 100 iterations.
    pub checkpoints: Vec<f64>,
    pub method: SolveMethod,
    pub fallback_used: bool,
}

impl SolveResult {
    pub fn x(&self) -> Vector {
        Vector::from_column_slice(&self.x_hat)
    }
}

fn validate(phi: &Matrix, y: &Vector, g: &Gauge) -> Result<()> {
    ensure_finite_mat(phi, "Phi")?;
    ensure_finite_vec(y, "y")?;
    check_dim(phi.nrows(), y.len())?;
    check_dim(phi.ncols(), g.dim())?;
    g.validate()
}

fn start(opts: &SolveOptions, n: usize) -> Result<Vector> {
    match &opts.x0 {
        None => Ok(Vector::zeros(n)),
        Some(v) => {
            check_dim(n, v.len())?;
            let x = Vector::from_column_slice(v);
            ensure_finite_vec(&x, "x0")?;
            Ok(x)
        }
    }
}

/// True when `0` minimizes the penalized problem, i.e. `J°(Φᵀy) ≤ λ`.
pub fn zero_is_optimal(phi: &Matrix, y: &Vector, lambda: f64, g: &Gauge) -> Result<bool> {
    Ok(g.polar_eval(&(phi.transpose() * y))? <= lambda * (1.0 + IC_MARGIN))
}

fn has_prox(g: &Gauge) -> bool {
    matches!(g, Gauge::L1(_) | Gauge::Linf(_) | Gauge::GroupL1L2(_))
}

fn penalized_residuals(phi: &Matrix, y: &Vector, lambda: f64, g: &Gauge, x: &Vector) -> (f64, f64) {
    decompose_model(g, x, DEFAULT_DELTA)
        .and_then(|md| first_order_residuals(phi, y, lambda, x, &md))
        .map(|(eq, ineq)| (eq, (ineq - 1.0).max(0.0)))
        .unwrap_or((f64::INFINITY, f64::INFINITY))
}

/// Solves `min ½‖y − Φx‖² + λJ(x)`.
pub fn solve_penalized(phi: &Matrix, y: &Vector, lambda: f64, g: &Gauge, opts: &SolveOptions) -> Result<SolveResult> {
    validate(phi, y, g)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument("lambda must be positive and finite".into()));
    }
    let n = phi.ncols();
    let x0 = start(opts, n)?;
    if matches!(zero_is_optimal(phi, y, lambda, g), Ok(true)) {
        let x = Vector::zeros(n);
        return Ok(SolveResult {
            objective: objective(phi, y, lambda, g, &x),
            x_hat: x.as_slice().to_vec(),
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: true,
            checkpoints: vec![],
            method: SolveMethod::ZeroCheck,
            fallback_used: false,
        });
    }
    let use_fista = match opts.solver {
        SolverChoice::Auto => has_prox(g),
        SolverChoice::Fista if has_prox(g) => true,
        SolverChoice::Fista => return Err(Error::Unsupported(format!("no prox for {}", g.name()))),
        SolverChoice::Pd => false,
        SolverChoice::Lp => return Err(Error::Unsupported("the penalized problem is not an LP".into())),
    };
    let tol = opts.tol;
    let mut accepted = None;
    let check = |x: &Vector| {
        converged_penalized(phi, y, lambda, g, x, tol).map(|(xp, eq, slack)| {
            accepted = Some((eq, slack));
            xp
        })
    };
    let (out, method) = if use_fista {
        (fista(phi, y, lambda, g, x0, opts.max_iter, check)?, SolveMethod::Fista)
    } else {
        let terms = analysis_terms(g)?;
        let step = step_size(&terms);
        let prox = PrimalProx::quadratic(phi, y, step)?;
        (chambolle_pock(&terms, &prox, lambda, step, x0, opts.max_iter, check), SolveMethod::PrimalDual)
    };
    let (pr, dr) = match accepted {
        Some(r) if out.converged => r,
        _ => penalized_residuals(phi, y, lambda, g, &out.x),
    };
    let obj = objective(phi, y, lambda, g, &out.x);
    Ok(finish(out, method, pr, dr, obj))
}

fn finish(out: LoopOutput, method: SolveMethod, pr: f64, dr: f64, objective: f64) -> SolveResult {
    SolveResult {
        x_hat: out.x.as_slice().to_vec(),
        iterations: out.iterations,
        primal_residual: pr,
        dual_residual: dr,
        converged: out.converged,
        objective,
        checkpoints: out.checkpoints,
        method,
        fallback_used: false,
    }
}

fn feasibility(phi: &Matrix, y: &Vector, x: &Vector) -> f64 {
    (phi * x - y).amax()
}

fn feasible(phi: &Matrix, y: &Vector, x: &Vector) -> bool {
    feasibility(phi, y, x) <= 1e-8 * (1.0 + y.amax())
}

/// Solves `min J(x)` subject to `Φx = y`.
pub fn solve_noiseless(phi: &Matrix, y: &Vector, g: &Gauge, opts: &SolveOptions) -> Result<SolveResult> {
    validate(phi, y, g)?;
    let n = phi.ncols();
    let x0 = start(opts, n)?;
    let ls = pseudo_inverse(phi) * y;
    if !feasible(phi, y, &ls) {
        return Err(Error::Infeasible);
    }
    let use_lp = match opts.solver {
        SolverChoice::Auto => g.is_polyhedral(),
        SolverChoice::Lp => true,
        SolverChoice::Pd => false,
        SolverChoice::Fista => return Err(Error::Unsupported("FISTA does not handle the equality constraint".into())),
    };
    if matches!(g, Gauge::L2(_)) && opts.solver == SolverChoice::Auto {
        return Ok(SolveResult {
            objective: ls.norm(),
            primal_residual: feasibility(phi, y, &ls),
            x_hat: ls.as_slice().to_vec(),
            iterations: 0,
            dual_residual: 0.0,
            converged: true,
            checkpoints: vec![],
            method: SolveMethod::ClosedForm,
            fallback_used: false,
        });
    }
    if use_lp {
        let x = noiseless_lp(phi, y, g)?;
        return Ok(SolveResult {
            objective: g.eval(&x),
            primal_residual: feasibility(phi, y, &x),
            x_hat: x.as_slice().to_vec(),
            iterations: 0,
            dual_residual: 0.0,
            converged: true,
            checkpoints: vec![],
            method: SolveMethod::Lp,
            fallback_used: false,
        });
    }
    let terms = analysis_terms(g)?;
    let step = step_size(&terms);
    let prox = PrimalProx::affine(phi, y);
    let out = chambolle_pock(&terms, &prox, 1.0, step, prox_start(phi, y, x0), opts.max_iter, |x| converged_noiseless(phi, y, g, x));
    let pr = feasibility(phi, y, &out.x);
    let obj = g.eval(&out.x);
    Ok(finish(out, SolveMethod::PrimalDual, pr, 0.0, obj))
}

fn prox_start(phi: &Matrix, y: &Vector, x0: Vector) -> Vector {
    &x0 - pseudo_inverse(phi) * (phi * &x0 - y)
}

fn noiseless_lp(phi: &Matrix, y: &Vector, g: &Gauge) -> Result<Vector> {
    let n = phi.ncols();
    let mut b = LpBuilder::new();
    let x = b.free_vars(n);
    let t = b.var(0.0, f64::INFINITY);
    let xv: Vec<Affine> = x.iter().map(|&i| Affine::var(i)).collect();
    g.epigraph(&mut b, &xv, t)?;
    for (i, mut row) in lp::affine_map(phi, &xv).into_iter().enumerate() {
        row.constant -= y[i];
        b.constrain(&row, Sense::Eq);
    }
    b.set_objective(t, 1.0);
    let sol = match b.solve()? {
        LpOutcome::Optimal(s) => s,
        LpOutcome::Infeasible => return Err(Error::Infeasible),
        LpOutcome::Unbounded => return Err(Error::Numerical("constrained LP reported unbounded".into())),
    };
    Ok(Vector::from_iterator(n, x.iter().map(|&i| sol.x[i])))
}

/// Solves the penalized problem over `x ∈ T` for the model of `md`.
pub fn solve_restricted(phi: &Matrix, y: &Vector, lambda: f64, md: &ModelDecomposition, opts: &SolveOptions) -> Result<SolveResult> {
    ensure_finite_mat(phi, "Phi")?;
    ensure_finite_vec(y, "y")?;
    check_dim(phi.nrows(), y.len())?;
    check_dim(phi.ncols(), md.dim())?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument("lambda must be positive and finite".into()));
    }
    let g = &md.regularizer;
    let Some((p, active)) = group_structure(md) else {
        let x = restricted_closed_form(phi, y, lambda, &md.t, &md.e)?;
        let eq = restricted_residual(phi, y, lambda, md, &x, &md.e);
        return Ok(SolveResult {
            objective: objective(phi, y, lambda, g, &x),
            x_hat: x.as_slice().to_vec(),
            iterations: 0,
            primal_residual: eq,
            dual_residual: 0.0,
            converged: true,
            checkpoints: vec![],
            method: SolveMethod::ClosedForm,
            fallback_used: false,
        });
    };
    let e_of = |x: &Vector| -> Option<Vector> {
        let mut e = Vector::zeros(x.len());
        for &b in &active {
            let nb = p.block_norm(b, x);
            if !(nb > 0.0) {
                return None;
            }
            for &i in &p.blocks()[b] {
                e[i] = x[i] / nb;
            }
        }
        Some(e)
    };
    let (x, ok, iters) = group_fixed_point(phi, y, lambda, md, &md.x, 10_000, 1e-10)?;
    if ok {
        if let Some(e) = e_of(&x) {
            return Ok(SolveResult {
                objective: objective(phi, y, lambda, g, &x),
                primal_residual: restricted_residual(phi, y, lambda, md, &x, &e),
                x_hat: x.as_slice().to_vec(),
                iterations: iters,
                dual_residual: 0.0,
                converged: true,
                checkpoints: vec![],
                method: SolveMethod::FixedPoint,
                fallback_used: false,
            });
        }
    }
    // Columns of Φ outside the active blocks are zeroed; the group prox keeps them at zero.
    let phi_t = phi * md.t.projector();
    let tol = opts.tol;
    let mut res = f64::INFINITY;
    let out = fista(&phi_t, y, lambda, g, md.t.project(&md.x), opts.max_iter, |x| {
        let e = e_of(x)?;
        let r = restricted_residual(phi, y, lambda, md, x, &e);
        res = r;
        (r <= tol).then(|| x.clone())
    })?;
    let obj = objective(phi, y, lambda, g, &out.x);
    let mut r = finish(out, SolveMethod::FistaOnModel, res, 0.0, obj);
    r.iterations += iters;
    r.fallback_used = true;
    Ok(r)
}

/// `‖P_T Φᵀ(y − Φx)/λ − ẽ‖∞`.
fn restricted_residual(phi: &Matrix, y: &Vector, lambda: f64, md: &ModelDecomposition, x: &Vector, e: &Vector) -> f64 {
    (md.t.project(&(phi.transpose() * (y - phi * x) / lambda)) - md.t.project(e)).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::{check_noisy_optimality, Optimality};
    use crate::gauges::BlockPartition;
    use crate::linalg::gaussian_ensemble;
    use crate::model::decompose;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn identity_l1_is_soft_threshold() {
        let y = v(&[3.0, -0.5, 1.2, -2.0]);
        let r = solve_penalized(&Matrix::identity(4, 4), &y, 1.0, &Gauge::L1(4), &SolveOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.x() - v(&[2.0, 0.0, 0.2, -1.0])).amax() < 1e-12);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let phi = gaussian_ensemble(5, 8, 3);
        let y = v(&[1.0, -2.0, 0.5, 0.0, 1.0]);
        for g in [Gauge::L1(8), Gauge::Linf(8), Gauge::GroupL1L2(BlockPartition::uniform(8, 2).unwrap())] {
            let lam = g.polar_eval(&(phi.transpose() * &y)).unwrap() * 1.01;
            let r = solve_penalized(&phi, &y, lam, &g, &SolveOptions::default()).unwrap();
            assert_eq!(r.x(), Vector::zeros(8));
            let (md, _) = decompose(&Gauge::L1(8), &r.x(), DEFAULT_DELTA).unwrap();
            if matches!(g, Gauge::L1(_)) {
                assert_ne!(check_noisy_optimality(&phi, &y, lam, &r.x(), &md).unwrap(), Optimality::NotOptimal);
            }
        }
    }

    #[test]
    fn noiseless_ic_zero_instance() {
        let phi = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let r = solve_noiseless(&phi, &v(&[5.0, 0.0]), &Gauge::L1(3), &SolveOptions::default()).unwrap();
        assert!((r.x() - v(&[5.0, 0.0, 0.0])).amax() < 1e-12);
        let r = solve_noiseless(&Matrix::identity(3, 3), &v(&[1.0, -2.0, 3.0]), &Gauge::Linf(3), &SolveOptions::default()).unwrap();
        assert!((r.x() - v(&[1.0, -2.0, 3.0])).amax() < 1e-12);
    }

    #[test]
    fn infeasible_noiseless_rejected() {
        let phi = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(solve_noiseless(&phi, &v(&[1.0, 2.0]), &Gauge::L1(2), &SolveOptions::default()), Err(Error::Infeasible)));
    }

    #[test]
    fn restricted_orthonormal_shrinks_along_signs() {
        let phi = Matrix::identity(4, 4);
        let x0 = v(&[2.0, 0.0, -3.0, 0.0]);
        let (md, _) = decompose(&Gauge::L1(4), &x0, DEFAULT_DELTA).unwrap();
        let r = solve_restricted(&phi, &(&phi * &x0), 0.1, &md, &SolveOptions::default()).unwrap();
        assert!((r.x() - (&x0 - &md.e * 0.1)).amax() < 1e-12);
    }

    #[test]
    fn restricted_group_fixed_point_residual() {
        let phi = gaussian_ensemble(10, 8, 11);
        let p = BlockPartition::uniform(8, 2).unwrap();
        let x0 = v(&[1.0, 2.0, 0.0, 0.0, -1.0, 0.5, 0.0, 0.0]);
        let (md, _) = decompose(&Gauge::GroupL1L2(p), &x0, DEFAULT_DELTA).unwrap();
        let r = solve_restricted(&phi, &(&phi * &x0), 0.05, &md, &SolveOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.primal_residual <= 1e-9, "{}", r.primal_residual);
    }

    #[test]
    fn tv_penalized_passes_optimality() {
        let phi = gaussian_ensemble(8, 6, 5);
        let x0 = v(&[1.0, 1.0, 1.0, -1.0, -1.0, 2.0]);
        let y = &phi * &x0;
        let g = crate::model::tv1d_gauge(6);
        let r = solve_penalized(&phi, &y, 0.05, &g, &SolveOptions::default()).unwrap();
        assert!(r.converged, "{} {}", r.primal_residual, r.dual_residual);
        let (md, _) = decompose(&g, &r.x(), DEFAULT_DELTA).unwrap();
        assert_ne!(check_noisy_optimality(&phi, &y, 0.05, &r.x(), &md).unwrap(), Optimality::NotOptimal);
    }
}
