//! Dual certificates, the irrepresentability value, optimality checks, null
//! space falsification and the robust model-selection constants.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{operator_bound, GaugeEval};
use crate::error::{check_dim, Error, Result};
use crate::gauges::Gauge;
use crate::linalg::{
    ensure_finite_mat, ensure_finite_vec, gaussian_vector, pseudo_inverse, restricted_gram_inverse, restricted_injectivity, Matrix,
    Subspace, Vector,
};
use crate::model::{ModelDecomposition, PsflParams, SubdiffGauge};
use crate::solvers::lp::{affine_map, Affine, LpBuilder, LpOutcome};

/// Strictness margin on `IC < 1` and on the gauge inequality of optimality.
pub const IC_MARGIN: f64 = 1e-9;
/// Tolerance on the `T`-equality of first-order conditions, relative to `λ`.
pub const EQUALITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Exactness {
    Exact,
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Identifiable,
    NotIdentifiable,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub alpha_f: Vec<f64>,
    pub ic: f64,
    pub restricted_injective: bool,
    pub identifiable: bool,
    pub method: Exactness,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimality {
    UniqueOptimal,
    OptimalMaybeNonunique,
    NotOptimal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NspOutcome {
    NoViolationFound,
    Violated(Vector),
}

fn check_operator(phi: &Matrix, md: &ModelDecomposition) -> Result<()> {
    check_dim(md.dim(), phi.ncols())?;
    ensure_finite_mat(phi, "Phi")
}

/// `α_F = (Φ_T⁺)ᵀ e`, the minimal-norm solution of `Φ_Tᵀ α = e`.
pub fn linearized_precertificate(phi: &Matrix, md: &ModelDecomposition) -> Result<Vector> {
    check_operator(phi, md)?;
    if !restricted_injectivity(phi, &md.t) {
        return Err(Error::NotRestrictedInjective);
    }
    Ok(precertificate_unchecked(phi, &md.t, &md.e))
}

fn precertificate_unchecked(phi: &Matrix, t: &Subspace, e: &Vector) -> Vector {
    let u = t.basis();
    pseudo_inverse(&(phi * u)).transpose() * (u.transpose() * e)
}

fn exactness(g: &SubdiffGauge) -> Exactness {
    match g {
        SubdiffGauge::Generic { .. } => Exactness::Approximate,
        _ => Exactness::Exact,
    }
}

/// Vector whose subdifferential-gauge value is the IC.
pub fn ic_argument(phi: &Matrix, md: &ModelDecomposition, alpha: &Vector) -> Vector {
    md.s.project(&(phi.transpose() * alpha - &md.f))
}

pub fn irrepresentability(phi: &Matrix, md: &ModelDecomposition) -> Result<CertificateReport> {
    let alpha = linearized_precertificate(phi, md)?;
    let arg = ic_argument(phi, md, &alpha);
    let (ic, method) = match md.subdiff_gauge(&arg) {
        Ok(v) => (v, exactness(&md.antig)),
        Err(Error::Unsupported(_)) => (SubdiffGauge::generic(md).eval(&arg)?, Exactness::Approximate),
        Err(e) => return Err(e),
    };
    let verdict = if method == Exactness::Approximate || (ic >= 1.0 - IC_MARGIN && ic <= 1.0 + IC_MARGIN) {
        Verdict::Inconclusive
    } else if ic < 1.0 - IC_MARGIN {
        Verdict::Identifiable
    } else {
        Verdict::NotIdentifiable
    };
    Ok(CertificateReport {
        alpha_f: alpha.iter().copied().collect(),
        ic,
        restricted_injective: true,
        identifiable: verdict == Verdict::Identifiable,
        method,
        verdict,
    })
}

/// `(‖P_T Φᵀr/λ − e‖∞, antig(P_S(Φᵀr/λ − f)))` with `r = y − Φx`.
pub fn first_order_residuals(phi: &Matrix, y: &Vector, lambda: f64, x: &Vector, md: &ModelDecomposition) -> Result<(f64, f64)> {
    check_operator(phi, md)?;
    check_dim(phi.nrows(), y.len())?;
    check_dim(md.dim(), x.len())?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    let g = phi.transpose() * (y - phi * x) / lambda;
    let eq = (md.t.project(&g) - &md.e).amax();
    let ineq = md.subdiff_gauge(&md.s.project(&(g - &md.f)))?;
    Ok((eq, ineq))
}

/// First-order conditions of `min ½‖y − Φx‖² + λJ(x)` at `x`; `md` is taken at `x`.
pub fn check_noisy_optimality(phi: &Matrix, y: &Vector, lambda: f64, x: &Vector, md: &ModelDecomposition) -> Result<Optimality> {
    let (eq, ineq) = first_order_residuals(phi, y, lambda, x, md)?;
    Ok(classify(eq <= EQUALITY_TOL, ineq, restricted_injectivity(phi, &md.t)))
}

fn classify(equality: bool, ineq: f64, ct: bool) -> Optimality {
    if !equality || ineq > 1.0 + IC_MARGIN {
        Optimality::NotOptimal
    } else if ineq < 1.0 - IC_MARGIN && ct {
        Optimality::UniqueOptimal
    } else {
        Optimality::OptimalMaybeNonunique
    }
}

/// First-order conditions of `min J(x) s.t. Φx = y`: searches a dual vector
/// starting from `α_F`, then by LP over `α_F + Ker Φ_Tᵀ` for polyhedral gauges.
pub fn check_noiseless_optimality(phi: &Matrix, y: &Vector, x: &Vector, md: &ModelDecomposition) -> Result<Optimality> {
    check_operator(phi, md)?;
    check_dim(phi.nrows(), y.len())?;
    ensure_finite_vec(y, "y")?;
    if (phi * x - y).amax() > 1e-8 * (1.0 + y.amax()) {
        return Err(Error::Infeasible);
    }
    let ct = restricted_injectivity(phi, &md.t);
    let alpha = precertificate_unchecked(phi, &md.t, &md.e);
    let u = md.t.basis();
    let phit = phi * u;
    if (phit.transpose() * &alpha - u.transpose() * &md.e).amax() > 1e-8 {
        return Ok(Optimality::NotOptimal);
    }
    let v0 = md.subdiff_gauge(&ic_argument(phi, md, &alpha))?;
    if v0 < 1.0 - IC_MARGIN || !md.antig.is_lp_representable() {
        return Ok(classify(true, v0, ct));
    }
    let z = Subspace::kernel(&phit.transpose());
    if z.dim() == 0 {
        return Ok(classify(true, v0, ct));
    }
    let base = ic_argument(phi, md, &alpha);
    let dir = md.s.projector() * phi.transpose() * z.basis();
    let mut b = LpBuilder::new();
    let t = b.var(0.0, f64::INFINITY);
    let w = b.free_vars(z.dim());
    let wv: Vec<Affine> = w.iter().map(|&i| Affine::var(i)).collect();
    let arg: Vec<Affine> = affine_map(&dir, &wv)
        .into_iter()
        .zip(base.iter())
        .map(|(mut a, &c)| {
            a.constant += c;
            a
        })
        .collect();
    md.antig.epigraph(&mut b, &arg, t, true)?;
    b.set_objective(t, 1.0);
    let best = match b.solve()? {
        LpOutcome::Optimal(s) => s.x[t].max(0.0).min(v0),
        _ => v0,
    };
    Ok(classify(true, best, ct))
}

/// Searches `Ker Φ` for `δ` with `⟨e, δ_T⟩ + ⟨P_S f, δ_S⟩ ≥ antig°(−δ_S)`.
/// Finding none is not a certificate.
pub fn nsp_falsify(phi: &Matrix, md: &ModelDecomposition, samples: usize, seed: u64) -> Result<NspOutcome> {
    check_operator(phi, md)?;
    let k = Subspace::kernel(phi);
    if k.dim() == 0 {
        return Ok(NspOutcome::NoViolationFound);
    }
    let pf = md.s.project(&md.f);
    let violated = |d: &Vector| -> Result<bool> {
        let dt = md.t.project(d);
        let ds = md.s.project(d);
        let lhs = md.e.dot(&dt) + pf.dot(&ds);
        let rhs = md.subdiff_gauge_polar(&(-&ds))?;
        Ok(lhs >= rhs - 1e-12 * (1.0 + lhs.abs() + rhs.abs()))
    };
    for c in k.basis().column_iter() {
        for s in [1.0, -1.0] {
            let d = c.into_owned() * s;
            if violated(&d)? {
                return Ok(NspOutcome::Violated(d));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let z = gaussian_vector(k.dim(), &mut rng);
        let d = k.basis() * (&z / z.norm());
        for s in [1.0, -1.0] {
            let ds = &d * s;
            if violated(&ds)? {
                return Ok(NspOutcome::Violated(ds));
            }
        }
    }
    Ok(NspOutcome::NoViolationFound)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[allow(non_snake_case)]
pub struct StabilityConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Equals `c1`.
    pub A: f64,
    /// `Γ(e)·‖G‖_{Γ→Γ}` at `e = e_{x0}`.
    pub B: f64,
    pub C0: f64,
    pub A_T: f64,
    pub B_T: f64,
    pub D_T: f64,
    pub E_T: f64,
    pub C_x0: f64,
    pub ic: f64,
    pub lambda_min_per_noise: f64,
    pub lambda_max: f64,
    pub noise_budget: f64,
    pub exact: bool,
}

impl StabilityConstants {
    /// Certified `[λ_min, λ_max]` at noise level `eps`, empty as `None`.
    pub fn lambda_interval(&self, eps: f64) -> Option<(f64, f64)> {
        let lo = self.lambda_min_per_noise * eps;
        (lo <= self.lambda_max && self.exact).then_some((lo, self.lambda_max))
    }
}

/// `φ(u) = √(1+u) − 1`.
pub fn phi_fn(u: f64) -> f64 {
    (1.0 + u).sqrt() - 1.0
}

/// `H(β) = (β + ½)/(E β) · φ(2β/(β+1)²)`.
pub fn h_fn(beta: f64, e_t: f64) -> f64 {
    (beta + 0.5) / (e_t * beta) * phi_fn(2.0 * beta / ((beta + 1.0) * (beta + 1.0)))
}

fn restrict(g: &Gauge, t: &Subspace) -> Gauge {
    match g {
        Gauge::Restricted { .. } => g.clone(),
        _ => Gauge::Restricted { base: Box::new(g.clone()), subspace: t.clone() },
    }
}

pub fn stability_constants(phi: &Matrix, md: &ModelDecomposition, p: &PsflParams) -> Result<StabilityConstants> {
    let report = irrepresentability(phi, md)?;
    let ic = report.ic;
    let mut exact = p.exact && report.method == Exactness::Exact;
    let u = md.t.basis();
    let phit = phi * u;
    let gram_inv = restricted_gram_inverse(phi, &md.t)?;
    let g = u * gram_inv * u.transpose();
    let gamma = &p.gamma;
    let gamma_t = restrict(gamma, &md.t);
    let mut bound = |a: &Matrix, g_in: &dyn GaugeEval, g_out: &dyn GaugeEval| -> Result<f64> {
        let b = operator_bound(a, g_in, g_out)?;
        exact &= b.method.is_exact();
        Ok(b.value)
    };
    let q = phi.nrows();
    let ng = bound(&g, &gamma_t, gamma)?;
    let c1 = ng * bound(&(md.t.projector() * phi.transpose()), &Gauge::L2(q), gamma)?;
    let c2 = gamma.eval(&md.e) * ng;
    let phit_pinv_t = pseudo_inverse(&phit).transpose() * u.transpose();
    let c3 = bound(&(-(md.s.projector() * phi.transpose() * &phit_pinv_t)), &gamma_t, &md.antig)?;
    let qt = Matrix::identity(q, q) - &phit * pseudo_inverse(&phit);
    let c4 = bound(&(md.s.projector() * phi.transpose() * qt), &Gauge::L2(q), &md.antig)?;

    let (a, b) = (c1, c2);
    let a_t = 2.0 * c4;
    let c0 = if c4 > 0.0 { 1.0 / (a / (2.0 * c4) + b) } else { 1.0 / b };
    let e_t = if c4 > 0.0 { c1 / c4 + 2.0 * c2 } else { f64::INFINITY };
    let mu_bar = p.mu * c3 + p.tau;
    let c_x0 = if p.xi > 0.0 {
        (1.0 - ic) / (p.xi * p.nu) * h_fn(mu_bar / p.xi, e_t)
    } else if mu_bar > 0.0 && e_t.is_finite() {
        (1.0 - ic) / (p.nu * mu_bar * e_t)
    } else {
        f64::INFINITY
    };
    let lambda_max = p.nu * c0.min(c_x0);
    let gap = 1.0 - ic;
    let (lambda_min_per_noise, noise_budget) = if gap <= 0.0 {
        (f64::INFINITY, 0.0)
    } else if c4 > 0.0 {
        (a_t / gap, lambda_max * gap / a_t)
    } else {
        (0.0, if a > 0.0 { p.nu / a } else { f64::INFINITY })
    };
    Ok(StabilityConstants {
        c1,
        c2,
        c3,
        c4,
        A: c1,
        B: b,
        C0: c0,
        A_T: a_t,
        B_T: c0,
        D_T: c3,
        E_T: e_t,
        C_x0: c_x0,
        ic,
        lambda_min_per_noise,
        lambda_max,
        noise_budget,
        exact,
    })
}
