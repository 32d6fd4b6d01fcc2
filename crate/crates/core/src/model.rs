//! Model decompositions `(T, S, e, f)` with subdifferential gauges, the sum,
//! smooth-perturbation and pre-composition rules, and the local stability
//! parameters `(ν, μ, τ, ξ)`.

use serde::Serialize;

use crate::bounds::{operator_bound, GaugeEval, Shape};
use crate::error::{check_dim, Error, Result};
use crate::gauges::{BlockPartition, Gauge};
use crate::linalg::{ensure_finite_vec, pseudo_inverse, Matrix, Subspace, Vector};
use crate::polytope::{enumerate_vertices, Halfspace, MAX_POLY_DIM};
use crate::solvers::lp::{affine_map, Affine, LpBuilder, LpOutcome, Sense};

pub const DEFAULT_DELTA: f64 = 0.5;
const MEMBERSHIP_TOL: f64 = 1e-8;

/// Gauge of `∂J(x) − f`, finite exactly on `S`.
#[derive(Debug, Clone, PartialEq)]
pub enum SubdiffGauge {
    /// `max_{j ∈ coords} |η_j|`, `+∞` unless `η` vanishes off `coords`.
    BoxMax { n: usize, coords: Vec<usize>, domain: Subspace },
    /// `max(0, max_k ⟨a_k, η⟩)` over the rows `a_k`, `+∞` off `domain`.
    PolyMax { rows: Matrix, domain: Subspace },
    /// `max_{b ∈ blocks} ‖η_b‖₂`; `domain` is spanned by the listed blocks.
    GroupMax { partition: BlockPartition, blocks: Vec<usize>, domain: Subspace },
    /// `inf_{z ∈ Ker D ∩ S0} base(D_{S0}⁺ η + z)` on `domain = D(S0)`.
    Analysis { base: Box<SubdiffGauge>, d: Matrix, pinv: Matrix, kernel: Matrix, domain: Subspace },
    /// `inf_{Σ η_k = η} max_k part_k(η_k)`; `coords_pinv`/`coords_null` parametrize the split.
    InfConvolution { parts: Vec<SubdiffGauge>, coords_pinv: Matrix, coords_null: Matrix, domain: Subspace },
    /// `inf {τ ≥ 0 : J°(τ f + η) ≤ τ}` by bisection.
    Generic { regularizer: Gauge, f: Vector, domain: Subspace },
}

fn vec_affine(x: &Vector) -> Vec<Affine> {
    x.iter().map(|&v| Affine::constant(v)).collect()
}

fn vars_affine(v: &[usize]) -> Vec<Affine> {
    v.iter().map(|&i| Affine::var(i)).collect()
}

fn add_affine(a: &[Affine], b: &[Affine]) -> Vec<Affine> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut z = x.clone();
            z.add_scaled(y, 1.0);
            z
        })
        .collect()
}

fn domain_constraints(b: &mut LpBuilder, domain: &Subspace, arg: &[Affine]) {
    let c = domain.complement();
    for e in affine_map(&c.basis().transpose(), arg) {
        b.constrain(&e, Sense::Eq);
    }
}

impl SubdiffGauge {
    pub fn domain(&self) -> &Subspace {
        match self {
            SubdiffGauge::BoxMax { domain, .. }
            | SubdiffGauge::PolyMax { domain, .. }
            | SubdiffGauge::GroupMax { domain, .. }
            | SubdiffGauge::Analysis { domain, .. }
            | SubdiffGauge::InfConvolution { domain, .. }
            | SubdiffGauge::Generic { domain, .. } => domain,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain().ambient_dim()
    }

    /// True when the value is available as a closed form or a linear program.
    pub fn is_lp_representable(&self) -> bool {
        match self {
            SubdiffGauge::BoxMax { .. } | SubdiffGauge::PolyMax { .. } => true,
            SubdiffGauge::Analysis { base, .. } => base.is_lp_representable(),
            SubdiffGauge::InfConvolution { parts, .. } => parts.iter().all(|p| p.is_lp_representable()),
            SubdiffGauge::GroupMax { .. } | SubdiffGauge::Generic { .. } => false,
        }
    }

    /// Exact value; `+∞` off the domain.
    pub fn eval(&self, eta: &Vector) -> Result<f64> {
        check_dim(self.dim(), eta.len())?;
        ensure_finite_vec(eta, "subdifferential gauge argument")?;
        let domain = self.domain();
        if !domain.contains(eta, 1e-9) {
            return Ok(f64::INFINITY);
        }
        if domain.dim() == 0 {
            return Ok(0.0);
        }
        let eta = domain.project(eta);
        Ok(match self {
            SubdiffGauge::BoxMax { coords, .. } => coords.iter().map(|&j| eta[j].abs()).fold(0.0, f64::max),
            SubdiffGauge::PolyMax { rows, .. } => (rows * &eta).iter().fold(0.0f64, |a, &v| a.max(v)),
            SubdiffGauge::GroupMax { partition, blocks, .. } => blocks.iter().map(|&b| partition.block_norm(b, &eta)).fold(0.0, f64::max),
            SubdiffGauge::Generic { regularizer, f, .. } => generic_bisection(regularizer, f, &eta)?,
            _ => {
                let mut b = LpBuilder::new();
                let t = b.var(0.0, f64::INFINITY);
                self.epigraph(&mut b, &vec_affine(&eta), t, true)?;
                b.set_objective(t, 1.0);
                match b.solve()? {
                    LpOutcome::Optimal(s) => s.x[t].max(0.0),
                    LpOutcome::Infeasible => f64::INFINITY,
                    LpOutcome::Unbounded => return Err(Error::Numerical("subdifferential gauge LP unbounded".into())),
                }
            }
        })
    }

    /// Adds constraints enforcing `value(arg) ≤ t`; `in_domain` skips the
    /// domain equalities when `arg` lies in the domain by construction.
    pub fn epigraph(&self, b: &mut LpBuilder, arg: &[Affine], t: usize, in_domain: bool) -> Result<()> {
        if !in_domain {
            domain_constraints(b, self.domain(), arg);
        }
        b.le_var(&Affine::constant(0.0), t);
        match self {
            SubdiffGauge::BoxMax { coords, .. } => {
                for &j in coords {
                    b.le_var(&arg[j], t);
                    let mut m = Affine::default();
                    m.add_scaled(&arg[j], -1.0);
                    b.le_var(&m, t);
                }
            }
            SubdiffGauge::PolyMax { rows, .. } => {
                for e in affine_map(rows, arg) {
                    b.le_var(&e, t);
                }
            }
            SubdiffGauge::Analysis { base, pinv, kernel, .. } => {
                let z = b.free_vars(kernel.ncols());
                let shifted = add_affine(&affine_map(pinv, arg), &affine_map(kernel, &vars_affine(&z)));
                base.epigraph(b, &shifted, t, true)?;
            }
            SubdiffGauge::InfConvolution { parts, coords_pinv, coords_null, .. } => {
                let w = b.free_vars(coords_null.ncols());
                let c = add_affine(&affine_map(coords_pinv, arg), &affine_map(coords_null, &vars_affine(&w)));
                let mut off = 0;
                for p in parts {
                    let basis = p.domain().basis();
                    let k = basis.ncols();
                    let part = affine_map(basis, &c[off..off + k]);
                    p.epigraph(b, &part, t, true)?;
                    off += k;
                }
            }
            SubdiffGauge::GroupMax { .. } | SubdiffGauge::Generic { .. } => {
                return Err(Error::Unsupported("subdifferential gauge is not LP-representable".into()));
            }
        }
        Ok(())
    }

    /// Polar gauge `sup {⟨d, η⟩ : value(η) ≤ 1}`; only `P_S d` matters.
    pub fn polar(&self, d: &Vector) -> Result<f64> {
        check_dim(self.dim(), d.len())?;
        let domain = self.domain();
        if domain.dim() == 0 {
            return Ok(0.0);
        }
        let ds = domain.project(d);
        Ok(match self {
            SubdiffGauge::BoxMax { coords, .. } => coords.iter().map(|&j| ds[j].abs()).sum(),
            SubdiffGauge::GroupMax { partition, blocks, .. } => blocks.iter().map(|&b| partition.block_norm(b, &ds)).sum(),
            SubdiffGauge::PolyMax { rows, domain } => {
                let basis = domain.basis();
                let mut b = LpBuilder::new();
                let z = b.free_vars(basis.ncols());
                for e in affine_map(&(rows * basis), &vars_affine(&z)) {
                    let mut c = e;
                    c.constant -= 1.0;
                    b.constrain(&c, Sense::Le);
                }
                let obj = basis.transpose() * &ds;
                for (k, &zk) in z.iter().enumerate() {
                    b.set_objective(zk, -obj[k]);
                }
                match b.solve()? {
                    LpOutcome::Optimal(s) => (-s.value).max(0.0),
                    LpOutcome::Unbounded => f64::INFINITY,
                    LpOutcome::Infeasible => return Err(Error::Numerical("empty subdifferential-gauge ball".into())),
                }
            }
            SubdiffGauge::Analysis { base, d: dmat, .. } => base.polar(&(dmat.transpose() * &ds))?,
            SubdiffGauge::InfConvolution { parts, .. } => {
                let mut total = 0.0;
                for p in parts {
                    total += p.polar(&ds)?;
                }
                total
            }
            SubdiffGauge::Generic { regularizer, f, .. } => regularizer.eval(&ds) - f.dot(&ds),
        })
    }

    /// Generic fallback built from the regularizer's polar.
    pub fn generic(md: &ModelDecomposition) -> Self {
        SubdiffGauge::Generic { regularizer: md.regularizer.clone(), f: md.f.clone(), domain: md.s.clone() }
    }
}

/// Smallest `τ ≥ 0` with `J°(τ f + η) ≤ τ`; the map `τ ↦ J°(τf+η) − τ` is convex.
fn generic_bisection(j: &Gauge, f: &Vector, eta: &Vector) -> Result<f64> {
    let gap = |tau: f64| -> Result<f64> { Ok(j.polar_eval(&(f * tau + eta))? - tau) };
    let tol = |tau: f64| 1e-12 * (1.0 + tau);
    if gap(0.0)? <= tol(0.0) {
        return Ok(0.0);
    }
    let mut hi = 10.0 * j.polar_eval(eta)? + 10.0;
    while gap(hi)? > tol(hi) {
        hi *= 2.0;
        if hi > 1e15 {
            return Ok(f64::INFINITY);
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? <= tol(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

impl GaugeEval for SubdiffGauge {
    fn ambient_dim(&self) -> usize {
        self.dim()
    }

    fn value(&self, x: &Vector) -> Result<f64> {
        self.eval(x)
    }

    fn ball_vertices(&self) -> Option<Vec<Vector>> {
        let domain = self.domain();
        if domain.dim() == 0 {
            return Some(vec![]);
        }
        match self {
            SubdiffGauge::BoxMax { n, coords, .. } if coords.len() <= 12 => {
                let k = coords.len();
                Some(
                    (0..1usize << k)
                        .map(|mask| {
                            let mut v = Vector::zeros(*n);
                            for (bit, &j) in coords.iter().enumerate() {
                                v[j] = if mask >> bit & 1 == 1 { -1.0 } else { 1.0 };
                            }
                            v
                        })
                        .collect(),
                )
            }
            SubdiffGauge::PolyMax { rows, domain } if domain.dim() <= MAX_POLY_DIM => {
                let basis = domain.basis();
                let red = rows * basis;
                let hs: Vec<Halfspace> = red.row_iter().map(|r| Halfspace::new(&r.transpose(), 1.0)).collect();
                let en = enumerate_vertices(basis.ncols(), &hs).ok()?;
                if !en.rays.is_empty() {
                    return None;
                }
                Some(en.vertices.iter().map(|z| basis * z).collect())
            }
            _ => None,
        }
    }

    fn zero_set(&self) -> Option<Subspace> {
        Some(Subspace::zero(self.dim()))
    }

    fn finite_domain(&self) -> Option<Subspace> {
        Some(self.domain().clone())
    }

    fn shape(&self) -> Shape<'_> {
        match self {
            SubdiffGauge::BoxMax { domain, .. } => Shape::LinfOn(domain),
            SubdiffGauge::PolyMax { rows, domain } => Shape::PolyMax { rows, domain },
            SubdiffGauge::GroupMax { partition, blocks, domain } => {
                Shape::GroupMax { partition, blocks: blocks.clone(), domain: Some(domain) }
            }
            _ => Shape::Other,
        }
    }
}

/// Local stability parameters with the comparison gauge `Γ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsflParams {
    pub nu: f64,
    pub mu: f64,
    pub tau: f64,
    pub xi: f64,
    #[serde(skip)]
    pub gamma: Gauge,
    /// False when some operator bound was only sampled.
    pub exact: bool,
}

impl PsflParams {
    fn polyhedral(nu: f64, gamma: Gauge) -> Self {
        Self { nu, mu: 0.0, tau: 0.0, xi: 0.0, gamma, exact: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelDecomposition {
    pub x: Vector,
    pub t: Subspace,
    pub s: Subspace,
    pub e: Vector,
    pub f: Vector,
    pub antig: SubdiffGauge,
    pub regularizer: Gauge,
    /// Gradient of an added smooth term at `x`, if any.
    pub smooth_gradient: Option<Vector>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Interior,
    Boundary,
    Outside,
}

impl ModelDecomposition {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn subdiff_gauge(&self, eta: &Vector) -> Result<f64> {
        self.antig.eval(eta)
    }

    /// Polar of the subdifferential gauge; vanishes exactly on `T`.
    pub fn subdiff_gauge_polar(&self, d: &Vector) -> Result<f64> {
        self.antig.polar(d)
    }
}

fn coordinate_complement(n: usize, idx: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; n];
    for &i in idx {
        mark[i] = true;
    }
    (0..n).filter(|&i| !mark[i]).collect()
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("delta must lie in (0, 1], got {delta}")))
    }
}

/// Coordinates treated as nonzero.
pub fn support(x: &Vector) -> Vec<usize> {
    let thr = 1e-10 * (1.0 + x.amax());
    (0..x.len()).filter(|&i| x[i].abs() > thr).collect()
}

pub fn decompose_l1(x: &Vector, delta: f64) -> Result<(ModelDecomposition, PsflParams)> {
    check_delta(delta)?;
    ensure_finite_vec(x, "x")?;
    let n = x.len();
    let i = support(x);
    let ic = coordinate_complement(n, &i);
    let mut e = Vector::zeros(n);
    for &k in &i {
        e[k] = x[k].signum();
    }
    let s = Subspace::coordinates(n, &ic);
    let nu = i.iter().map(|&k| x[k].abs()).fold(f64::INFINITY, f64::min);
    let nu = if i.is_empty() { 0.0 } else { (1.0 - delta) * nu };
    let md = ModelDecomposition {
        x: x.clone(),
        t: Subspace::coordinates(n, &i),
        antig: SubdiffGauge::BoxMax { n, coords: ic, domain: s.clone() },
        s,
        f: e.clone(),
        e,
        regularizer: Gauge::L1(n),
        smooth_gradient: None,
    };
    Ok((md, PsflParams::polyhedral(nu, Gauge::Linf(n))))
}

/// `S = {η : η_{I^c} = 0, ⟨η_I, s_I⟩ = 0}` for a sign pattern `s` on `I`.
fn saturation_subspaces(n: usize, sat: &[usize], sign: &Vector) -> (Subspace, Subspace) {
    let ic = coordinate_complement(n, sat);
    let mut cons = Matrix::zeros(ic.len() + 1, n);
    for (r, &j) in ic.iter().enumerate() {
        cons[(r, j)] = 1.0;
    }
    for &i in sat {
        cons[(ic.len(), i)] = sign[i];
    }
    let s = Subspace::kernel(&cons);
    let t = s.complement();
    (t, s)
}

/// Shared by ℓ∞ and the positive polyhedral branch: `e = f = s/|I|` and the
/// gauge `max_{i∈I} (−|I| s_i η_i)₊`.
fn saturation_decomposition(x: &Vector, sat: &[usize], sign: &Vector, regularizer: Gauge) -> ModelDecomposition {
    let n = x.len();
    let k = sat.len() as f64;
    let (t, s) = saturation_subspaces(n, sat, sign);
    let e = sign / k;
    let mut rows = Matrix::zeros(sat.len(), n);
    for (r, &i) in sat.iter().enumerate() {
        rows[(r, i)] = -k * sign[i];
    }
    ModelDecomposition {
        x: x.clone(),
        t,
        antig: SubdiffGauge::PolyMax { rows, domain: s.clone() },
        s,
        f: e.clone(),
        e,
        regularizer,
        smooth_gradient: None,
    }
}

pub fn decompose_linf(x: &Vector, delta: f64) -> Result<(ModelDecomposition, PsflParams)> {
    check_delta(delta)?;
    ensure_finite_vec(x, "x")?;
    let n = x.len();
    let m = x.amax();
    if m == 0.0 {
        return Err(Error::Degenerate("x = 0 has no saturation set for linf".into()));
    }
    let sat: Vec<usize> = (0..n).filter(|&i| x[i].abs() >= m * (1.0 - 1e-9)).collect();
    let mut sign = Vector::zeros(n);
    for &i in &sat {
        sign[i] = x[i].signum();
    }
    let rest = coordinate_complement(n, &sat).iter().map(|&j| x[j].abs()).fold(0.0, f64::max);
    let md = saturation_decomposition(x, &sat, &sign, Gauge::Linf(n));
    Ok((md, PsflParams::polyhedral((1.0 - delta) * (m - rest), Gauge::L1(n))))
}

pub fn decompose_group(x: &Vector, partition: &BlockPartition, delta: f64) -> Result<(ModelDecomposition, PsflParams)> {
    check_delta(delta)?;
    ensure_finite_vec(x, "x")?;
    let n = x.len();
    check_dim(partition.dim(), n)?;
    let norms: Vec<f64> = (0..partition.blocks().len()).map(|b| partition.block_norm(b, x)).collect();
    let thr = 1e-10 * (1.0 + norms.iter().cloned().fold(0.0, f64::max));
    let (active, inactive): (Vec<usize>, Vec<usize>) = (0..norms.len()).partition(|&b| norms[b] > thr);
    let coords = |bs: &[usize]| -> Vec<usize> {
        let mut v: Vec<usize> = bs.iter().flat_map(|&b| partition.blocks()[b].iter().copied()).collect();
        v.sort_unstable();
        v
    };
    let mut e = Vector::zeros(n);
    for &b in &active {
        for &i in &partition.blocks()[b] {
            e[i] = x[i] / norms[b];
        }
    }
    let s = Subspace::coordinates(n, &coords(&inactive));
    let nu_raw = active.iter().map(|&b| norms[b]).fold(f64::INFINITY, f64::min);
    let nu = if active.is_empty() { 0.0 } else { (1.0 - delta) * nu_raw };
    let mu = if nu > 0.0 { 2f64.sqrt() / nu } else { 0.0 };
    let md = ModelDecomposition {
        x: x.clone(),
        t: Subspace::coordinates(n, &coords(&active)),
        antig: SubdiffGauge::GroupMax { partition: partition.clone(), blocks: inactive, domain: s.clone() },
        s,
        f: e.clone(),
        e,
        regularizer: Gauge::GroupL1L2(partition.clone()),
        smooth_gradient: None,
    };
    let params = PsflParams { nu, mu, tau: 0.0, xi: 0.0, gamma: Gauge::GroupLinfL2(partition.clone()), exact: true };
    Ok((md, params))
}

/// Default relative-interior weight for the nonpositive polyhedral branch.
pub fn default_polyhedral_mu(zero_set_size: usize) -> f64 {
    0.5 / zero_set_size.max(1) as f64
}

/// Decomposition of `J0(u) = max_i (u_i)₊` on `R^{N_H}`.
pub fn decompose_polyhedral(u: &Vector, mu_choice: Option<f64>, delta: f64) -> Result<(ModelDecomposition, PsflParams)> {
    check_delta(delta)?;
    ensure_finite_vec(u, "u")?;
    let n = u.len();
    let j0 = Gauge::PolyhedralH(Matrix::identity(n, n));
    let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = 1e-10 * (1.0 + u.amax());
    if m > scale {
        let sat: Vec<usize> = (0..n).filter(|&i| u[i] >= m * (1.0 - 1e-9)).collect();
        let mut sign = Vector::zeros(n);
        for &i in &sat {
            sign[i] = 1.0;
        }
        let rest = coordinate_complement(n, &sat).iter().map(|&j| u[j]).fold(0.0, f64::max);
        let md = saturation_decomposition(u, &sat, &sign, j0);
        return Ok((md, PsflParams::polyhedral((1.0 - delta) * (m - rest), Gauge::L1(n))));
    }

    let zero: Vec<usize> = (0..n).filter(|&i| u[i] >= -scale).collect();
    let neg = coordinate_complement(n, &zero);
    let k = zero.len();
    let mu = mu_choice.unwrap_or_else(|| default_polyhedral_mu(k));
    if k > 0 && !(mu > 0.0 && mu * (k as f64) < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "relative-interior weight {mu} must satisfy 0 < mu < 1/{k} for a zero set of size {k}"
        )));
    }
    let s = Subspace::coordinates(n, &zero);
    let mut f = Vector::zeros(n);
    let mut rows = Matrix::zeros(k + usize::from(k > 0), n);
    for (r, &i) in zero.iter().enumerate() {
        f[i] = mu;
        rows[(r, i)] = -1.0 / mu;
        rows[(k, i)] = 1.0 / (1.0 - mu * k as f64);
    }
    let nu_raw = neg.iter().map(|&i| u[i].abs()).fold(f64::INFINITY, f64::min);
    let nu = if neg.is_empty() { 0.0 } else { (1.0 - delta) * nu_raw };
    let md = ModelDecomposition {
        x: u.clone(),
        t: Subspace::coordinates(n, &neg),
        antig: SubdiffGauge::PolyMax { rows, domain: s.clone() },
        s,
        e: Vector::zeros(n),
        f,
        regularizer: j0,
        smooth_gradient: None,
    };
    Ok((md, PsflParams::polyhedral(nu, Gauge::L1(n))))
}

/// Decomposition of `J0 ∘ D*` at `x` from that of `J0` at `D* x`; `d` is `N × P`.
pub fn precompose(md0: &ModelDecomposition, d: &Matrix, x: &Vector) -> Result<ModelDecomposition> {
    check_dim(md0.dim(), d.ncols())?;
    check_dim(d.nrows(), x.len())?;
    let u = d.transpose() * x;
    if (&u - &md0.x).amax() > 1e-8 * (1.0 + u.amax()) {
        return Err(Error::InvalidArgument("base decomposition is not taken at D* x".into()));
    }
    let b0 = md0.s.basis();
    let ds0 = d * b0;
    let s = Subspace::range(&ds0);
    let t = s.complement();
    let e = t.project(&(d * &md0.e));
    let f = d * &md0.f;
    let pinv = b0 * pseudo_inverse(&ds0);
    let kernel = b0 * Subspace::kernel(&ds0).basis();
    Ok(ModelDecomposition {
        x: x.clone(),
        t,
        antig: SubdiffGauge::Analysis { base: Box::new(md0.antig.clone()), d: d.clone(), pinv, kernel, domain: s.clone() },
        s,
        e,
        f,
        regularizer: Gauge::Precomposed { base: Box::new(md0.regularizer.clone()), dstar: d.transpose() },
        smooth_gradient: None,
    })
}

/// Decomposition of `J + G` from those of `J` and `G` at the same point.
pub fn sum_decompositions(md_j: &ModelDecomposition, md_g: &ModelDecomposition) -> Result<ModelDecomposition> {
    check_dim(md_j.dim(), md_g.dim())?;
    if (&md_j.x - &md_g.x).amax() > 1e-12 * (1.0 + md_j.x.amax()) {
        return Err(Error::InvalidArgument("decompositions taken at different points".into()));
    }
    let t = md_j.t.intersection(&md_g.t);
    let s = t.complement();
    let e = t.project(&(&md_j.e + &md_g.e));
    let f = &md_j.f + &md_g.f;
    let parts = vec![md_j.antig.clone(), md_g.antig.clone()];
    let stacked =
        Matrix::from_columns(&parts.iter().flat_map(|p| p.domain().basis().column_iter().map(|c| c.into_owned())).collect::<Vec<_>>());
    let (coords_pinv, coords_null) = if stacked.ncols() == 0 {
        (Matrix::zeros(0, md_j.dim()), Matrix::zeros(0, 0))
    } else {
        (pseudo_inverse(&stacked), Subspace::kernel(&stacked).basis().clone())
    };
    let smooth_gradient = match (&md_j.smooth_gradient, &md_g.smooth_gradient) {
        (None, None) => None,
        (a, b) => Some(a.clone().unwrap_or_else(|| Vector::zeros(md_j.dim())) + b.clone().unwrap_or_else(|| Vector::zeros(md_j.dim()))),
    };
    Ok(ModelDecomposition {
        x: md_j.x.clone(),
        t,
        antig: SubdiffGauge::InfConvolution { parts, coords_pinv, coords_null, domain: s.clone() },
        s,
        e,
        f,
        regularizer: Gauge::Sum(vec![md_j.regularizer.clone(), md_g.regularizer.clone()]),
        smooth_gradient,
    })
}

/// Adds a differentiable term with gradient `grad` at `x`; `T`, `S` and the
/// subdifferential gauge are unchanged.
pub fn smooth_perturb(md: &ModelDecomposition, grad: &Vector) -> Result<ModelDecomposition> {
    check_dim(md.dim(), grad.len())?;
    ensure_finite_vec(grad, "gradient")?;
    let mut out = md.clone();
    out.e += md.t.project(grad);
    out.f += grad;
    out.smooth_gradient = Some(md.smooth_gradient.clone().unwrap_or_else(|| Vector::zeros(md.dim())) + grad);
    Ok(out)
}

/// Classifies `η` against `∂J(x) = {η : P_T η = e, antig(P_S(η − f)) ≤ 1}`.
pub fn subdiff_membership(md: &ModelDecomposition, eta: &Vector) -> Result<Membership> {
    check_dim(md.dim(), eta.len())?;
    ensure_finite_vec(eta, "eta")?;
    if (md.t.project(eta) - &md.e).amax() > MEMBERSHIP_TOL {
        return Ok(Membership::Outside);
    }
    let v = md.subdiff_gauge(&md.s.project(&(eta - &md.f)))?;
    Ok(if v < 1.0 - MEMBERSHIP_TOL {
        Membership::Interior
    } else if v <= 1.0 + MEMBERSHIP_TOL {
        Membership::Boundary
    } else {
        Membership::Outside
    })
}

/// `J'(x; δ) = ⟨e, δ_T⟩ + ⟨P_S f, δ_S⟩ + antig°(δ_S)`.
pub fn directional_derivative(md: &ModelDecomposition, delta: &Vector) -> Result<f64> {
    check_dim(md.dim(), delta.len())?;
    let dt = md.t.project(delta);
    let ds = md.s.project(delta);
    Ok(md.e.dot(&dt) + md.s.project(&md.f).dot(&ds) + md.subdiff_gauge_polar(&ds)?)
}

fn bound_term(coef: f64, a: &Matrix, g_in: &dyn GaugeEval, g_out: &dyn GaugeEval, exact: &mut bool) -> Result<f64> {
    if coef == 0.0 {
        return Ok(0.0);
    }
    let b = operator_bound(a, g_in, g_out)?;
    *exact &= b.method.is_exact();
    Ok(coef * b.value)
}

/// Parameters of `H = J + G` with `Γ_H = max(Γ_J, Γ_G)`.
pub fn psfl_sum(
    p_j: &PsflParams,
    p_g: &PsflParams,
    md_j: &ModelDecomposition,
    md_g: &ModelDecomposition,
    md_h: &ModelDecomposition,
) -> Result<PsflParams> {
    let gamma = Gauge::Max(vec![p_j.gamma.clone(), p_g.gamma.clone()]);
    let mut exact = p_j.exact && p_g.exact;
    let pt = md_h.t.projector();
    let mu = bound_term(p_j.mu, &pt, &p_j.gamma, &gamma, &mut exact)? + bound_term(p_g.mu, &pt, &p_g.gamma, &gamma, &mut exact)?;
    let pj = md_h.s.intersection(&md_j.t).projector();
    let pg = md_h.s.intersection(&md_g.t).projector();
    let tau = p_j.tau
        + p_g.tau
        + bound_term(p_j.mu, &pj, &p_j.gamma, &md_h.antig, &mut exact)?
        + bound_term(p_g.mu, &pg, &p_g.gamma, &md_h.antig, &mut exact)?;
    Ok(PsflParams { nu: p_j.nu.min(p_g.nu), mu, tau, xi: p_j.xi.max(p_g.xi), gamma, exact })
}

/// Same kind as `g` on `R^n`.
fn kind_on(g: &Gauge, n: usize) -> Gauge {
    match g {
        Gauge::L1(_) => Gauge::L1(n),
        Gauge::Linf(_) => Gauge::Linf(n),
        _ => Gauge::L2(n),
    }
}

/// Parameters of `J0 ∘ D*` with `Γ` of the same kind as `Γ0` restricted to `T`.
pub fn psfl_precompose(p0: &PsflParams, d: &Matrix, md0: &ModelDecomposition, md: &ModelDecomposition) -> Result<PsflParams> {
    let n = d.nrows();
    let gamma = Gauge::Restricted { base: Box::new(kind_on(&p0.gamma, n)), subspace: md.t.clone() };
    let mut exact = p0.exact;
    let dstar = d.transpose();
    let nd = if md.t.dim() == 0 {
        0.0
    } else {
        let b = operator_bound(&dstar, &gamma, &p0.gamma)?;
        exact &= b.method.is_exact();
        b.value
    };
    let nu = if nd > 0.0 { p0.nu / nd } else { f64::INFINITY };
    let nu = if md.t.dim() == 0 { 0.0 } else { nu };
    let ptd = md.t.projector() * d;
    let mu = bound_term(p0.mu, &ptd, &p0.gamma, &gamma, &mut exact)? * nd;
    let m = pseudo_inverse(&(d * md0.s.basis()));
    let op = md0.s.basis() * m * md.s.projector() * d;
    let tau =
        (bound_term(p0.tau, &op, &md0.antig, &md0.antig, &mut exact)? + bound_term(p0.mu, &op, &p0.gamma, &md0.antig, &mut exact)?) * nd;
    Ok(PsflParams { nu, mu, tau, xi: p0.xi * nd, gamma, exact })
}

/// Forward differences `(D* x)_i = x_{i+1} − x_i`, shape `(n−1) × n`.
pub fn finite_difference(n: usize) -> Matrix {
    let mut m = Matrix::zeros(n.saturating_sub(1), n);
    for i in 0..n.saturating_sub(1) {
        m[(i, i)] = -1.0;
        m[(i, i + 1)] = 1.0;
    }
    m
}

pub fn tv1d_gauge(n: usize) -> Gauge {
    Gauge::Precomposed { base: Box::new(Gauge::L1(n.saturating_sub(1))), dstar: finite_difference(n) }
}

/// Decomposition of `x ↦ J0(Hᵀx)` with `J0(u) = max(u_i)₊`.
pub fn decompose_polyhedral_gauge(h: &Matrix, x: &Vector, mu_choice: Option<f64>, delta: f64) -> Result<(ModelDecomposition, PsflParams)> {
    check_dim(h.nrows(), x.len())?;
    let u = h.transpose() * x;
    let (md0, p0) = decompose_polyhedral(&u, mu_choice, delta)?;
    let mut md = precompose(&md0, h, x)?;
    let params = psfl_precompose(&p0, h, &md0, &md)?;
    md.regularizer = Gauge::PolyhedralH(h.clone());
    Ok((md, params))
}

/// Decomposition for any supported gauge kind at `x`.
pub fn decompose(g: &Gauge, x: &Vector, delta: f64) -> Result<(ModelDecomposition, PsflParams)> {
    check_dim(g.dim(), x.len())?;
    match g {
        Gauge::L1(_) => decompose_l1(x, delta),
        Gauge::Linf(_) => decompose_linf(x, delta),
        Gauge::GroupL1L2(p) => decompose_group(x, p, delta),
        Gauge::PolyhedralH(h) => decompose_polyhedral_gauge(h, x, None, delta),
        Gauge::Precomposed { base, dstar } => {
            let (md0, p0) = decompose(base, &(dstar * x), delta)?;
            let d = dstar.transpose();
            let md = precompose(&md0, &d, x)?;
            let p = psfl_precompose(&p0, &d, &md0, &md)?;
            Ok((md, p))
        }
        Gauge::Sum(parts) => {
            let (mut md, mut p) = decompose(&parts[0], x, delta)?;
            for g in &parts[1..] {
                let (md_g, p_g) = decompose(g, x, delta)?;
                let md_h = sum_decompositions(&md, &md_g)?;
                p = psfl_sum(&p, &p_g, &md, &md_g, &md_h)?;
                md = md_h;
            }
            Ok((md, p))
        }
        _ => Err(Error::Unsupported(format!("model decomposition for {}", g.name()))),
    }
}

/// The decomposition alone, skipping the stability constants.
pub fn decompose_model(g: &Gauge, x: &Vector, delta: f64) -> Result<ModelDecomposition> {
    check_dim(g.dim(), x.len())?;
    match g {
        Gauge::PolyhedralH(h) => {
            let (md0, _) = decompose_polyhedral(&(h.transpose() * x), None, delta)?;
            let mut md = precompose(&md0, h, x)?;
            md.regularizer = Gauge::PolyhedralH(h.clone());
            Ok(md)
        }
        Gauge::Precomposed { base, dstar } => {
            let md0 = decompose_model(base, &(dstar * x), delta)?;
            precompose(&md0, &dstar.transpose(), x)
        }
        Gauge::Sum(parts) => {
            let mut md = decompose_model(&parts[0], x, delta)?;
            for g in &parts[1..] {
                md = sum_decompositions(&md, &decompose_model(g, x, delta)?)?;
            }
            Ok(md)
        }
        _ => decompose(g, x, delta).map(|(md, _)| md),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn l1_example() {
        let (md, p) = decompose_l1(&v(&[3.0, 0.0, -2.0]), 0.5).unwrap();
        assert_eq!(md.e, v(&[1.0, 0.0, -1.0]));
        assert_eq!(md.t.dim(), 2);
        assert_eq!(p.nu, 1.0);
    }

    #[test]
    fn linf_pair_gauge_value() {
        let (md, _) = decompose_linf(&v(&[2.0, 2.0]), 0.5).unwrap();
        assert_eq!(md.e, v(&[0.5, 0.5]));
        assert!((md.subdiff_gauge(&v(&[1.0, -1.0])).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_branch_closed_form() {
        let (md, _) = decompose_polyhedral(&v(&[-1.0, -2.0, 0.0, 0.0]), None, 0.5).unwrap();
        assert_eq!(md.e, Vector::zeros(4));
        assert_eq!(md.f, v(&[0.0, 0.0, 0.25, 0.25]));
        // Σ η / (1 − μ|I0|) with μ|I0| = 1/2.
        assert!((md.subdiff_gauge(&v(&[0.0, 0.0, 0.3, 0.2])).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tv_example() {
        let x = v(&[1.0, 1.0, 2.0, 2.0]);
        let (md, p) = decompose(&tv1d_gauge(4), &x, 0.5).unwrap();
        assert_eq!(md.t.dim(), 2);
        assert!(md.t.contains(&x, 1e-12));
        assert!(p.nu > 0.0);
    }
}
