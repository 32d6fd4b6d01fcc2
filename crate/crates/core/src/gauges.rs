//! Gauges: evaluation, polar evaluation, proximal maps and linear-programming
//! epigraphs, plus gauge identities on polytopes.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{pseudo_inverse, Matrix, Subspace, Vector};
use crate::polytope::{random_directions, Halfspace, Polytope};
use crate::solvers::lp::{affine_map, Affine, LpBuilder, LpOutcome, Sense};

/// Disjoint blocks covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl BlockPartition {
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::InvalidArgument("empty block".into()));
            }
            for &i in b {
                if i >= n {
                    return Err(Error::InvalidArgument(format!("block index {i} out of range for dimension {n}")));
                }
                if seen[i] {
                    return Err(Error::InvalidArgument(format!("index {i} appears in two blocks")));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("index {i} is not covered by any block")));
        }
        Ok(Self { n, blocks })
    }

    /// Consecutive blocks of equal `size`.
    pub fn uniform(n: usize, size: usize) -> Result<Self> {
        if size == 0 || n % size != 0 {
            return Err(Error::InvalidArgument(format!("block size {size} does not divide {n}")));
        }
        Self::new(n, (0..n / size).map(|b| (b * size..(b + 1) * size).collect()).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_norm(&self, b: usize, x: &Vector) -> f64 {
        self.blocks[b].iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt()
    }
}

/// A finite-valued (or subspace-restricted) gauge on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub enum Gauge {
    L1(usize),
    L2(usize),
    Linf(usize),
    /// `Σ_b ‖x_b‖₂`.
    GroupL1L2(BlockPartition),
    /// `max_b ‖x_b‖₂`.
    GroupLinfL2(BlockPartition),
    /// `max_i (⟨x, h_i⟩)₊` with the `h_i` as columns of an `n × m` matrix.
    PolyhedralH(Matrix),
    /// `base(D* x)` with `D*` of shape `p × n`.
    Precomposed {
        base: Box<Gauge>,
        dstar: Matrix,
    },
    Sum(Vec<Gauge>),
    Max(Vec<Gauge>),
    /// `base` on the subspace, `+∞` off it.
    Restricted {
        base: Box<Gauge>,
        subspace: Subspace,
    },
}

fn vec_affine(x: &Vector) -> Vec<Affine> {
    x.iter().map(|&v| Affine::constant(v)).collect()
}

fn vars_affine(v: &[usize]) -> Vec<Affine> {
    v.iter().map(|&i| Affine::var(i)).collect()
}

fn add_affine(a: &[Affine], b: &[Affine], sb: f64) -> Vec<Affine> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut z = x.clone();
            z.add_scaled(y, sb);
            z
        })
        .collect()
}

/// Minimizes the LP variable `t` and returns its value, `+∞` when infeasible.
fn minimize_var(b: &mut LpBuilder, t: usize) -> Result<f64> {
    b.set_objective(t, 1.0);
    match b.solve()? {
        LpOutcome::Optimal(s) => Ok(s.x[t].max(0.0)),
        LpOutcome::Infeasible => Ok(f64::INFINITY),
        LpOutcome::Unbounded => Err(Error::Numerical("gauge LP unbounded below".into())),
    }
}

impl Gauge {
    pub fn dim(&self) -> usize {
        match self {
            Gauge::L1(n) | Gauge::L2(n) | Gauge::Linf(n) => *n,
            Gauge::GroupL1L2(b) | Gauge::GroupLinfL2(b) => b.dim(),
            Gauge::PolyhedralH(h) => h.nrows(),
            Gauge::Precomposed { dstar, .. } => dstar.ncols(),
            Gauge::Sum(gs) | Gauge::Max(gs) => gs.first().map(|g| g.dim()).unwrap_or(0),
            Gauge::Restricted { subspace, .. } => subspace.ambient_dim(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gauge::L1(_) => "l1",
            Gauge::L2(_) => "l2",
            Gauge::Linf(_) => "linf",
            Gauge::GroupL1L2(_) => "group-l1-l2",
            Gauge::GroupLinfL2(_) => "group-linf-l2",
            Gauge::PolyhedralH(_) => "polyhedral",
            Gauge::Precomposed { .. } => "precomposed",
            Gauge::Sum(_) => "sum",
            Gauge::Max(_) => "max",
            Gauge::Restricted { .. } => "restricted",
        }
    }

    /// Validates that sub-gauges agree on the ambient dimension.
    pub fn validate(&self) -> Result<()> {
        match self {
            Gauge::Precomposed { base, dstar } => {
                check_dim(base.dim(), dstar.nrows())?;
                base.validate()
            }
            Gauge::Sum(gs) | Gauge::Max(gs) => {
                if gs.is_empty() {
                    return Err(Error::InvalidArgument("empty gauge list".into()));
                }
                let n = gs[0].dim();
                for g in gs {
                    check_dim(n, g.dim())?;
                    g.validate()?;
                }
                Ok(())
            }
            Gauge::Restricted { base, subspace } => {
                check_dim(base.dim(), subspace.ambient_dim())?;
                base.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn try_eval(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        crate::linalg::ensure_finite_vec(x, "gauge argument")?;
        Ok(self.eval(x))
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        match self {
            Gauge::L1(_) => x.lp_norm(1),
            Gauge::L2(_) => x.norm(),
            Gauge::Linf(_) => x.amax(),
            Gauge::GroupL1L2(b) => (0..b.blocks.len()).map(|k| b.block_norm(k, x)).sum(),
            Gauge::GroupLinfL2(b) => (0..b.blocks.len()).map(|k| b.block_norm(k, x)).fold(0.0, f64::max),
            Gauge::PolyhedralH(h) => (h.transpose() * x).iter().fold(0.0f64, |a, &v| a.max(v)),
            Gauge::Precomposed { base, dstar } => base.eval(&(dstar * x)),
            Gauge::Sum(gs) => gs.iter().map(|g| g.eval(x)).sum(),
            Gauge::Max(gs) => gs.iter().map(|g| g.eval(x)).fold(0.0, f64::max),
            Gauge::Restricted { base, subspace } => {
                if subspace.contains(x, 1e-9) {
                    base.eval(x)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `γ°(u) = sup {⟨x, u⟩ : γ(x) ≤ 1}`.
    pub fn polar_eval(&self, u: &Vector) -> Result<f64> {
        check_dim(self.dim(), u.len())?;
        crate::linalg::ensure_finite_vec(u, "polar argument")?;
        Ok(match self {
            Gauge::L1(_) => u.amax(),
            Gauge::L2(_) => u.norm(),
            Gauge::Linf(_) => u.lp_norm(1),
            Gauge::GroupL1L2(b) => Gauge::GroupLinfL2(b.clone()).eval(u),
            Gauge::GroupLinfL2(b) => Gauge::GroupL1L2(b.clone()).eval(u),
            Gauge::PolyhedralH(h) => polyhedral_support(h, u)?,
            _ => {
                let mut b = LpBuilder::new();
                let t = b.var(0.0, f64::INFINITY);
                self.polar_epigraph(&mut b, &vec_affine(u), t)?;
                minimize_var(&mut b, t)?
            }
        })
    }

    /// Adds constraints enforcing `γ°(arg) ≤ t`.
    pub fn polar_epigraph(&self, b: &mut LpBuilder, arg: &[Affine], t: usize) -> Result<()> {
        match self {
            Gauge::L1(_) => {
                for a in arg {
                    b.le_var(a, t);
                    let mut m = Affine::default();
                    m.add_scaled(a, -1.0);
                    b.le_var(&m, t);
                }
            }
            Gauge::Linf(_) => {
                let mut total = Affine::default();
                for a in arg {
                    let s = b.var(0.0, f64::INFINITY);
                    b.le_var(a, s);
                    let mut m = Affine::default();
                    m.add_scaled(a, -1.0);
                    b.le_var(&m, s);
                    total.terms.push((s, 1.0));
                }
                b.le_var(&total, t);
            }
            Gauge::PolyhedralH(h) => {
                let lam: Vec<usize> = (0..h.ncols()).map(|_| b.var(0.0, f64::INFINITY)).collect();
                for r in 0..h.nrows() {
                    let mut e = Affine::default();
                    for (i, &l) in lam.iter().enumerate() {
                        e.terms.push((l, h[(r, i)]));
                    }
                    e.add_scaled(&arg[r], -1.0);
                    b.constrain(&e, Sense::Eq);
                }
                let total = Affine { terms: lam.iter().map(|&l| (l, 1.0)).collect(), constant: 0.0 };
                b.le_var(&total, t);
            }
            Gauge::Precomposed { base, dstar } => {
                let v = b.free_vars(dstar.nrows());
                let dv = affine_map(&dstar.transpose(), &vars_affine(&v));
                for (e, a) in dv.iter().zip(arg) {
                    let mut c = e.clone();
                    c.add_scaled(a, -1.0);
                    b.constrain(&c, Sense::Eq);
                }
                base.polar_epigraph(b, &vars_affine(&v), t)?;
            }
            Gauge::Sum(gs) => {
                let mut rest = arg.to_vec();
                for g in &gs[..gs.len() - 1] {
                    let v = vars_affine(&b.free_vars(arg.len()));
                    g.polar_epigraph(b, &v, t)?;
                    rest = add_affine(&rest, &v, -1.0);
                }
                gs[gs.len() - 1].polar_epigraph(b, &rest, t)?;
            }
            Gauge::Max(gs) => {
                let mut rest = arg.to_vec();
                let mut total = Affine::default();
                for (k, g) in gs.iter().enumerate() {
                    let lam = b.var(0.0, f64::INFINITY);
                    total.terms.push((lam, 1.0));
                    if k + 1 < gs.len() {
                        let v = vars_affine(&b.free_vars(arg.len()));
                        g.polar_epigraph(b, &v, lam)?;
                        rest = add_affine(&rest, &v, -1.0);
                    } else {
                        g.polar_epigraph(b, &rest, lam)?;
                    }
                }
                b.le_var(&total, t);
            }
            Gauge::Restricted { base, subspace } => {
                let c = subspace.complement();
                let z = b.free_vars(c.dim());
                let shifted = add_affine(arg, &affine_map(c.basis(), &vars_affine(&z)), 1.0);
                base.polar_epigraph(b, &shifted, t)?;
            }
            Gauge::L2(_) | Gauge::GroupL1L2(_) | Gauge::GroupLinfL2(_) => {
                return Err(Error::Unsupported(format!("{} polar inside a linear program", self.name())));
            }
        }
        Ok(())
    }

    /// Adds constraints enforcing `γ(arg) ≤ t`.
    pub fn epigraph(&self, b: &mut LpBuilder, arg: &[Affine], t: usize) -> Result<()> {
        match self {
            Gauge::L1(_) => Gauge::Linf(arg.len()).polar_epigraph(b, arg, t)?,
            Gauge::Linf(_) => Gauge::L1(arg.len()).polar_epigraph(b, arg, t)?,
            Gauge::PolyhedralH(h) => {
                for e in affine_map(&h.transpose(), arg) {
                    b.le_var(&e, t);
                }
                b.le_var(&Affine::constant(0.0), t);
            }
            Gauge::Precomposed { base, dstar } => base.epigraph(b, &affine_map(dstar, arg), t)?,
            Gauge::Sum(gs) => {
                let mut total = Affine::default();
                for g in gs {
                    let s = b.var(0.0, f64::INFINITY);
                    g.epigraph(b, arg, s)?;
                    total.terms.push((s, 1.0));
                }
                b.le_var(&total, t);
            }
            Gauge::Max(gs) => {
                for g in gs {
                    g.epigraph(b, arg, t)?;
                }
            }
            Gauge::Restricted { base, subspace } => {
                for e in affine_map(&subspace.complement().basis().transpose(), arg) {
                    b.constrain(&e, Sense::Eq);
                }
                base.epigraph(b, arg, t)?;
            }
            Gauge::L2(_) | Gauge::GroupL1L2(_) | Gauge::GroupLinfL2(_) => {
                return Err(Error::Unsupported(format!("{} epigraph inside a linear program", self.name())));
            }
        }
        Ok(())
    }

    /// True when the epigraph is LP-representable.
    pub fn is_polyhedral(&self) -> bool {
        match self {
            Gauge::L1(_) | Gauge::Linf(_) | Gauge::PolyhedralH(_) => true,
            Gauge::Precomposed { base, .. } | Gauge::Restricted { base, .. } => base.is_polyhedral(),
            Gauge::Sum(gs) | Gauge::Max(gs) => gs.iter().all(|g| g.is_polyhedral()),
            _ => false,
        }
    }

    /// `argmin_p ½‖p − v‖² + λγ(p)`.
    pub fn prox(&self, lambda: f64, v: &Vector) -> Result<Vector> {
        check_dim(self.dim(), v.len())?;
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument("prox parameter must be positive".into()));
        }
        match self {
            Gauge::L1(_) => Ok(v.map(|x| x.signum() * (x.abs() - lambda).max(0.0))),
            Gauge::GroupL1L2(b) => {
                let mut out = v.clone();
                for (k, blk) in b.blocks.iter().enumerate() {
                    let nb = b.block_norm(k, v);
                    let s = if nb > lambda { 1.0 - lambda / nb } else { 0.0 };
                    for &i in blk {
                        out[i] = v[i] * s;
                    }
                }
                Ok(out)
            }
            Gauge::Linf(_) => Ok(v - project_l1_ball(&(v / lambda), 1.0) * lambda),
            _ => Err(Error::Unsupported(format!("no proximal map for {}", self.name()))),
        }
    }

    /// Vertices of `{x : γ(x) ≤ 1}` when it is a polytope with a tractable list.
    pub fn unit_ball_vertices(&self) -> Option<Vec<Vector>> {
        match self {
            Gauge::L1(n) => Some(signed_units(*n)),
            Gauge::Linf(n) if *n <= 16 => Some(sign_vectors(&Matrix::identity(*n, *n))),
            Gauge::PolyhedralH(h) => {
                let hs: Vec<Halfspace> = h.column_iter().map(|c| Halfspace::new(&c.into_owned(), 1.0)).collect();
                Polytope::from_halfspaces(h.nrows(), &hs).ok().map(|p| p.vertices().to_vec())
            }
            Gauge::Restricted { base, subspace } => {
                if subspace.dim() == 0 {
                    return Some(vec![]);
                }
                if !subspace.has_disjoint_supports() {
                    return None;
                }
                let u = subspace.basis();
                match base.as_ref() {
                    Gauge::L1(_) => Some(
                        u.column_iter()
                            .flat_map(|c| {
                                let c = c.into_owned();
                                let w = &c / c.lp_norm(1);
                                [w.clone(), -w]
                            })
                            .collect(),
                    ),
                    Gauge::Linf(_) if subspace.dim() <= 16 => {
                        let mut scaled = u.clone();
                        for mut c in scaled.column_iter_mut() {
                            let m = c.amax();
                            c /= m;
                        }
                        Some(sign_vectors(&scaled))
                    }
                    _ => None,
                }
            }
            _ => None,
        }
    }

    /// `{x : γ(x) = 0}` when it is a linear subspace.
    pub fn kernel_subspace(&self) -> Option<Subspace> {
        let n = self.dim();
        match self {
            Gauge::L1(_) | Gauge::L2(_) | Gauge::Linf(_) | Gauge::GroupL1L2(_) | Gauge::GroupLinfL2(_) => Some(Subspace::zero(n)),
            Gauge::PolyhedralH(h) => {
                let hs: Vec<Halfspace> = h.column_iter().map(|c| Halfspace::new(&c.into_owned(), 1.0)).collect();
                if Polytope::from_halfspaces(h.nrows(), &hs).is_ok() {
                    Some(Subspace::zero(n))
                } else {
                    None
                }
            }
            Gauge::Precomposed { base, dstar } => {
                let k0 = base.kernel_subspace()?;
                if k0.dim() == 0 {
                    Some(Subspace::kernel(dstar))
                } else {
                    None
                }
            }
            Gauge::Sum(gs) | Gauge::Max(gs) => {
                let mut k = Subspace::full(n);
                for g in gs {
                    k = k.intersection(&g.kernel_subspace()?);
                }
                Some(k)
            }
            Gauge::Restricted { base, subspace } => Some(base.kernel_subspace()?.intersection(subspace)),
        }
    }
}

fn signed_units(n: usize) -> Vec<Vector> {
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut v = Vector::zeros(n);
            v[i] = s;
            out.push(v);
        }
    }
    out
}

/// All `Σ ±c_k` over the columns `c_k`.
fn sign_vectors(cols: &Matrix) -> Vec<Vector> {
    let k = cols.ncols();
    (0..1usize << k)
        .map(|mask| {
            let mut v = Vector::zeros(cols.nrows());
            for j in 0..k {
                let s = if mask >> j & 1 == 1 { -1.0 } else { 1.0 };
                v += cols.column(j) * s;
            }
            v
        })
        .collect()
}

/// Support function of `{x : Hᵀx ≤ 1}`.
fn polyhedral_support(h: &Matrix, u: &Vector) -> Result<f64> {
    let mut b = LpBuilder::new();
    let x = b.free_vars(h.nrows());
    for e in affine_map(&h.transpose(), &vars_affine(&x)) {
        let mut c = e;
        c.constant -= 1.0;
        b.constrain(&c, Sense::Le);
    }
    for (i, &xi) in x.iter().enumerate() {
        b.set_objective(xi, -u[i]);
    }
    match b.solve()? {
        LpOutcome::Optimal(s) => Ok((-s.value).max(0.0)),
        LpOutcome::Unbounded => Ok(f64::INFINITY),
        LpOutcome::Infeasible => Err(Error::Numerical("polyhedral unit ball reported empty".into())),
    }
}

/// Euclidean projection onto `{w : ‖w‖₁ ≤ radius}` by sorting.
pub fn project_l1_ball(v: &Vector, radius: f64) -> Vector {
    if v.lp_norm(1) <= radius {
        return v.clone();
    }
    let mut mu: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mu.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &m) in mu.iter().enumerate() {
        cum += m;
        let t = (cum - radius) / (j + 1) as f64;
        if m - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| x.signum() * (x.abs() - theta).max(0.0))
}

/// `inf_z max(γ_{B1}(z), γ_{B2}(x − z))`, the gauge of `B1 + B2`.
pub fn minkowski_sum_gauge(b1: &Polytope, b2: &Polytope, x: &Vector) -> Result<f64> {
    check_dim(b1.dim(), x.len())?;
    check_dim(b2.dim(), x.len())?;
    let mut b = LpBuilder::new();
    let t = b.var(0.0, f64::INFINITY);
    let z = vars_affine(&b.free_vars(x.len()));
    let rest = add_affine(&vec_affine(x), &z, -1.0);
    for (ball, arg) in [(b1, &z), (b2, &rest)] {
        for h in ball.halfspaces() {
            let mut e = Affine::default();
            for (j, a) in arg.iter().enumerate() {
                e.add_scaled(a, h.normal[j]);
            }
            e.terms.push((t, -h.offset));
            b.constrain(&e, Sense::Le);
        }
    }
    minimize_var(&mut b, t)
}

/// `γ_{D(C)}(x) = inf_{z ∈ Ker D} γ_C(D⁺x + z)`; `+∞` off the range of `D`.
pub fn linear_image_gauge(c: &Polytope, d: &Matrix, x: &Vector) -> Result<f64> {
    check_dim(c.dim(), d.ncols())?;
    check_dim(d.nrows(), x.len())?;
    let pinv = pseudo_inverse(d);
    let v0 = &pinv * x;
    if (d * &v0 - x).norm() > 1e-9 * (1.0 + x.norm()) {
        return Ok(f64::INFINITY);
    }
    let ker = Subspace::kernel(d);
    let mut b = LpBuilder::new();
    let t = b.var(0.0, f64::INFINITY);
    let zc = b.free_vars(ker.dim());
    let arg = add_affine(&vec_affine(&v0), &affine_map(ker.basis(), &vars_affine(&zc)), 1.0);
    for h in c.halfspaces() {
        let mut e = Affine::default();
        for (j, a) in arg.iter().enumerate() {
            e.add_scaled(a, h.normal[j]);
        }
        e.terms.push((t, -h.offset));
        b.constrain(&e, Sense::Le);
    }
    minimize_var(&mut b, t)
}

/// `max_ρ σ_{ρA ∩ (1−ρ)B}(d)` over `ρ ∈ [0, 1]`, one LP in `(u, ρ)` since the
/// scaled constraints are jointly linear.
fn inverse_sum_support(a: &[Halfspace], b: &[Halfspace], d: &Vector) -> Result<f64> {
    let mut lp = LpBuilder::new();
    let u = lp.free_vars(d.len());
    let rho = lp.var(0.0, 1.0);
    for h in a {
        let mut e = Affine { terms: u.iter().enumerate().map(|(j, &v)| (v, h.normal[j])).collect(), constant: 0.0 };
        e.terms.push((rho, -h.offset));
        lp.constrain(&e, Sense::Le);
    }
    for h in b {
        let mut e = Affine { terms: u.iter().enumerate().map(|(j, &v)| (v, h.normal[j])).collect(), constant: -h.offset };
        e.terms.push((rho, h.offset));
        lp.constrain(&e, Sense::Le);
    }
    for (j, &v) in u.iter().enumerate() {
        lp.set_objective(v, -d[j]);
    }
    Ok(-lp.solve()?.optimal()?.value)
}

/// Result of comparing `(C1 + C2)°` with the inverse sum of the polars.
#[derive(Debug, Clone, Serialize)]
pub struct InverseSumReport {
    pub max_gap: f64,
    pub directions: usize,
    pub pass: bool,
}

/// Checks `(C1 + C2)° = ∪_{ρ∈[0,1]} ρC1° ∩ (1−ρ)C2°` through support functions
/// on random directions.
pub fn inverse_sum_polar_report(p1: &Polytope, p2: &Polytope, seed: u64) -> Result<InverseSumReport> {
    use rand::SeedableRng;
    check_dim(p1.dim(), p2.dim())?;
    let lhs = p1.minkowski_sum(p2)?.polar()?;
    let q1: Vec<Halfspace> = p1.vertices().iter().map(|v| Halfspace::new(v, 1.0)).collect();
    let q2: Vec<Halfspace> = p2.vertices().iter().map(|v| Halfspace::new(v, 1.0)).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dirs = random_directions(p1.dim(), 200, &mut rng);
    let mut max_gap = 0.0f64;
    for d in &dirs {
        max_gap = max_gap.max((lhs.support(d) - inverse_sum_support(&q1, &q2, d)?).abs());
    }
    Ok(InverseSumReport { max_gap, directions: dirs.len(), pass: max_gap <= 1e-5 })
}

pub fn inverse_sum_polar_check(p1: &Polytope, p2: &Polytope) -> Result<bool> {
    Ok(inverse_sum_polar_report(p1, p2, 0x9E37)?.pass)
}

/// `conv(P1° ∪ P2°)`, which equals `(P1 ∩ P2)°`.
pub fn polytope_intersection_polar(p1: &Polytope, p2: &Polytope) -> Result<Polytope> {
    p1.polar()?.hull_union(&p2.polar()?)
}

pub fn polar_set(p: &Polytope) -> Result<Polytope> {
    p.polar()
}

/// Support-function or gauge gap below which a polar identity counts as verified.
pub const IDENTITY_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolarIdentity {
    /// `C°° = C`.
    Bipolar,
    /// `(C ∩ D)° = conv(C° ∪ D°)`.
    Intersection,
    /// `(ρC)° = C°/ρ`.
    Scaling,
    /// `γ_{C+D}(x) = inf_z max(γ_C(z), γ_D(x − z))`.
    MinkowskiSum,
    /// `γ_{M(C)}(x) = inf {γ_C(z) : Mz = x}`.
    LinearImage,
    /// `(C + D)° = ∪_ρ ρC° ∩ (1−ρ)D°`.
    InverseSum,
}

impl PolarIdentity {
    pub const ALL: [PolarIdentity; 6] = [
        PolarIdentity::Bipolar,
        PolarIdentity::Intersection,
        PolarIdentity::Scaling,
        PolarIdentity::MinkowskiSum,
        PolarIdentity::LinearImage,
        PolarIdentity::InverseSum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolarIdentity::Bipolar => "bipolar",
            PolarIdentity::Intersection => "intersection",
            PolarIdentity::Scaling => "scaling",
            PolarIdentity::MinkowskiSum => "minkowski-sum",
            PolarIdentity::LinearImage => "linear-image",
            PolarIdentity::InverseSum => "inverse-sum",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub identity: PolarIdentity,
    pub max_gap: f64,
    pub pass: bool,
}

/// Evaluates both sides of `id` on `c` (and `d` where a second set is
/// needed) through support functions or gauge values at seeded random points.
pub fn polar_identity(id: PolarIdentity, c: &Polytope, d: &Polytope, seed: u64) -> Result<IdentityReport> {
    use rand::{Rng, SeedableRng};
    check_dim(c.dim(), d.dim())?;
    let n = c.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dirs = random_directions(n, 200, &mut rng);
    let gauge_gap = |pts: &[Vector], f: &dyn Fn(&Vector) -> Result<f64>, g: &dyn Fn(&Vector) -> f64| -> Result<f64> {
        let mut m = 0.0f64;
        for x in pts {
            m = m.max((f(x)? - g(x)).abs());
        }
        Ok(m)
    };
    let max_gap = match id {
        PolarIdentity::Bipolar => {
            // Rebuilt by vertex enumeration so the check is not a representation swap.
            let hs: Vec<Halfspace> = c.polar()?.vertices().iter().map(|w| Halfspace::new(w, 1.0)).collect();
            Polytope::from_halfspaces(n, &hs)?.support_gap(c, &dirs)
        }
        PolarIdentity::Intersection => c.intersection(d)?.polar()?.support_gap(&polytope_intersection_polar(c, d)?, &dirs),
        PolarIdentity::Scaling => {
            let rho = 0.3 + 2.0 * rng.random::<f64>();
            c.scale(rho)?.polar()?.support_gap(&c.polar()?.scale(1.0 / rho)?, &dirs)
        }
        PolarIdentity::MinkowskiSum => {
            let sum = c.minkowski_sum(d)?;
            let pts = random_directions(n, 20, &mut rng);
            gauge_gap(&pts, &|x| minkowski_sum_gauge(c, d, x), &|x| sum.gauge(x))?
        }
        PolarIdentity::LinearImage => {
            let m = crate::linalg::gaussian_matrix(n, n, &mut rng);
            let image = c.linear_image(&m)?;
            let pts = random_directions(n, 20, &mut rng);
            gauge_gap(&pts, &|x| linear_image_gauge(c, &m, x), &|x| image.gauge(x))?
        }
        PolarIdentity::InverseSum => inverse_sum_polar_report(c, d, seed)?.max_gap,
    };
    Ok(IdentityReport { identity: id, max_gap, pass: max_gap <= IDENTITY_TOL })
}
