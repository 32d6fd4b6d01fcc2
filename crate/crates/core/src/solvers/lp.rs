//! Dense two-phase revised simplex.
//!
//! The basis inverse is kept explicitly and updated by rank-one pivots, with a
//! periodic refactorization. Dantzig pricing is used until a run of degenerate
//! pivots is observed, after which Bland's rule takes over until progress resumes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// `min cᵀx` subject to `rows[i]·x (sense) rhs[i]` and `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub senses: Vec<Sense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Multipliers of the original constraint rows (objective gradient convention).
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Result<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Ok(s),
            LpOutcome::Infeasible => Err(Error::Infeasible),
            LpOutcome::Unbounded => Err(Error::Unbounded),
        }
    }
}

impl LpProblem {
    pub fn new(n: usize) -> Self {
        Self { objective: vec![0.0; n], rows: vec![], senses: vec![], rhs: vec![], lower: vec![0.0; n], upper: vec![f64::INFINITY; n] }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.lower.len().min(self.upper.len()) });
        }
        if self.senses.len() != self.rows.len() || self.rhs.len() != self.rows.len() {
            return Err(Error::InvalidArgument("row, sense and rhs counts differ".into()));
        }
        for r in &self.rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.len() });
            }
            crate::error::check_finite_slice(r, "LP constraint row")?;
        }
        crate::error::check_finite_slice(&self.objective, "LP objective")?;
        crate::error::check_finite_slice(&self.rhs, "LP right-hand side")?;
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(Error::InvalidArgument(format!("bad bounds on variable {j}")));
            }
        }
        Ok(())
    }
}

/// One original variable expressed through standard-form columns.
#[derive(Debug, Clone)]
struct VarMap {
    offset: f64,
    cols: Vec<(usize, f64)>,
}

pub fn lp_solve(p: &LpProblem) -> Result<LpOutcome> {
    p.validate()?;
    let n = p.n_vars();
    for j in 0..n {
        if p.lower[j] > p.upper[j] {
            return Ok(LpOutcome::Infeasible);
        }
    }

    // Variable substitution into nonnegative columns.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = vec![];
    for j in 0..n {
        let (l, u) = (p.lower[j], p.upper[j]);
        if l.is_finite() {
            maps.push(VarMap { offset: l, cols: vec![(ncols, 1.0)] });
            if u.is_finite() {
                bound_rows.push((ncols, u - l));
            }
            ncols += 1;
        } else if u.is_finite() {
            maps.push(VarMap { offset: u, cols: vec![(ncols, -1.0)] });
            ncols += 1;
        } else {
            maps.push(VarMap { offset: 0.0, cols: vec![(ncols, 1.0), (ncols + 1, -1.0)] });
            ncols += 2;
        }
    }
    let nstruct = ncols;
    let m = p.rows.len() + bound_rows.len();

    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::with_capacity(m);
    for (i, r) in p.rows.iter().enumerate() {
        let mut a = vec![0.0; nstruct];
        let mut b = p.rhs[i];
        for j in 0..n {
            if r[j] == 0.0 {
                continue;
            }
            b -= r[j] * maps[j].offset;
            for &(c, s) in &maps[j].cols {
                a[c] += r[j] * s;
            }
        }
        rows.push((a, p.senses[i], b));
    }
    for &(c, ub) in &bound_rows {
        let mut a = vec![0.0; nstruct];
        a[c] = 1.0;
        rows.push((a, Sense::Le, ub));
    }

    let mut cost = vec![0.0; nstruct];
    for j in 0..n {
        for &(c, s) in &maps[j].cols {
            cost[c] += p.objective[j] * s;
        }
    }

    // Slacks.
    let nslack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let ntot = nstruct + nslack;
    let mut a = DMatrix::<f64>::zeros(m, ntot);
    let mut b = vec![0.0; m];
    let mut row_sign = vec![1.0; m];
    let mut slack_of_row: Vec<Option<usize>> = vec![None; m];
    let mut k = nstruct;
    for (i, (r, sense, rhs)) in rows.iter().enumerate() {
        for j in 0..nstruct {
            a[(i, j)] = r[j];
        }
        match sense {
            Sense::Le => {
                a[(i, k)] = 1.0;
                slack_of_row[i] = Some(k);
                k += 1;
            }
            Sense::Ge => {
                a[(i, k)] = -1.0;
                slack_of_row[i] = Some(k);
                k += 1;
            }
            Sense::Eq => {}
        }
        b[i] = *rhs;
        if b[i] < 0.0 {
            row_sign[i] = -1.0;
            b[i] = -b[i];
            for j in 0..ntot {
                a[(i, j)] = -a[(i, j)];
            }
        }
    }
    cost.resize(ntot, 0.0);

    let mut tab = Simplex::new(a, b, cost, slack_of_row);
    let status = tab.run()?;
    match status {
        Phase::Infeasible => Ok(LpOutcome::Infeasible),
        Phase::Unbounded => Ok(LpOutcome::Unbounded),
        Phase::Optimal => {
            let z = tab.primal();
            let y = tab.duals();
            let mut x = vec![0.0; n];
            for j in 0..n {
                x[j] = maps[j].offset + maps[j].cols.iter().map(|&(c, s)| s * z[c]).sum::<f64>();
            }
            let value = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
            let duals = (0..p.rows.len()).map(|i| y[i] * row_sign[i]).collect();
            Ok(LpOutcome::Optimal(LpSolution { x, value, duals }))
        }
    }
}

enum Phase {
    Optimal,
    Infeasible,
    Unbounded,
}

struct Simplex {
    a: DMatrix<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
    m: usize,
    ntot: usize,
    art_start: usize,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    xb: Vec<f64>,
    is_basic: Vec<bool>,
    iters: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_RUN: usize = 40;

impl Simplex {
    fn new(a: DMatrix<f64>, b: Vec<f64>, cost: Vec<f64>, slack_of_row: Vec<Option<usize>>) -> Self {
        let m = a.nrows();
        let n0 = a.ncols();
        // Rows whose slack is +1 after sign normalization start with that slack basic.
        let mut basis = vec![usize::MAX; m];
        let mut art_rows = vec![];
        for i in 0..m {
            match slack_of_row[i] {
                Some(s) if a[(i, s)] > 0.0 => basis[i] = s,
                _ => art_rows.push(i),
            }
        }
        let ntot = n0 + art_rows.len();
        let mut full = DMatrix::<f64>::zeros(m, ntot);
        full.columns_mut(0, n0).copy_from(&a);
        for (k, &i) in art_rows.iter().enumerate() {
            full[(i, n0 + k)] = 1.0;
            basis[i] = n0 + k;
        }
        let mut cost_full = cost;
        cost_full.resize(ntot, 0.0);
        let mut is_basic = vec![false; ntot];
        for &j in &basis {
            is_basic[j] = true;
        }
        let xb = b.clone();
        Self { a: full, b, cost: cost_full, m, ntot, art_start: n0, basis, binv: DMatrix::identity(m, m), xb, is_basic, iters: 0 }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        if m == 0 {
            return Ok(());
        }
        let mut bm = DMatrix::<f64>::zeros(m, m);
        for (i, &j) in self.basis.iter().enumerate() {
            bm.set_column(i, &self.a.column(j));
        }
        self.binv = bm.lu().try_inverse().ok_or_else(|| Error::Numerical("singular simplex basis".into()))?;
        let bv = nalgebra::DVector::from_column_slice(&self.b);
        let xb = &self.binv * bv;
        for i in 0..m {
            self.xb[i] = if xb[i] < 0.0 && xb[i] > -1e-9 { 0.0 } else { xb[i] };
        }
        Ok(())
    }

    /// Optimizes `costs` over the current basis. Columns with `allowed[j] == false` never enter.
    fn optimize(&mut self, costs: &[f64], allowed: &[bool]) -> Result<Phase> {
        let m = self.m;
        let cscale = 1.0 + costs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let opt_tol = 1e-9 * cscale;
        let max_iter = 50 * (m + self.ntot) + 1000;
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut since_refactor = 0usize;
        let mut y = vec![0.0; m];
        let mut d = vec![0.0; m];
        loop {
            self.iters += 1;
            if self.iters > max_iter {
                return Err(Error::Numerical("simplex iteration limit reached".into()));
            }
            // y = B^{-T} c_B
            for r in 0..m {
                let mut s = 0.0;
                for i in 0..m {
                    let cb = costs[self.basis[i]];
                    if cb != 0.0 {
                        s += cb * self.binv[(i, r)];
                    }
                }
                y[r] = s;
            }
            // Pricing.
            let mut enter = usize::MAX;
            let mut best = -opt_tol;
            for j in 0..self.ntot {
                if self.is_basic[j] || !allowed[j] {
                    continue;
                }
                let col = self.a.column(j);
                let mut dj = costs[j];
                for r in 0..m {
                    let v = col[r];
                    if v != 0.0 {
                        dj -= y[r] * v;
                    }
                }
                if dj < best {
                    enter = j;
                    if bland {
                        break;
                    }
                    best = dj;
                }
            }
            if enter == usize::MAX {
                return Ok(Phase::Optimal);
            }
            // d = B^{-1} a_q
            let col = self.a.column(enter);
            d.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..m {
                let v = col[r];
                if v != 0.0 {
                    let bc = self.binv.column(r);
                    for i in 0..m {
                        d[i] += bc[i] * v;
                    }
                }
            }
            // Ratio test.
            let mut leave = usize::MAX;
            let mut theta = f64::INFINITY;
            for i in 0..m {
                if d[i] > PIVOT_TOL {
                    let t = self.xb[i].max(0.0) / d[i];
                    let better = if leave == usize::MAX || t < theta - 1e-12 {
                        true
                    } else if t <= theta + 1e-12 {
                        if bland {
                            self.basis[i] < self.basis[leave]
                        } else {
                            d[i] > d[leave]
                        }
                    } else {
                        false
                    };
                    if better {
                        leave = i;
                        theta = t;
                    }
                }
            }
            if leave == usize::MAX {
                return Ok(Phase::Unbounded);
            }
            // Pivot.
            for i in 0..m {
                if i != leave {
                    self.xb[i] -= theta * d[i];
                    if self.xb[i] < 0.0 && self.xb[i] > -1e-10 {
                        self.xb[i] = 0.0;
                    }
                }
            }
            self.xb[leave] = theta;
            let piv = d[leave];
            for r in 0..m {
                self.binv[(leave, r)] /= piv;
            }
            for i in 0..m {
                if i == leave || d[i] == 0.0 {
                    continue;
                }
                let f = d[i];
                for r in 0..m {
                    let v = self.binv[(leave, r)];
                    if v != 0.0 {
                        self.binv[(i, r)] -= f * v;
                    }
                }
            }
            self.is_basic[self.basis[leave]] = false;
            self.is_basic[enter] = true;
            self.basis[leave] = enter;

            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
            since_refactor += 1;
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
        }
    }

    fn run(&mut self) -> Result<Phase> {
        let m = self.m;
        let ntot = self.ntot;
        let has_art = self.art_start < ntot;
        if has_art {
            let mut c1 = vec![0.0; ntot];
            for c in c1.iter_mut().skip(self.art_start) {
                *c = 1.0;
            }
            let allowed = vec![true; ntot];
            match self.optimize(&c1, &allowed)? {
                Phase::Unbounded => return Err(Error::Numerical("phase one unbounded".into())),
                _ => {}
            }
            self.refactor()?;
            let infeas: f64 = (0..m).filter(|&i| self.basis[i] >= self.art_start).map(|i| self.xb[i]).sum();
            let bscale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if infeas > 1e-9 * bscale {
                return Ok(Phase::Infeasible);
            }
            // Drive zero-level artificials out of the basis where possible.
            for i in 0..m {
                if self.basis[i] < self.art_start {
                    continue;
                }
                let mut best = (usize::MAX, 1e-9);
                for j in 0..self.art_start {
                    if self.is_basic[j] {
                        continue;
                    }
                    let v: f64 = (0..m).map(|r| self.binv[(i, r)] * self.a[(r, j)]).sum();
                    if v.abs() > best.1 {
                        best = (j, v.abs());
                    }
                }
                if best.0 != usize::MAX {
                    let j = best.0;
                    self.is_basic[self.basis[i]] = false;
                    self.is_basic[j] = true;
                    self.basis[i] = j;
                    self.refactor()?;
                }
            }
        }
        let mut allowed = vec![true; ntot];
        for a in allowed.iter_mut().skip(self.art_start) {
            *a = false;
        }
        let costs = self.cost.clone();
        let status = self.optimize(&costs, &allowed)?;
        self.refactor()?;
        Ok(status)
    }

    fn primal(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.ntot];
        for (i, &j) in self.basis.iter().enumerate() {
            z[j] = self.xb[i].max(0.0);
        }
        z
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        (0..m).map(|r| (0..m).map(|i| self.cost[self.basis[i]] * self.binv[(i, r)]).sum()).collect()
    }
}

/// Sparse-term helper for assembling LPs.
#[derive(Debug, Clone, Default)]
pub struct LpBuilder {
    lower: Vec<f64>,
    upper: Vec<f64>,
    objective: Vec<f64>,
    rows: Vec<(Vec<(usize, f64)>, Sense, f64)>,
}

/// `Σ coef·var + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self { terms: vec![], constant: c }
    }

    pub fn var(v: usize) -> Self {
        Self { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn add_scaled(&mut self, other: &Affine, s: f64) {
        if s == 0.0 {
            return;
        }
        self.constant += s * other.constant;
        for &(v, c) in &other.terms {
            self.terms.push((v, s * c));
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.1 == 0.0)
    }
}

/// Linear map applied to a vector of affine expressions.
pub fn affine_map(m: &nalgebra::DMatrix<f64>, v: &[Affine]) -> Vec<Affine> {
    (0..m.nrows())
        .map(|i| {
            let mut out = Affine::default();
            for (j, e) in v.iter().enumerate() {
                out.add_scaled(e, m[(i, j)]);
            }
            out
        })
        .collect()
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&mut self, lower: f64, upper: f64) -> usize {
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.push(0.0);
        self.lower.len() - 1
    }

    pub fn free_vars(&mut self, k: usize) -> Vec<usize> {
        (0..k).map(|_| self.var(f64::NEG_INFINITY, f64::INFINITY)).collect()
    }

    pub fn set_objective(&mut self, v: usize, c: f64) {
        self.objective[v] = c;
    }

    /// Adds `expr (sense) 0`.
    pub fn constrain(&mut self, expr: &Affine, sense: Sense) {
        self.rows.push((expr.terms.clone(), sense, -expr.constant));
    }

    /// Adds `expr ≤ t`.
    pub fn le_var(&mut self, expr: &Affine, t: usize) {
        let mut e = expr.clone();
        e.terms.push((t, -1.0));
        self.constrain(&e, Sense::Le);
    }

    pub fn n_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn build(&self) -> LpProblem {
        let n = self.n_vars();
        let mut p = LpProblem::new(n);
        p.objective = self.objective.clone();
        p.lower = self.lower.clone();
        p.upper = self.upper.clone();
        for (terms, sense, rhs) in &self.rows {
            let mut r = vec![0.0; n];
            for &(v, c) in terms {
                r[v] += c;
            }
            p.rows.push(r);
            p.senses.push(*sense);
            p.rhs.push(*rhs);
        }
        p
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        lp_solve(&self.build())
    }
}
