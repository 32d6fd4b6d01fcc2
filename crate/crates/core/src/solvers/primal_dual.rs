//! Chambolle–Pock iterations for `F(x) + G(Kx)` with `G` a sum of scaled
//! gauges whose polar balls admit exact projections.

use crate::error::{Error, Result};
use crate::gauges::{project_l1_ball, BlockPartition, Gauge};
use crate::linalg::{power_norm, pseudo_inverse, Matrix, Vector};

use super::fista::LoopOutput;

/// Polar unit ball of a base gauge.
#[derive(Debug, Clone)]
pub(crate) enum DualBall {
    /// Polar of ℓ1.
    Box,
    /// Polar of ℓ∞.
    L1,
    L2,
    /// Polar of the group ℓ1-ℓ2 norm.
    GroupBox(BlockPartition),
    /// Polar of `max(u_i)₊`: `{p ≥ 0, Σ p ≤ 1}`.
    CappedSimplex,
}

#[derive(Debug, Clone)]
pub(crate) struct Term {
    pub k: Matrix,
    pub ball: DualBall,
}

/// Writes `g = Σ_i base_i(K_i x)`.
pub(crate) fn analysis_terms(g: &Gauge) -> Result<Vec<Term>> {
    let n = g.dim();
    let id = || Matrix::identity(n, n);
    Ok(match g {
        Gauge::L1(_) => vec![Term { k: id(), ball: DualBall::Box }],
        Gauge::Linf(_) => vec![Term { k: id(), ball: DualBall::L1 }],
        Gauge::L2(_) => vec![Term { k: id(), ball: DualBall::L2 }],
        Gauge::GroupL1L2(p) => vec![Term { k: id(), ball: DualBall::GroupBox(p.clone()) }],
        Gauge::PolyhedralH(h) => vec![Term { k: h.transpose(), ball: DualBall::CappedSimplex }],
        Gauge::Precomposed { base, dstar } => analysis_terms(base)?.into_iter().map(|t| Term { k: t.k * dstar, ball: t.ball }).collect(),
        Gauge::Sum(parts) => {
            let mut out = vec![];
            for p in parts {
                out.extend(analysis_terms(p)?);
            }
            out
        }
        _ => return Err(Error::Unsupported(format!("no splitting for {}", g.name()))),
    })
}

/// Projection of `v` onto `s·{p ≥ 0, Σ p ≤ 1}`.
fn project_capped_simplex(v: &Vector, s: f64) -> Vector {
    let q = v.map(|a| a.max(0.0));
    if q.sum() <= s {
        return q;
    }
    let mut mu: Vec<f64> = v.iter().copied().collect();
    mu.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &m) in mu.iter().enumerate() {
        cum += m;
        let t = (cum - s) / (j + 1) as f64;
        if m - t > 0.0 {
            theta = t;
        }
    }
    v.map(|a| (a - theta).max(0.0))
}

fn project_ball(ball: &DualBall, v: &Vector, s: f64) -> Vector {
    match ball {
        DualBall::Box => v.map(|a| a.clamp(-s, s)),
        DualBall::L1 => project_l1_ball(&(v / s), 1.0) * s,
        DualBall::L2 => {
            let nv = v.norm();
            if nv <= s {
                v.clone()
            } else {
                v * (s / nv)
            }
        }
        DualBall::GroupBox(p) => {
            let mut out = v.clone();
            for (b, blk) in p.blocks().iter().enumerate() {
                let nb = p.block_norm(b, v);
                if nb > s {
                    for &i in blk {
                        out[i] *= s / nb;
                    }
                }
            }
            out
        }
        DualBall::CappedSimplex => project_capped_simplex(v, s),
    }
}

/// Prox of the smooth or constraint part.
pub(crate) enum PrimalProx {
    /// `½‖y − Φx‖²` through a Cholesky factor of `I + τΦᵀΦ`.
    Quadratic { chol: nalgebra::Cholesky<f64, nalgebra::Dyn>, tau_phity: Vector },
    /// Indicator of `{Φx = y}`.
    Affine { phi: Matrix, pinv: Matrix, y: Vector },
}

impl PrimalProx {
    pub fn quadratic(phi: &Matrix, y: &Vector, tau: f64) -> Result<Self> {
        let n = phi.ncols();
        let m = Matrix::identity(n, n) + phi.transpose() * phi * tau;
        let chol = m.cholesky().ok_or_else(|| Error::Numerical("Cholesky of I + τΦᵀΦ failed".into()))?;
        Ok(PrimalProx::Quadratic { chol, tau_phity: phi.transpose() * y * tau })
    }

    pub fn affine(phi: &Matrix, y: &Vector) -> Self {
        PrimalProx::Affine { phi: phi.clone(), pinv: pseudo_inverse(phi), y: y.clone() }
    }

    fn apply(&self, v: &Vector) -> Vector {
        match self {
            PrimalProx::Quadratic { chol, tau_phity } => chol.solve(&(v + tau_phity)),
            PrimalProx::Affine { phi, pinv, y } => v - pinv * (phi * v - y),
        }
    }
}

/// Step size `0.99/‖K‖` for both primal and dual updates.
pub(crate) fn step_size(terms: &[Term]) -> f64 {
    let k = stack(terms);
    let nk = power_norm(&k, 1e-10, 100_000);
    if nk > 0.0 {
        0.99 / nk
    } else {
        1.0
    }
}

fn stack(terms: &[Term]) -> Matrix {
    let n = terms.first().map(|t| t.k.ncols()).unwrap_or(0);
    let rows: usize = terms.iter().map(|t| t.k.nrows()).sum();
    let mut k = Matrix::zeros(rows, n);
    let mut r = 0;
    for t in terms {
        k.rows_mut(r, t.k.nrows()).copy_from(&t.k);
        r += t.k.nrows();
    }
    k
}

pub(crate) fn chambolle_pock(
    terms: &[Term],
    prox: &PrimalProx,
    weight: f64,
    step: f64,
    x0: Vector,
    max_iter: usize,
    mut check: impl FnMut(&Vector) -> Option<Vector>,
) -> LoopOutput {
    let k = stack(terms);
    let kt = k.transpose();
    let mut x = x0;
    let mut xbar = x.clone();
    let mut p = Vector::zeros(k.nrows());
    let mut checkpoints = vec![];
    for it in 1..=max_iter {
        let q = &p + &k * &xbar * step;
        let mut r = 0;
        for t in terms {
            let m = t.k.nrows();
            let block = project_ball(&t.ball, &q.rows(r, m).into_owned(), weight);
            p.rows_mut(r, m).copy_from(&block);
            r += m;
        }
        let x_new = prox.apply(&(&x - &kt * &p * step));
        xbar = &x_new * 2.0 - &x;
        x = x_new;
        if it % 100 == 0 {
            checkpoints.push(f64::NAN);
        }
        let every = if it <= 2_000 { 25 } else { 100 };
        if it % every == 0 {
            if let Some(xp) = check(&x) {
                return LoopOutput { x: xp, iterations: it, converged: true, checkpoints };
            }
        }
    }
    LoopOutput { x, iterations: max_iter, converged: false, checkpoints }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capped_simplex_projection() {
        let v = Vector::from_column_slice(&[2.0, 0.5, -1.0]);
        let p = project_capped_simplex(&v, 1.0);
        assert!((p - Vector::from_column_slice(&[1.0, 0.0, 0.0])).amax() < 1e-15);
        let w = Vector::from_column_slice(&[0.2, -0.3, 0.1]);
        assert_eq!(project_capped_simplex(&w, 1.0), Vector::from_column_slice(&[0.2, 0.0, 0.1]));
    }
}
