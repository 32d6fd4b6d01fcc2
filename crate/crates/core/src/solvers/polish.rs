//! Snapping iterates onto an exact model and re-solving on it, so that
//! convergence is declared only on points whose first-order conditions hold.

use crate::certificates::{check_noiseless_optimality, first_order_residuals, Optimality, IC_MARGIN};
use crate::error::{Error, Result};
use crate::gauges::{BlockPartition, Gauge};
use crate::linalg::{pseudo_inverse, restricted_gram_inverse, Matrix, Subspace, Vector};
use crate::model::{decompose_model, ModelDecomposition, SubdiffGauge, DEFAULT_DELTA};

pub(crate) const SNAP_THRESHOLDS: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

/// Rounds `v` onto the nearest exact structure of the base gauge.
fn snap_base(g: &Gauge, v: &Vector, thr: f64) -> Vector {
    let scale = v.amax();
    match g {
        Gauge::L1(_) => v.map(|a| if a.abs() <= thr * scale { 0.0 } else { a }),
        Gauge::Linf(_) => v.map(|a| if a.abs() >= (1.0 - thr) * scale { a.signum() * scale } else { a }),
        Gauge::GroupL1L2(p) => {
            let norms: Vec<f64> = (0..p.blocks().len()).map(|b| p.block_norm(b, v)).collect();
            let top = norms.iter().cloned().fold(0.0, f64::max);
            let mut out = v.clone();
            for (b, blk) in p.blocks().iter().enumerate() {
                if norms[b] <= thr * top {
                    for &i in blk {
                        out[i] = 0.0;
                    }
                }
            }
            out
        }
        Gauge::PolyhedralH(_) => {
            let m = v.max();
            if m > thr * scale {
                v.map(|a| if a >= m - thr * scale { m } else { a })
            } else {
                v.map(|a| if a >= -thr * scale { 0.0 } else { a })
            }
        }
        _ => v.clone(),
    }
}

/// Projects `x` onto the model subspace `Ker (D B0)ᵀ` read off the snapped analysis coefficients.
fn snap_analysis(base: &Gauge, d: &Matrix, x: &Vector, thr: f64) -> Option<Vector> {
    let u = snap_base(base, &(d.transpose() * x), thr);
    let md0 = decompose_model(base, &u, DEFAULT_DELTA).ok()?;
    let t = Subspace::kernel(&(d * md0.s.basis()).transpose());
    Some(t.project(x))
}

pub(crate) fn snap_primal(g: &Gauge, x: &Vector, thr: f64) -> Option<Vector> {
    match g {
        Gauge::L1(_) | Gauge::Linf(_) | Gauge::GroupL1L2(_) => Some(snap_base(g, x, thr)),
        Gauge::PolyhedralH(h) => {
            let n = h.ncols();
            snap_analysis(&Gauge::PolyhedralH(Matrix::identity(n, n)), h, x, thr)
        }
        Gauge::Precomposed { base, dstar } => snap_analysis(base, &dstar.transpose(), x, thr),
        _ => Some(x.clone()),
    }
}

/// Minimizer of `½‖y − Φx‖² + λ⟨e, x⟩` over `x ∈ T`.
pub fn restricted_closed_form(phi: &Matrix, y: &Vector, lambda: f64, t: &Subspace, e: &Vector) -> Result<Vector> {
    if t.dim() == 0 {
        return Ok(Vector::zeros(t.ambient_dim()));
    }
    let u = t.basis();
    let m_inv = restricted_gram_inverse(phi, t)?;
    let rhs = (phi * u).transpose() * y - u.transpose() * e * lambda;
    Ok(u * (m_inv * rhs))
}

/// Active blocks of a group decomposition.
pub(crate) fn group_structure(md: &ModelDecomposition) -> Option<(BlockPartition, Vec<usize>)> {
    match (&md.regularizer, &md.antig) {
        (Gauge::GroupL1L2(p), SubdiffGauge::GroupMax { blocks, .. }) => {
            let active = (0..p.blocks().len()).filter(|b| !blocks.contains(b)).collect();
            Some((p.clone(), active))
        }
        _ => None,
    }
}

fn group_e(p: &BlockPartition, active: &[usize], x: &Vector) -> Option<Vector> {
    let mut e = Vector::zeros(x.len());
    for &b in active {
        let nb = p.block_norm(b, x);
        if !(nb > 0.0) {
            return None;
        }
        for &i in &p.blocks()[b] {
            e[i] = x[i] / nb;
        }
    }
    Some(e)
}

/// Damped iteration `x ← ½x + ½(Φ_T⁺y − λ(Φ_TᵀΦ_T)⁻¹ e(x))` on the group model
/// subspace, stopped once `‖P_T Φᵀ(y − Φx)/λ − P_T e(x)‖∞ ≤ tol`.
pub(crate) fn group_fixed_point(
    phi: &Matrix,
    y: &Vector,
    lambda: f64,
    md: &ModelDecomposition,
    start: &Vector,
    max_iter: usize,
    tol: f64,
) -> Result<(Vector, bool, usize)> {
    let (p, active) = group_structure(md).ok_or_else(|| Error::InvalidArgument("not a group decomposition".into()))?;
    let u = md.t.basis();
    let phit = phi * u;
    let m = phit.transpose() * &phit;
    let m_inv = restricted_gram_inverse(phi, &md.t)?;
    let base = phit.transpose() * y;
    let mut c = u.transpose() * start;
    for k in 0..=max_iter {
        let x = u * &c;
        let Some(e) = group_e(&p, &active, &x) else {
            return Ok((x, false, k));
        };
        let target = &m_inv * (&base - u.transpose() * e * lambda);
        let residual = (u * (&m * (&target - &c)) / lambda).amax();
        if residual <= tol {
            return Ok((x, true, k));
        }
        if k == max_iter {
            break;
        }
        c = (&c + &target) * 0.5;
    }
    Ok((u * c, false, max_iter))
}

/// Candidate exact minimizer of the penalized problem built from `x`.
fn polish_penalized(phi: &Matrix, y: &Vector, lambda: f64, g: &Gauge, x: &Vector, thr: f64) -> Option<Vector> {
    let xc = snap_primal(g, x, thr)?;
    let md = decompose_model(g, &xc, DEFAULT_DELTA).ok()?;
    if group_structure(&md).is_some() {
        return group_fixed_point(phi, y, lambda, &md, &xc, 2_000, 1e-12).ok().map(|r| r.0);
    }
    restricted_closed_form(phi, y, lambda, &md.t, &md.e).ok()
}

/// First polished point meeting the first-order conditions, with its
/// equality residual and gauge slack.
pub(crate) fn converged_penalized(phi: &Matrix, y: &Vector, lambda: f64, g: &Gauge, x: &Vector, tol: f64) -> Option<(Vector, f64, f64)> {
    let mut candidates = vec![x.clone()];
    candidates.extend(SNAP_THRESHOLDS.iter().filter_map(|&thr| polish_penalized(phi, y, lambda, g, x, thr)));
    for c in candidates {
        let Ok(md) = decompose_model(g, &c, DEFAULT_DELTA) else { continue };
        let Ok((eq, ineq)) = first_order_residuals(phi, y, lambda, &c, &md) else { continue };
        if eq <= tol && ineq <= 1.0 + IC_MARGIN {
            return Some((c, eq, (ineq - 1.0).max(0.0)));
        }
    }
    None
}

/// Candidate exact minimizer of the constrained problem built from `x`.
pub(crate) fn converged_noiseless(phi: &Matrix, y: &Vector, g: &Gauge, x: &Vector) -> Option<Vector> {
    let pinv_cache = |t: &Subspace| -> Vector { t.basis() * (pseudo_inverse(&(phi * t.basis())) * y) };
    for &thr in SNAP_THRESHOLDS.iter() {
        let Some(xc) = snap_primal(g, x, thr) else { continue };
        let Ok(md) = decompose_model(g, &xc, DEFAULT_DELTA) else { continue };
        let xp = if md.t.dim() == 0 { Vector::zeros(x.len()) } else { pinv_cache(&md.t) };
        if (phi * &xp - y).amax() > 1e-8 * (1.0 + y.amax()) {
            continue;
        }
        let Ok(mdp) = decompose_model(g, &xp, DEFAULT_DELTA) else { continue };
        if matches!(check_noiseless_optimality(phi, y, &xp, &mdp), Ok(Optimality::UniqueOptimal | Optimality::OptimalMaybeNonunique)) {
            return Some(xp);
        }
    }
    None
}
