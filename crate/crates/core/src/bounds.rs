//! Operator bounds `sup {g_out(Ax) : g_in(x) ≤ 1}` between gauges.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::gauges::{BlockPartition, Gauge};
use crate::linalg::{gaussian_vector, spectral_norm, Matrix, Subspace, Vector};

pub const SAMPLED_DIRECTIONS: usize = 10_000;
const SAMPLE_SEED: u64 = 0x0B0B_5EED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    ExactVertex,
    ExactClosedForm,
    SampledLowerBound,
}

impl BoundMethod {
    pub fn is_exact(self) -> bool {
        self != BoundMethod::SampledLowerBound
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorBound {
    pub value: f64,
    pub method: BoundMethod,
}

/// Structural shape used to pick a closed-form bound.
pub enum Shape<'a> {
    L2,
    L2On(&'a Subspace),
    Linf,
    /// `ℓ∞` on a coordinate subspace, `+∞` off it.
    LinfOn(&'a Subspace),
    /// `max_b ‖x_b‖₂` over the listed blocks, `+∞` off `domain` when given.
    GroupMax {
        partition: &'a BlockPartition,
        blocks: Vec<usize>,
        domain: Option<&'a Subspace>,
    },
    /// `max(0, max_k ⟨a_k, x⟩)` with rows `a_k`, `+∞` off `domain`.
    PolyMax {
        rows: &'a Matrix,
        domain: &'a Subspace,
    },
    /// `base(D* x)`.
    Precomposed {
        base: &'a Gauge,
        dstar: &'a Matrix,
    },
    Other,
}

/// Anything that evaluates like a gauge and can describe its unit ball.
pub trait GaugeEval {
    fn ambient_dim(&self) -> usize;
    fn value(&self, x: &Vector) -> Result<f64>;
    fn ball_vertices(&self) -> Option<Vec<Vector>> {
        None
    }
    /// Zero set as a subspace, when it is one.
    fn zero_set(&self) -> Option<Subspace> {
        None
    }
    /// Subspace carrying the finite values.
    fn finite_domain(&self) -> Option<Subspace> {
        None
    }
    fn shape(&self) -> Shape<'_> {
        Shape::Other
    }
}

impl GaugeEval for Gauge {
    fn ambient_dim(&self) -> usize {
        self.dim()
    }

    fn value(&self, x: &Vector) -> Result<f64> {
        Ok(self.eval(x))
    }

    fn ball_vertices(&self) -> Option<Vec<Vector>> {
        self.unit_ball_vertices()
    }

    fn zero_set(&self) -> Option<Subspace> {
        self.kernel_subspace()
    }

    fn finite_domain(&self) -> Option<Subspace> {
        match self {
            Gauge::Restricted { subspace, .. } => Some(subspace.clone()),
            _ => None,
        }
    }

    fn shape(&self) -> Shape<'_> {
        match self {
            Gauge::L2(_) => Shape::L2,
            Gauge::Linf(_) => Shape::Linf,
            Gauge::GroupLinfL2(p) => Shape::GroupMax { partition: p, blocks: (0..p.blocks().len()).collect(), domain: None },
            Gauge::Restricted { base, subspace } if matches!(base.as_ref(), Gauge::L2(_)) => Shape::L2On(subspace),
            Gauge::Precomposed { base, dstar } => Shape::Precomposed { base, dstar },
            _ => Shape::Other,
        }
    }
}

fn rows_of(a: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), a.ncols(), |r, c| a[(idx[r], c)])
}

fn image_outside(a: &Matrix, domain: &Subspace) -> bool {
    a.column_iter().any(|c| {
        let c = c.into_owned();
        !domain.contains(&c, 1e-9)
    })
}

fn closed_form(a: &Matrix, g_in: &dyn GaugeEval, g_out: &dyn GaugeEval) -> Option<f64> {
    let a_eff = match g_in.shape() {
        Shape::L2 => a.clone(),
        Shape::L2On(t) => a * t.basis(),
        _ => return None,
    };
    if a_eff.ncols() == 0 {
        return Some(0.0);
    }
    l2_closed_form(&a_eff, g_out)
}

/// Closed form for `‖·‖₂ → g_out`.
fn l2_closed_form(a_eff: &Matrix, g_out: &dyn GaugeEval) -> Option<f64> {
    match g_out.shape() {
        Shape::Precomposed { base, dstar } => l2_closed_form(&(dstar * a_eff), base),
        Shape::L2 => Some(spectral_norm(a_eff)),
        Shape::Linf => Some(a_eff.row_iter().map(|r| r.norm()).fold(0.0, f64::max)),
        Shape::LinfOn(domain) => {
            if image_outside(a_eff, domain) {
                return Some(f64::INFINITY);
            }
            Some(a_eff.row_iter().map(|r| r.norm()).fold(0.0, f64::max))
        }
        Shape::GroupMax { partition, blocks, domain } => {
            if domain.is_some_and(|d| image_outside(a_eff, d)) {
                return Some(f64::INFINITY);
            }
            Some(blocks.iter().map(|&b| spectral_norm(&rows_of(a_eff, &partition.blocks()[b]))).fold(0.0, f64::max))
        }
        Shape::PolyMax { rows, domain } => {
            if image_outside(a_eff, domain) {
                return Some(f64::INFINITY);
            }
            let at = a_eff.transpose();
            Some(rows.row_iter().map(|r| (&at * r.transpose()).norm()).fold(0.0, f64::max))
        }
        _ => None,
    }
}

/// Bound of `A` from `g_in` to `g_out`; exact when a vertex list or closed
/// form applies, otherwise a sampled lower bound.
pub fn operator_bound(a: &Matrix, g_in: &dyn GaugeEval, g_out: &dyn GaugeEval) -> Result<OperatorBound> {
    check_dim(g_in.ambient_dim(), a.ncols())?;
    check_dim(g_out.ambient_dim(), a.nrows())?;
    crate::linalg::ensure_finite_mat(a, "operator")?;

    // Finite iff A maps the kernel of g_in into the zero set of g_out.
    let kernel = g_in.zero_set();
    if let Some(k) = &kernel {
        for c in k.basis().column_iter() {
            let img = a * c;
            let scale = 1e-9 * (1.0 + img.norm());
            if g_out.value(&img)? > scale || g_out.value(&(-&img))? > scale {
                return Ok(OperatorBound { value: f64::INFINITY, method: BoundMethod::ExactClosedForm });
            }
        }
    }

    if let Some(v) = closed_form(a, g_in, g_out) {
        return Ok(OperatorBound { value: v, method: BoundMethod::ExactClosedForm });
    }

    if let Some(vs) = g_in.ball_vertices() {
        let mut best = 0.0f64;
        for v in &vs {
            best = best.max(g_out.value(&(a * v))?);
        }
        return Ok(OperatorBound { value: best, method: BoundMethod::ExactVertex });
    }

    let mut dom = g_in.finite_domain().unwrap_or_else(|| Subspace::full(a.ncols()));
    match &kernel {
        Some(k) if k.dim() > 0 => dom = dom.intersection(&k.complement()),
        None => {
            return Err(Error::Unsupported("operator bound for a gauge with a conic zero set".into()));
        }
        _ => {}
    }
    if dom.dim() == 0 {
        return Ok(OperatorBound { value: 0.0, method: BoundMethod::ExactClosedForm });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let mut best = 0.0f64;
    for _ in 0..SAMPLED_DIRECTIONS {
        let x = dom.basis() * gaussian_vector(dom.dim(), &mut rng);
        let gx = g_in.value(&x)?;
        if !(gx > 0.0) || !gx.is_finite() {
            continue;
        }
        best = best.max(g_out.value(&(a * &x))? / gx);
    }
    Ok(OperatorBound { value: best, method: BoundMethod::SampledLowerBound })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_l1() {
        let b = operator_bound(&Matrix::identity(3, 3), &Gauge::L1(3), &Gauge::L1(3)).unwrap();
        assert_eq!(b.value, 1.0);
        assert_eq!(b.method, BoundMethod::ExactVertex);
    }

    #[test]
    fn diagonal_linf() {
        let a = Matrix::from_diagonal(&Vector::from_column_slice(&[2.0, 3.0]));
        let b = operator_bound(&a, &Gauge::Linf(2), &Gauge::Linf(2)).unwrap();
        assert_eq!(b.value, 3.0);
    }

    #[test]
    fn kernel_escape_is_infinite() {
        let pick2 = Gauge::Precomposed { base: Box::new(Gauge::Linf(1)), dstar: Matrix::from_row_slice(1, 2, &[0.0, 1.0]) };
        let b = operator_bound(&Matrix::identity(2, 2), &pick2, &Gauge::L2(2)).unwrap();
        assert!(b.value.is_infinite());
        let b = operator_bound(&Matrix::identity(2, 2), &Gauge::L2(2), &pick2).unwrap();
        assert!((b.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l2_to_linf_is_max_row_norm() {
        let a = Matrix::from_row_slice(2, 2, &[3.0, 4.0, 1.0, 0.0]);
        let b = operator_bound(&a, &Gauge::L2(2), &Gauge::Linf(2)).unwrap();
        assert!((b.value - 5.0).abs() < 1e-12);
        assert_eq!(b.method, BoundMethod::ExactClosedForm);
    }
}
