//! Dense linear algebra: subspaces carried as orthonormal bases, projections,
//! pseudo-inverses and the Gaussian ensemble.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Numerical rank cutoff for a matrix with largest singular value `smax`.
pub fn rank_tolerance(smax: f64, rows: usize, cols: usize) -> f64 {
    smax * rows.max(cols).max(1) as f64 * f64::EPSILON * 64.0
}

pub fn ensure_finite_vec(v: &Vector, what: &'static str) -> Result<()> {
    crate::error::check_finite_slice(v.as_slice(), what)
}

pub fn ensure_finite_mat(m: &Matrix, what: &'static str) -> Result<()> {
    crate::error::check_finite_slice(m.as_slice(), what)
}

/// Thin SVD returning (U, singular values, V) with `U: R×k`, `V: C×k`.
pub(crate) fn thin_svd(a: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return (Matrix::zeros(r, 0), vec![], Matrix::zeros(c, 0));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").transpose();
    (u, svd.singular_values.as_slice().to_vec(), v)
}

pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return vec![];
    }
    let mut s = a.clone().singular_values().as_slice().to_vec();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

pub fn spectral_norm(a: &Matrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

pub fn pseudo_inverse(a: &Matrix) -> Matrix {
    let (r, c) = a.shape();
    let (u, s, v) = thin_svd(a);
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let tol = rank_tolerance(smax, r, c);
    let mut out = Matrix::zeros(c, r);
    for (k, &sk) in s.iter().enumerate() {
        if sk > tol && sk > 0.0 {
            out += (v.column(k) * u.column(k).transpose()) / sk;
        }
    }
    out
}

pub fn pseudo_inverse_apply(a: &Matrix, b: &Vector) -> Result<Vector> {
    check_dim(a.nrows(), b.len())?;
    Ok(pseudo_inverse(a) * b)
}

/// Numerical rank under [`rank_tolerance`].
pub fn rank(a: &Matrix) -> usize {
    let s = singular_values(a);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    let tol = rank_tolerance(smax, a.nrows(), a.ncols());
    s.iter().filter(|&&x| x > tol).count()
}

/// Orthonormal basis of the column span, via Householder QR with column pivoting.
fn orthonormal_span(a: &Matrix) -> Matrix {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Matrix::zeros(r, 0);
    }
    let qr = a.clone().col_piv_qr();
    let rr = qr.r();
    let q = qr.q();
    let diag: Vec<f64> = (0..rr.nrows().min(rr.ncols())).map(|i| rr[(i, i)].abs()).collect();
    let lead = diag.first().copied().unwrap_or(0.0);
    if lead == 0.0 {
        return Matrix::zeros(r, 0);
    }
    let tol = rank_tolerance(lead, r, c).max(1e-12 * lead);
    let k = diag.iter().take_while(|&&d| d > tol).count();
    q.columns(0, k).into_owned()
}

/// A linear subspace of R^n stored as an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    ambient: usize,
    basis: Matrix,
}

impl Subspace {
    pub fn zero(n: usize) -> Self {
        Self { ambient: n, basis: Matrix::zeros(n, 0) }
    }

    pub fn full(n: usize) -> Self {
        Self { ambient: n, basis: Matrix::identity(n, n) }
    }

    /// Span of the canonical vectors `e_i`, `i ∈ idx`. The basis keeps them verbatim.
    pub fn coordinates(n: usize, idx: &[usize]) -> Self {
        let mut b = Matrix::zeros(n, idx.len());
        for (k, &i) in idx.iter().enumerate() {
            b[(i, k)] = 1.0;
        }
        Self { ambient: n, basis: b }
    }

    /// Wraps columns that are already orthonormal.
    pub fn from_orthonormal(basis: Matrix) -> Self {
        debug_assert!({
            let g = basis.transpose() * &basis;
            (g - Matrix::identity(basis.ncols(), basis.ncols())).amax() < 1e-8
        });
        Self { ambient: basis.nrows(), basis }
    }

    /// Column span of an arbitrary matrix.
    pub fn span(a: &Matrix) -> Self {
        Self { ambient: a.nrows(), basis: orthonormal_span(a) }
    }

    /// Range of `a`.
    pub fn range(a: &Matrix) -> Self {
        Self::span(a)
    }

    /// Null space of `a`.
    pub fn kernel(a: &Matrix) -> Self {
        let n = a.ncols();
        if a.nrows() == 0 {
            return Self::full(n);
        }
        let (_, s, v) = thin_svd(a);
        let smax = s.iter().cloned().fold(0.0, f64::max);
        let tol = rank_tolerance(smax, a.nrows(), n);
        let cols: Vec<usize> = (0..s.len()).filter(|&k| smax > 0.0 && s[k] > tol).collect();
        let mut row_space = Matrix::zeros(n, cols.len());
        for (j, &k) in cols.iter().enumerate() {
            row_space.set_column(j, &v.column(k));
        }
        Self::from_orthonormal(row_space).complement()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn projector(&self) -> Matrix {
        &self.basis * self.basis.transpose()
    }

    pub fn project(&self, v: &Vector) -> Vector {
        &self.basis * (self.basis.transpose() * v)
    }

    pub fn try_project(&self, v: &Vector) -> Result<Vector> {
        check_dim(self.ambient, v.len())?;
        Ok(self.project(v))
    }

    pub fn coords(&self, v: &Vector) -> Vector {
        self.basis.transpose() * v
    }

    pub fn distance(&self, v: &Vector) -> f64 {
        (v - self.project(v)).norm()
    }

    /// `dist(v, self) ≤ tol·(1+‖v‖)`.
    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        self.distance(v) <= tol * (1.0 + v.norm())
    }

    pub fn complement(&self) -> Self {
        let n = self.ambient;
        if self.dim() == 0 {
            return Self::full(n);
        }
        if self.dim() == n {
            return Self::zero(n);
        }
        if let Some(idx) = self.coordinate_support() {
            let rest: Vec<usize> = (0..n).filter(|i| !idx.contains(i)).collect();
            return Self::coordinates(n, &rest);
        }
        let p = Matrix::identity(n, n) - self.projector();
        let b = orthonormal_span(&p);
        let k = n - self.dim();
        let b = if b.ncols() > k { b.columns(0, k).into_owned() } else { b };
        Self { ambient: n, basis: b }
    }

    /// Coordinates spanned, if the basis consists of signed canonical vectors.
    pub fn coordinate_support(&self) -> Option<Vec<usize>> {
        let mut idx = Vec::with_capacity(self.dim());
        for col in self.basis.column_iter() {
            let nz: Vec<usize> = (0..col.len()).filter(|&i| col[i] != 0.0).collect();
            if nz.len() != 1 || (col[nz[0]].abs() - 1.0).abs() > 1e-15 {
                return None;
            }
            idx.push(nz[0]);
        }
        Some(idx)
    }

    pub fn sum(&self, other: &Self) -> Self {
        let mut m = Matrix::zeros(self.ambient, self.dim() + other.dim());
        m.columns_mut(0, self.dim()).copy_from(&self.basis);
        m.columns_mut(self.dim(), other.dim()).copy_from(&other.basis);
        Self::span(&m)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        if let (Some(a), Some(b)) = (self.coordinate_support(), other.coordinate_support()) {
            let common: Vec<usize> = a.iter().copied().filter(|i| b.contains(i)).collect();
            return Self::coordinates(self.ambient, &common);
        }
        self.complement().sum(&other.complement()).complement()
    }

    /// True when every basis column of `self` lies in `other`.
    pub fn is_subspace_of(&self, other: &Self, tol: f64) -> bool {
        self.basis.column_iter().all(|c| other.distance(&c.into_owned()) <= tol)
    }

    /// Sine of the largest principal angle; 1 when dimensions differ.
    pub fn max_angle_sine(&self, other: &Self) -> f64 {
        if self.dim() != other.dim() || self.ambient != other.ambient {
            return 1.0;
        }
        if self.dim() == 0 {
            return 0.0;
        }
        let resid = &other.basis - self.projector() * &other.basis;
        spectral_norm(&resid).min(1.0)
    }

    /// True when columns have pairwise disjoint supports.
    pub(crate) fn has_disjoint_supports(&self) -> bool {
        let n = self.ambient;
        let mut owner = vec![usize::MAX; n];
        for (k, col) in self.basis.column_iter().enumerate() {
            for i in 0..n {
                if col[i].abs() > 1e-14 {
                    if owner[i] != usize::MAX {
                        return false;
                    }
                    owner[i] = k;
                }
            }
        }
        true
    }
}

/// Condition (C_T): `Φ` is injective on `T`.
pub fn restricted_injectivity(phi: &Matrix, t: &Subspace) -> bool {
    if phi.ncols() != t.ambient_dim() {
        return false;
    }
    let k = t.dim();
    if k == 0 {
        return true;
    }
    if phi.nrows() < k {
        return false;
    }
    let m = phi * t.basis();
    let s = singular_values(&m);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 || s.len() < k {
        return false;
    }
    let smin = s[k - 1];
    smin > rank_tolerance(smax, m.nrows(), m.ncols())
}

/// `Q×N` matrix with i.i.d. standard normal entries.
pub fn gaussian_ensemble(q: usize, n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gaussian_matrix(q, n, &mut rng)
}

pub fn gaussian_matrix<R: rand::Rng>(q: usize, n: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(q, n, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vector<R: rand::Rng>(n: usize, rng: &mut R) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Largest singular value by power iteration on `AᵀA`, relative tolerance `rtol`.
pub fn power_norm(a: &Matrix, rtol: f64, max_iter: usize) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = Vector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_7).fract());
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..max_iter {
        let w = a.transpose() * (a * &v);
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw.sqrt();
        v = w / nw;
        if (next - est).abs() <= rtol * next {
            return next;
        }
        est = next;
    }
    est
}

/// Solves the symmetric positive definite system on the subspace coordinates:
/// returns `(UᵀΦᵀΦU)⁻¹`.
pub(crate) fn restricted_gram_inverse(phi: &Matrix, t: &Subspace) -> Result<Matrix> {
    if !restricted_injectivity(phi, t) {
        return Err(Error::NotRestrictedInjective);
    }
    let pu = phi * t.basis();
    let g = pu.transpose() * &pu;
    g.clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| g.try_inverse())
        .ok_or_else(|| Error::Numerical("singular restricted Gram matrix".into()))
}

#[cfg(test)]
pub(crate) fn vec_from(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_projection() {
        let t = Subspace::coordinates(3, &[0]);
        assert_eq!(t.project(&vec_from(&[1.0, 2.0, 3.0])), vec_from(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn pinv_rank_one_diagonal() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let x = pseudo_inverse_apply(&a, &vec_from(&[3.0, 4.0])).unwrap();
        assert!((x - vec_from(&[3.0, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn kernel_and_complement_dimensions() {
        let a = Matrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let k = Subspace::kernel(&a);
        assert_eq!(k.dim(), 2);
        assert!(k.contains(&vec_from(&[1.0, -1.0, 0.0]), 1e-12));
        assert_eq!(k.complement().dim(), 1);
    }

    #[test]
    fn intersection_of_planes() {
        let a = Subspace::coordinates(3, &[0, 1]);
        let b = Subspace::span(&Matrix::from_column_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
        let c = a.intersection(&b);
        assert_eq!(c.dim(), 1);
        assert!(c.contains(&vec_from(&[1.0, 1.0, 0.0]), 1e-12));
    }

    #[test]
    fn injectivity_fails_for_wide_phi_on_full_space() {
        let phi = gaussian_ensemble(2, 3, 7);
        assert!(!restricted_injectivity(&phi, &Subspace::full(3)));
        assert!(restricted_injectivity(&Matrix::identity(3, 3), &Subspace::full(3)));
        assert!(!restricted_injectivity(&Matrix::zeros(3, 3), &Subspace::coordinates(3, &[1])));
    }

    #[test]
    fn power_iteration_matches_svd() {
        let a = gaussian_ensemble(7, 5, 3);
        assert!((power_norm(&a, 1e-12, 100_000) - spectral_norm(&a)).abs() < 1e-8);
    }
}
