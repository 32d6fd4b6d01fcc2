//! Compact convex polytopes held in both vertex and halfspace form, with
//! double-description vertex enumeration in low dimension.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, Matrix, Vector};

/// Largest ambient dimension accepted by exact enumeration.
pub const MAX_POLY_DIM: usize = 8;

const ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: &Vector, offset: f64) -> Self {
        Self { normal: normal.as_slice().to_vec(), offset }
    }

    pub fn normal_vec(&self) -> Vector {
        Vector::from_column_slice(&self.normal)
    }

    fn slack(&self, x: &Vector) -> f64 {
        self.offset - self.normal.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Vertex and halfspace description of a polytope `{x : ⟨a_i, x⟩ ≤ b_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    dim: usize,
    vertices: Vec<Vector>,
    halfspaces: Vec<Halfspace>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeJson {
    #[serde(default)]
    pub vertices: Vec<Vec<f64>>,
    #[serde(default)]
    pub halfspaces: Vec<Halfspace>,
}

/// Output of vertex enumeration for `{x : ⟨a_i, x⟩ ≤ b_i}`.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub vertices: Vec<Vector>,
    /// Extreme directions of the recession cone.
    pub rays: Vec<Vector>,
}

fn check_dim_limit(n: usize) -> Result<()> {
    if n > MAX_POLY_DIM {
        return Err(Error::DimensionTooHigh { dim: n, max: MAX_POLY_DIM });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("polytope dimension must be positive".into()));
    }
    Ok(())
}

/// Fixed-width bitset over constraint indices.
#[derive(Clone, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64).max(1)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn and(&self, o: &Bits) -> Bits {
        Bits(self.0.iter().zip(&o.0).map(|(a, b)| a & b).collect())
    }
    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
    fn superset_of(&self, o: &Bits) -> bool {
        self.0.iter().zip(&o.0).all(|(a, b)| a & b == *b)
    }
}

struct Ray {
    v: Vector,
    zero: Bits,
}

/// Double-description enumeration of the pointed cone `{y : ⟨g_i, y⟩ ≥ 0}`.
/// Returns generators of the cone, each normalized to unit length.
fn dd_cone(gens: &[Vector]) -> Result<Vec<Vector>> {
    let m = gens.len();
    let d = gens.first().map(|g| g.len()).unwrap_or(0);
    // Greedy choice of d independent rows.
    let mut chosen: Vec<usize> = vec![];
    let mut q: Vec<Vector> = vec![];
    for (i, g) in gens.iter().enumerate() {
        let mut r = g.clone();
        for b in &q {
            let c = r.dot(b);
            r -= b * c;
        }
        let nr = r.norm();
        if nr > 1e-7 * g.norm().max(1e-300) {
            q.push(r / nr);
            chosen.push(i);
            if chosen.len() == d {
                break;
            }
        }
    }
    if chosen.len() < d {
        return Err(Error::Unbounded);
    }
    let a0 = Matrix::from_fn(d, d, |r, c| gens[chosen[r]][c]);
    let inv = a0.try_inverse().ok_or_else(|| Error::Numerical("singular initial cone".into()))?;
    let mut rays: Vec<Ray> = (0..d)
        .map(|k| {
            let v = inv.column(k).into_owned();
            let v = &v / v.norm();
            let mut z = Bits::new(m);
            for (j, &row) in chosen.iter().enumerate() {
                if j != k {
                    z.set(row);
                }
            }
            Ray { v, zero: z }
        })
        .collect();

    let in_initial: Vec<bool> = (0..m).map(|i| chosen.contains(&i)).collect();
    for i in 0..m {
        if in_initial[i] {
            continue;
        }
        let g = &gens[i];
        let vals: Vec<f64> = rays.iter().map(|r| g.dot(&r.v)).collect();
        let mut pos = vec![];
        let mut neg = vec![];
        let mut zer = vec![];
        for (k, &v) in vals.iter().enumerate() {
            if v > ZERO_TOL {
                pos.push(k);
            } else if v < -ZERO_TOL {
                neg.push(k);
            } else {
                zer.push(k);
            }
        }
        if neg.is_empty() {
            for &k in &zer {
                rays[k].zero.set(i);
            }
            continue;
        }
        let mut next: Vec<Ray> = Vec::with_capacity(pos.len() + zer.len() + pos.len() * neg.len());
        for &p in &pos {
            for &n in &neg {
                let common = rays[p].zero.and(&rays[n].zero);
                if common.count() + 2 < d {
                    continue;
                }
                let adjacent = rays.iter().enumerate().all(|(k, r)| k == p || k == n || !r.zero.superset_of(&common));
                if !adjacent {
                    continue;
                }
                let v = &rays[n].v * vals[p] - &rays[p].v * vals[n];
                let nv = v.norm();
                if nv < 1e-14 {
                    continue;
                }
                let mut z = common;
                z.set(i);
                next.push(Ray { v: v / nv, zero: z });
            }
        }
        let old = std::mem::take(&mut rays);
        for (k, mut r) in old.into_iter().enumerate() {
            if vals[k] > ZERO_TOL {
                next.push(r);
            } else if vals[k] >= -ZERO_TOL {
                r.zero.set(i);
                next.push(r);
            }
        }
        rays = merge_duplicates(next);
    }
    Ok(rays.into_iter().map(|r| r.v).collect())
}

/// Merges numerically coincident rays, uniting their zero sets.
fn merge_duplicates(rays: Vec<Ray>) -> Vec<Ray> {
    let mut out: Vec<Ray> = Vec::with_capacity(rays.len());
    for r in rays {
        match out.iter_mut().find(|q| (&q.v - &r.v).amax() <= 1e-9) {
            Some(q) => {
                for (a, b) in q.zero.0.iter_mut().zip(&r.zero.0) {
                    *a |= b;
                }
            }
            None => out.push(r),
        }
    }
    out
}

fn dedup(points: Vec<Vector>, tol: f64) -> Vec<Vector> {
    let mut out: Vec<Vector> = vec![];
    for p in points {
        if !out.iter().any(|q| (q - &p).amax() <= tol * (1.0 + p.amax())) {
            out.push(p);
        }
    }
    out
}

/// Vertices and recession rays of `{x ∈ R^n : ⟨a_i, x⟩ ≤ b_i}`.
pub fn enumerate_vertices(n: usize, hs: &[Halfspace]) -> Result<Enumeration> {
    check_dim_limit(n)?;
    let mut gens = Vec::with_capacity(hs.len() + 1);
    for h in hs {
        if h.normal.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: h.normal.len() });
        }
        crate::error::check_finite_slice(&h.normal, "halfspace normal")?;
        if !h.offset.is_finite() {
            return Err(Error::NonFinite("halfspace offset"));
        }
        let mut g = Vector::zeros(n + 1);
        for j in 0..n {
            g[j] = -h.normal[j];
        }
        g[n] = h.offset;
        let ng = g.norm();
        if ng > 0.0 {
            gens.push(g / ng);
        }
    }
    let mut t = Vector::zeros(n + 1);
    t[n] = 1.0;
    gens.push(t);
    let gens_all = gens;
    let gen_rays = dd_cone(&gens_all)?;
    let mut vertices = vec![];
    let mut rays = vec![];
    for r in gen_rays {
        let tt = r[n];
        let x = r.rows(0, n).into_owned();
        if tt > 1e-10 {
            vertices.push(x / tt);
        } else if x.norm() > 1e-10 {
            rays.push(&x / x.norm());
        }
    }
    Ok(Enumeration { vertices: dedup(vertices, 1e-9), rays: dedup(rays, 1e-9) })
}

/// Facets of `conv(points)`; requires a full-dimensional hull.
fn hull_facets(n: usize, points: &[Vector]) -> Result<Vec<Halfspace>> {
    let c = points.iter().fold(Vector::zeros(n), |a, p| a + p) / points.len() as f64;
    let shifted: Vec<Halfspace> = points.iter().map(|p| Halfspace::new(&(p - &c), 1.0)).collect();
    let e = enumerate_vertices(n, &shifted).map_err(|e| match e {
        Error::Unbounded => Error::Degenerate("point set is not full-dimensional".into()),
        other => other,
    })?;
    if !e.rays.is_empty() {
        return Err(Error::Degenerate("point set is not full-dimensional".into()));
    }
    Ok(e.vertices
        .iter()
        .map(|w| {
            let nw = w.norm();
            Halfspace::new(&(w / nw), (1.0 + w.dot(&c)) / nw)
        })
        .collect())
}

impl Polytope {
    /// Convex hull of `points`.
    pub fn from_vertices(points: &[Vector]) -> Result<Self> {
        let n = points.first().map(|p| p.len()).ok_or_else(|| Error::InvalidArgument("empty point set".into()))?;
        check_dim_limit(n)?;
        for p in points {
            if p.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: p.len() });
            }
            crate::linalg::ensure_finite_vec(p, "vertex")?;
        }
        let halfspaces = hull_facets(n, points)?;
        let pts = dedup(points.to_vec(), 1e-12);
        let vertices = extreme_points(n, &pts, &halfspaces);
        Ok(Self { dim: n, vertices, halfspaces })
    }

    /// Bounded intersection of halfspaces.
    pub fn from_halfspaces(n: usize, hs: &[Halfspace]) -> Result<Self> {
        let e = enumerate_vertices(n, hs)?;
        if !e.rays.is_empty() {
            return Err(Error::Unbounded);
        }
        if e.vertices.is_empty() {
            return Err(Error::Infeasible);
        }
        let facets = facets_among(n, hs, &e.vertices);
        if facets.len() > n {
            return Ok(Self { dim: n, vertices: e.vertices, halfspaces: facets });
        }
        let tight: Vec<Halfspace> =
            hs.iter().filter(|h| e.vertices.iter().any(|v| h.slack(v).abs() <= 1e-9 * (1.0 + h.offset.abs()))).cloned().collect();
        Ok(Self { dim: n, vertices: e.vertices, halfspaces: tight })
    }

    pub fn from_json(j: &PolytopeJson) -> Result<Self> {
        if !j.vertices.is_empty() {
            let pts: Vec<Vector> = j.vertices.iter().map(|v| Vector::from_column_slice(v)).collect();
            Self::from_vertices(&pts)
        } else if let Some(h) = j.halfspaces.first() {
            Self::from_halfspaces(h.normal.len(), &j.halfspaces)
        } else {
            Err(Error::InvalidArgument("polytope needs vertices or halfspaces".into()))
        }
    }

    pub fn to_json(&self) -> PolytopeJson {
        PolytopeJson { vertices: self.vertices.iter().map(|v| v.as_slice().to_vec()).collect(), halfspaces: self.halfspaces.clone() }
    }

    /// Unit `ℓ1` ball.
    pub fn cross_polytope(n: usize) -> Result<Self> {
        let mut pts = vec![];
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut v = Vector::zeros(n);
                v[i] = s;
                pts.push(v);
            }
        }
        Self::from_vertices(&pts)
    }

    /// Unit `ℓ∞` ball.
    pub fn cube(n: usize) -> Result<Self> {
        let mut hs = vec![];
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut a = Vector::zeros(n);
                a[i] = s;
                hs.push(Halfspace::new(&a, 1.0));
            }
        }
        Self::from_halfspaces(n, &hs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vector] {
        &self.vertices
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    /// True when 0 lies in the interior.
    pub fn origin_interior(&self) -> bool {
        self.halfspaces.iter().all(|h| h.offset > 1e-12)
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.halfspaces.iter().all(|h| h.slack(x) >= -tol)
    }

    /// `γ(x) = inf{λ > 0 : x ∈ λP}`.
    pub fn gauge(&self, x: &Vector) -> f64 {
        let mut g = 0.0f64;
        for h in &self.halfspaces {
            let ax: f64 = h.normal.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            if h.offset > 1e-12 {
                g = g.max(ax / h.offset);
            } else if ax > 1e-12 * (1.0 + x.norm()) {
                return f64::INFINITY;
            }
        }
        g
    }

    /// `σ(u) = max_{x ∈ P} ⟨u, x⟩`.
    pub fn support(&self, u: &Vector) -> f64 {
        self.vertices.iter().map(|v| v.dot(u)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scale(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument("scale factor must be positive".into()));
        }
        Ok(Self {
            dim: self.dim,
            vertices: self.vertices.iter().map(|v| v * rho).collect(),
            halfspaces: self.halfspaces.iter().map(|h| Halfspace { normal: h.normal.clone(), offset: h.offset * rho }).collect(),
        })
    }

    /// `P° = {u : ⟨u, v⟩ ≤ 1 for every vertex v}`, whose vertices are the
    /// facet normals `a/b`.
    pub fn polar(&self) -> Result<Self> {
        if !self.origin_interior() {
            return Err(Error::Unbounded);
        }
        let vertices = self.halfspaces.iter().map(|h| h.normal_vec() / h.offset).collect();
        let halfspaces = self.vertices.iter().map(|v| Halfspace::new(v, 1.0)).collect();
        Ok(Self { dim: self.dim, vertices, halfspaces })
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        crate::error::check_dim(self.dim, other.dim)?;
        let mut hs = self.halfspaces.clone();
        hs.extend(other.halfspaces.iter().cloned());
        Self::from_halfspaces(self.dim, &hs)
    }

    /// `conv(P ∪ Q)`.
    pub fn hull_union(&self, other: &Self) -> Result<Self> {
        crate::error::check_dim(self.dim, other.dim)?;
        let mut pts = self.vertices.clone();
        pts.extend(other.vertices.iter().cloned());
        Self::from_vertices(&pts)
    }

    /// `P + Q` from pairwise vertex sums.
    pub fn minkowski_sum(&self, other: &Self) -> Result<Self> {
        crate::error::check_dim(self.dim, other.dim)?;
        let mut pts = Vec::with_capacity(self.vertices.len() * other.vertices.len());
        for a in &self.vertices {
            for b in &other.vertices {
                pts.push(a + b);
            }
        }
        Self::from_vertices(&pts)
    }

    /// `{Dv : v ∈ P}`.
    pub fn linear_image(&self, d: &Matrix) -> Result<Self> {
        crate::error::check_dim(self.dim, d.ncols())?;
        let pts: Vec<Vector> = self.vertices.iter().map(|v| d * v).collect();
        Self::from_vertices(&pts)
    }

    /// Symmetric Hausdorff-type distance between vertex sets.
    pub fn vertex_set_distance(&self, other: &Self) -> f64 {
        let one_way = |a: &[Vector], b: &[Vector]| {
            a.iter().map(|p| b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)).fold(0.0f64, f64::max)
        };
        one_way(&self.vertices, &other.vertices).max(one_way(&other.vertices, &self.vertices))
    }

    /// Largest support-function gap over the given directions.
    pub fn support_gap(&self, other: &Self, dirs: &[Vector]) -> f64 {
        dirs.iter().map(|d| (self.support(d) - other.support(d)).abs()).fold(0.0, f64::max)
    }
}

fn extreme_points(n: usize, pts: &[Vector], facets: &[Halfspace]) -> Vec<Vector> {
    pts.iter()
        .filter(|p| {
            let tight: Vec<Vector> =
                facets.iter().filter(|h| h.slack(p).abs() <= 1e-9 * (1.0 + h.offset.abs())).map(|h| h.normal_vec()).collect();
            if tight.len() < n {
                return false;
            }
            let m = Matrix::from_fn(tight.len(), n, |r, c| tight[r][c]);
            crate::linalg::rank(&m) == n
        })
        .cloned()
        .collect()
}

/// Normalized, deduplicated members of `hs` whose tight vertices span an
/// affine hyperplane.
fn facets_among(n: usize, hs: &[Halfspace], vertices: &[Vector]) -> Vec<Halfspace> {
    let mut out: Vec<Halfspace> = vec![];
    for h in hs {
        let na = h.normal_vec().norm();
        if na == 0.0 {
            continue;
        }
        let h = Halfspace { normal: h.normal.iter().map(|a| a / na).collect(), offset: h.offset / na };
        let tight: Vec<&Vector> = vertices.iter().filter(|v| h.slack(v).abs() <= 1e-9 * (1.0 + h.offset.abs())).collect();
        if tight.len() < n {
            continue;
        }
        let m = Matrix::from_fn(tight.len() - 1, n, |r, c| tight[r + 1][c] - tight[0][c]);
        if crate::linalg::rank(&m) + 1 < n {
            continue;
        }
        let dup =
            out.iter().any(|o| (o.offset - h.offset).abs() <= 1e-9 && o.normal.iter().zip(&h.normal).all(|(a, b)| (a - b).abs() <= 1e-9));
        if !dup {
            out.push(h);
        }
    }
    out
}

/// Random polytope containing a ball around 0: hull of random points with
/// radii in `[0.5, 1.5]` together with a small cross-polytope.
pub fn random_polytope<R: Rng>(dim: usize, n_points: usize, rng: &mut R) -> Result<Polytope> {
    let mut pts = vec![];
    for _ in 0..n_points {
        let g = gaussian_vector(dim, rng);
        let r: f64 = rng.random_range(0.5..1.5);
        pts.push(&g / g.norm() * r);
    }
    for i in 0..dim {
        for s in [0.25, -0.25] {
            let mut v = Vector::zeros(dim);
            v[i] = s;
            pts.push(v);
        }
    }
    Polytope::from_vertices(&pts)
}

/// Unit directions drawn uniformly from the sphere.
pub fn random_directions<R: Rng>(dim: usize, count: usize, rng: &mut R) -> Vec<Vector> {
    (0..count)
        .map(|_| {
            let g = gaussian_vector(dim, rng);
            &g / g.norm()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_vertices() {
        let c = Polytope::cube(2).unwrap();
        assert_eq!(c.vertices().len(), 4);
        assert_eq!(c.halfspaces().len(), 4);
        assert!((c.gauge(&Vector::from_column_slice(&[3.0, -5.0])) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn cross_polytope_polar_is_cube() {
        let p = Polytope::cross_polytope(3).unwrap().polar().unwrap();
        assert_eq!(p.vertices().len(), 8);
        for v in p.vertices() {
            assert!((v.amax() - 1.0).abs() < 1e-12 && (v.amin() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unbounded_region_reports_rays() {
        let hs = vec![Halfspace { normal: vec![1.0, 0.0], offset: 1.0 }, Halfspace { normal: vec![0.0, 1.0], offset: 1.0 }];
        let e = enumerate_vertices(2, &hs).unwrap();
        assert_eq!((e.vertices.len(), e.rays.len()), (1, 2));
        assert_eq!(Polytope::from_halfspaces(2, &hs).unwrap_err(), Error::Unbounded);
        let hs = vec![
            Halfspace { normal: vec![1.0, 0.0], offset: 1.0 },
            Halfspace { normal: vec![0.0, 1.0], offset: 1.0 },
            Halfspace { normal: vec![-1.0, -1.0], offset: 1.0 },
            Halfspace { normal: vec![-1.0, 0.0], offset: 5.0 },
        ];
        assert!(Polytope::from_halfspaces(2, &hs).is_ok());
    }

    #[test]
    fn interior_points_are_dropped() {
        let pts: Vec<Vector> =
            [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [0.1, 0.1]].iter().map(|p| Vector::from_column_slice(p)).collect();
        let p = Polytope::from_vertices(&pts).unwrap();
        assert_eq!(p.vertices().len(), 4);
    }

    #[test]
    fn rejects_high_dimension() {
        assert!(matches!(Polytope::cube(9), Err(Error::DimensionTooHigh { .. })));
    }
}
