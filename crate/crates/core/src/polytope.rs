//! Delzant polygons in exact rational arithmetic.
//!
//! A polygon is stored as its list of facets `l_i(x) = <x, nu_i> - lambda_i >= 0`
//! in canonical cyclic order. The canonical order is the clockwise traversal of
//! the boundary, which for interior normals means `det(nu_j, nu_{j+1}) = -1` at
//! every vertex of a Delzant polygon. Facets may be supplied in any order; the
//! input index of every facet is kept so reports can refer back to it.
//!
//! Everything in this module is exact. Floating point only appears when the
//! extremal vector is handed to the downstream numerical modules.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rational = BigRational;

pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolytopeError {
    #[error("polygon has no facets")]
    EmptyFacetList,
    #[error("facet {0} has the zero vector as normal")]
    ZeroNormal(usize),
    #[error("adjacent facets {0} and {1} have parallel normals")]
    Degenerate(usize, usize),
    #[error("removed facet index {index} out of range for {count} facets")]
    RemovedOutOfRange { index: usize, count: usize },
    #[error("moment matrix is singular")]
    SingularMomentMatrix,
    #[error("transformation is not in SL(2,Z) (det = {0})")]
    NotUnimodular(i64),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NormalizeError {
    #[error("extremal vector vanishes with nonzero constant term: constant scalar curvature, no translation kills it")]
    NotNormalizable,
    #[error("extremal affine function vanishes identically: scalar-flat regime")]
    ScalarFlat,
}

/// Integer vector; as a facet normal it must be nonzero and primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeVector {
    pub u1: i64,
    pub u2: i64,
}

impl LatticeVector {
    pub const fn new(u1: i64, u2: i64) -> Self {
        Self { u1, u2 }
    }

    pub const fn det(self, other: Self) -> i64 {
        self.u1 * other.u2 - self.u2 * other.u1
    }

    pub fn is_zero(self) -> bool {
        self.u1 == 0 && self.u2 == 0
    }

    pub fn is_primitive(self) -> bool {
        self.u1.gcd(&self.u2) == 1
    }

    pub const fn norm_squared(self) -> i64 {
        self.u1 * self.u1 + self.u2 * self.u2
    }

    /// Primitive edge tangent `(nu^2, -nu^1)`, the lattice unit along the facet.
    pub const fn tangent(self) -> Self {
        Self::new(self.u2, -self.u1)
    }

    pub fn dot(self, p: &Point) -> Rational {
        &p.x1 * BigInt::from(self.u1) + &p.x2 * BigInt::from(self.u2)
    }

    /// `det(eta, self)` for a rational vector `eta`.
    pub fn det_with(self, eta: &[Rational; 2]) -> Rational {
        &eta[0] * BigInt::from(self.u2) - &eta[1] * BigInt::from(self.u1)
    }

    fn half_plane(self) -> u8 {
        if self.u2 > 0 || (self.u2 == 0 && self.u1 > 0) {
            0
        } else {
            1
        }
    }

    /// Exact counterclockwise angle order starting from the positive x-axis.
    fn angle_cmp(self, other: Self) -> Ordering {
        self.half_plane()
            .cmp(&other.half_plane())
            .then_with(|| 0.cmp(&self.det(other)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Point {
    pub x1: Rational,
    pub x2: Rational,
}

impl Point {
    pub fn new(x1: Rational, x2: Rational) -> Self {
        Self { x1, x2 }
    }

    pub fn from_ints(x1: i64, x2: i64) -> Self {
        Self::new(rat(x1), rat(x2))
    }

    pub fn to_f64(&self) -> [f64; 2] {
        [to_f64(&self.x1), to_f64(&self.x2)]
    }

    fn sub(&self, other: &Point) -> Point {
        Point::new(&self.x1 - &other.x1, &self.x2 - &other.x2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Facet {
    pub normal: LatticeVector,
    pub offset: Rational,
}

impl Facet {
    pub fn new(normal: LatticeVector, offset: Rational) -> Self {
        Self { normal, offset }
    }

    /// Affine defining function `l(x) = <x, nu> - lambda`.
    pub fn eval(&self, p: &Point) -> Rational {
        self.normal.dot(p) - &self.offset
    }
}

fn vertex_of(a: &Facet, b: &Facet) -> Option<Point> {
    let d = a.normal.det(b.normal);
    if d == 0 {
        return None;
    }
    let d = BigInt::from(d);
    let x1 = (&a.offset * BigInt::from(b.normal.u2) - &b.offset * BigInt::from(a.normal.u2)) / &d;
    let x2 = (&b.offset * BigInt::from(a.normal.u1) - &a.offset * BigInt::from(b.normal.u1)) / &d;
    Some(Point::new(x1, x2))
}

/// A rational polygon given by facets in canonical (clockwise) cyclic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelzantPolygon {
    facets: Vec<Facet>,
    source: Vec<usize>,
}

impl DelzantPolygon {
    /// Sort the facets into canonical cyclic order, starting at input facet 0.
    ///
    /// Construction never checks the Delzant condition; see [`validate`].
    pub fn new(facets: Vec<Facet>) -> Result<Self, PolytopeError> {
        if facets.is_empty() {
            return Err(PolytopeError::EmptyFacetList);
        }
        if let Some(i) = facets.iter().position(|f| f.normal.is_zero()) {
            return Err(PolytopeError::ZeroNormal(i));
        }
        let mut order: Vec<usize> = (0..facets.len()).collect();
        // Descending angle: clockwise.
        order.sort_by(|&i, &j| {
            facets[j]
                .normal
                .angle_cmp(facets[i].normal)
                .then_with(|| i.cmp(&j))
        });
        let start = order.iter().position(|&i| i == 0).unwrap_or(0);
        order.rotate_left(start);
        let sorted = order.iter().map(|&i| facets[i].clone()).collect();
        Ok(Self {
            facets: sorted,
            source: order,
        })
    }

    pub fn len(&self) -> usize {
        self.facets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn facet(&self, pos: usize) -> &Facet {
        &self.facets[pos % self.len()]
    }

    /// Input index of the facet stored at canonical position `pos`.
    pub fn input_index(&self, pos: usize) -> usize {
        self.source[pos % self.len()]
    }

    /// Canonical position of input facet `index`.
    pub fn position_of(&self, index: usize) -> Option<usize> {
        self.source.iter().position(|&i| i == index)
    }

    /// Rebuild from facets listed in input order.
    pub fn input_order_facets(&self) -> Vec<Facet> {
        let mut out = vec![None; self.len()];
        for (pos, &src) in self.source.iter().enumerate() {
            out[src] = Some(self.facets[pos].clone());
        }
        out.into_iter()
            .map(|f| f.expect("source is a permutation"))
            .collect()
    }

    pub fn translated(&self, c: &Point) -> Self {
        let facets = self
            .facets
            .iter()
            .map(|f| Facet::new(f.normal, &f.offset + f.normal.dot(c)))
            .collect();
        Self {
            facets,
            source: self.source.clone(),
        }
    }

    /// Image under `x -> M x` for `M` in SL(2,Z); normals go to `M^{-T} nu`.
    pub fn transformed(&self, m: [[i64; 2]; 2]) -> Result<Self, PolytopeError> {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det != 1 {
            return Err(PolytopeError::NotUnimodular(det));
        }
        let facets = self
            .input_order_facets()
            .into_iter()
            .map(|f| Facet::new(inverse_transpose_apply(m, f.normal), f.offset))
            .collect();
        Self::new(facets)
    }
}

/// `M^{-T} v` for `det M = 1`.
pub fn inverse_transpose_apply(m: [[i64; 2]; 2], v: LatticeVector) -> LatticeVector {
    // M^{-1} = [[d, -b], [-c, a]], transposed: [[d, -c], [-b, a]].
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    LatticeVector::new(d * v.u1 - c * v.u2, -b * v.u1 + a * v.u2)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetCheck {
    pub input_index: usize,
    pub normal: LatticeVector,
    pub primitive: bool,
    /// Vertex shared with the next facet exists and lies in every half-plane.
    pub vertex_exists: bool,
    /// The edge carried by this facet has positive length.
    pub edge_nondegenerate: bool,
    pub det_with_next: i64,
    pub unimodular: bool,
    pub next_input_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub facets: Vec<FacetCheck>,
    pub bounded: bool,
    pub passed: bool,
}

impl ValidationReport {
    /// Vertices (as pairs of input facet indices) where some check fails.
    pub fn failing_vertices(&self) -> Vec<(usize, usize)> {
        self.facets
            .iter()
            .filter(|c| !(c.vertex_exists && c.unimodular))
            .map(|c| (c.input_index, c.next_input_index))
            .collect()
    }
}

/// Per-facet Delzant checks. Failures are reported, never raised.
pub fn validate(polygon: &DelzantPolygon) -> ValidationReport {
    let n = polygon.len();
    let verts: Vec<Option<Point>> = (0..n)
        .map(|j| vertex_of(polygon.facet(j), polygon.facet(j + 1)))
        .collect();
    let feasible = |p: &Point| polygon.facets.iter().all(|f| !f.eval(p).is_negative());
    let dets: Vec<i64> = (0..n)
        .map(|j| polygon.facet(j).normal.det(polygon.facet(j + 1).normal))
        .collect();
    let bounded = n >= 3 && dets.iter().all(|&d| d < 0);

    let facets: Vec<FacetCheck> = (0..n)
        .map(|j| {
            let f = polygon.facet(j);
            let vertex_exists = verts[j].as_ref().is_some_and(feasible);
            let edge_nondegenerate = match (&verts[(j + n - 1) % n], &verts[j]) {
                (Some(p), Some(q)) if n >= 3 => {
                    let w = f.normal.tangent();
                    let along = LatticeVector::dot(w, &p.sub(q));
                    along.is_positive()
                }
                _ => false,
            };
            FacetCheck {
                input_index: polygon.input_index(j),
                normal: f.normal,
                primitive: f.normal.is_primitive(),
                vertex_exists,
                edge_nondegenerate,
                det_with_next: dets[j],
                unimodular: dets[j] == -1,
                next_input_index: polygon.input_index(j + 1),
            }
        })
        .collect();
    let passed = bounded
        && facets
            .iter()
            .all(|c| c.primitive && c.vertex_exists && c.edge_nondegenerate && c.unimodular);
    ValidationReport {
        facets,
        bounded,
        passed,
    }
}

/// Vertex `j` is the intersection of canonical facets `j` and `j+1`.
pub fn vertices(polygon: &DelzantPolygon) -> Result<Vec<Point>, PolytopeError> {
    (0..polygon.len())
        .map(|j| {
            vertex_of(polygon.facet(j), polygon.facet(j + 1)).ok_or_else(|| {
                PolytopeError::Degenerate(polygon.input_index(j), polygon.input_index(j + 1))
            })
        })
        .collect()
}

/// Area moments of `{1, x1, x2, x1^2, x1 x2, x2^2}` over the polygon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentSet {
    pub m00: Rational,
    pub m10: Rational,
    pub m01: Rational,
    pub m20: Rational,
    pub m11: Rational,
    pub m02: Rational,
}

impl MomentSet {
    fn zero() -> Self {
        let z = Rational::zero();
        Self {
            m00: z.clone(),
            m10: z.clone(),
            m01: z.clone(),
            m20: z.clone(),
            m11: z.clone(),
            m02: z,
        }
    }

    fn add_triangle(&mut self, p: &Point, q: &Point, r: &Point) {
        let e1 = q.sub(p);
        let e2 = r.sub(p);
        let area = (&e1.x1 * &e2.x2 - &e1.x2 * &e2.x1) / rat(2);
        let xs = [&p.x1, &q.x1, &r.x1];
        let ys = [&p.x2, &q.x2, &r.x2];
        let sum = |v: [&Rational; 3]| v[0] + v[1] + v[2];
        let sym2 = |u: [&Rational; 3], v: [&Rational; 3]| {
            // sum_i u_i v_i + sum_{i<j} (u_i v_j + u_j v_i) / 2
            let mut acc = Rational::zero();
            for i in 0..3 {
                acc += u[i] * v[i];
                for j in (i + 1)..3 {
                    acc += (u[i] * v[j] + u[j] * v[i]) / rat(2);
                }
            }
            acc
        };
        self.m00 += &area;
        self.m10 += &area * sum(xs) / rat(3);
        self.m01 += &area * sum(ys) / rat(3);
        self.m20 += &area * sym2(xs, xs) / rat(6);
        self.m11 += &area * sym2(xs, ys) / rat(6);
        self.m02 += &area * sym2(ys, ys) / rat(6);
    }

    fn negate(&mut self) {
        for m in [
            &mut self.m00,
            &mut self.m10,
            &mut self.m01,
            &mut self.m20,
            &mut self.m11,
            &mut self.m02,
        ] {
            *m = -m.clone();
        }
    }

    /// Gram matrix of `{1, x1, x2}` in `L^2`.
    pub fn gram(&self) -> [[Rational; 3]; 3] {
        [
            [self.m00.clone(), self.m10.clone(), self.m01.clone()],
            [self.m10.clone(), self.m20.clone(), self.m11.clone()],
            [self.m01.clone(), self.m11.clone(), self.m02.clone()],
        ]
    }

    /// Moments of the same region translated by `c` (binomial shift).
    pub fn translated(&self, c: &Point) -> Self {
        let (a, b) = (&c.x1, &c.x2);
        Self {
            m00: self.m00.clone(),
            m10: &self.m10 + a * &self.m00,
            m01: &self.m01 + b * &self.m00,
            m20: &self.m20 + a * &self.m10 * rat(2) + a * a * &self.m00,
            m11: &self.m11 + a * &self.m01 + b * &self.m10 + a * b * &self.m00,
            m02: &self.m02 + b * &self.m01 * rat(2) + b * b * &self.m00,
        }
    }

    pub fn to_f64(&self) -> [f64; 6] {
        [
            to_f64(&self.m00),
            to_f64(&self.m10),
            to_f64(&self.m01),
            to_f64(&self.m20),
            to_f64(&self.m11),
            to_f64(&self.m02),
        ]
    }
}

/// Exact moments by fan triangulation from vertex 0.
pub fn moments(polygon: &DelzantPolygon) -> Result<MomentSet, PolytopeError> {
    let v = vertices(polygon)?;
    let mut m = MomentSet::zero();
    for j in 1..v.len().saturating_sub(1) {
        m.add_triangle(&v[0], &v[j], &v[j + 1]);
    }
    if m.m00.is_negative() {
        m.negate();
    }
    if !m.m00.is_positive() {
        return Err(PolytopeError::Degenerate(
            polygon.input_index(0),
            polygon.input_index(1),
        ));
    }
    Ok(m)
}

/// One surviving edge `E_i`, traversed from `start` to `end`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGeometry {
    pub position: usize,
    pub input_index: usize,
    pub normal: LatticeVector,
    pub start: Point,
    pub end: Point,
    pub lattice_length: Rational,
    pub euclidean_length: f64,
}

/// A polygon with one facet `E` removed; the rest are `E_1 .. E_d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PuncturedPolytope {
    polygon: DelzantPolygon,
    removed: Option<usize>,
}

impl PuncturedPolytope {
    /// `removed` is an input facet index; `None` keeps every edge.
    pub fn new(polygon: DelzantPolygon, removed: Option<usize>) -> Result<Self, PolytopeError> {
        let removed = match removed {
            None => None,
            Some(index) => Some(polygon.position_of(index).ok_or(
                PolytopeError::RemovedOutOfRange {
                    index,
                    count: polygon.len(),
                },
            )?),
        };
        Ok(Self { polygon, removed })
    }

    pub fn polygon(&self) -> &DelzantPolygon {
        &self.polygon
    }

    pub fn removed_input_index(&self) -> Option<usize> {
        self.removed.map(|p| self.polygon.input_index(p))
    }

    pub fn has_removed_edge(&self) -> bool {
        self.removed.is_some()
    }

    /// Canonical positions of `E_1 .. E_d`, starting after the removed facet.
    pub fn surviving_positions(&self) -> Vec<usize> {
        let n = self.polygon.len();
        match self.removed {
            Some(r) => (1..n).map(|k| (r + k) % n).collect(),
            None => (0..n).collect(),
        }
    }

    /// Number of surviving edges `d`.
    pub fn edge_count(&self) -> usize {
        self.surviving_positions().len()
    }

    pub fn surviving_normals(&self) -> Vec<LatticeVector> {
        self.surviving_positions()
            .into_iter()
            .map(|p| self.polygon.facet(p).normal)
            .collect()
    }

    pub fn edges(&self) -> Result<Vec<EdgeGeometry>, PolytopeError> {
        let v = vertices(&self.polygon)?;
        let n = v.len();
        Ok(self
            .surviving_positions()
            .into_iter()
            .map(|p| {
                let normal = self.polygon.facet(p).normal;
                let start = v[(p + n - 1) % n].clone();
                let end = v[p].clone();
                let w = normal.tangent();
                let diff = start.sub(&end);
                let lattice_length = w.dot(&diff) / rat(w.norm_squared());
                let euclidean_length = to_f64(&lattice_length) * (w.norm_squared() as f64).sqrt();
                EdgeGeometry {
                    position: p,
                    input_index: self.polygon.input_index(p),
                    normal,
                    start,
                    end,
                    lattice_length,
                    euclidean_length,
                }
            })
            .collect())
    }

    /// Vertices shared by consecutive surviving edges `E_i, E_{i+1}`, `i = 1..d-1`.
    pub fn interior_vertices(&self) -> Result<Vec<Point>, PolytopeError> {
        let edges = self.edges()?;
        Ok(edges
            .iter()
            .take(edges.len().saturating_sub(1))
            .map(|e| e.end.clone())
            .collect())
    }

    pub fn translated(&self, c: &Point) -> Self {
        Self {
            polygon: self.polygon.translated(c),
            removed: self.removed,
        }
    }

    pub fn transformed(&self, m: [[i64; 2]; 2]) -> Result<Self, PolytopeError> {
        let polygon = self.polygon.transformed(m)?;
        Self::new(polygon, self.removed_input_index())
    }
}

/// `(int 1 dsigma, int x1 dsigma, int x2 dsigma)` over the surviving edges,
/// with `dsigma` the lattice length measure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMoments {
    pub b0: Rational,
    pub b1: Rational,
    pub b2: Rational,
}

pub fn boundary_moments(pp: &PuncturedPolytope) -> Result<BoundaryMoments, PolytopeError> {
    let mut out = BoundaryMoments {
        b0: Rational::zero(),
        b1: Rational::zero(),
        b2: Rational::zero(),
    };
    for e in pp.edges()? {
        let l = &e.lattice_length;
        out.b0 += l;
        out.b1 += l * (&e.start.x1 + &e.end.x1) / rat(2);
        out.b2 += l * (&e.start.x2 + &e.end.x2) / rat(2);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineFunction {
    pub a0: Rational,
    pub a1: Rational,
    pub a2: Rational,
}

impl AffineFunction {
    pub fn eval(&self, p: &Point) -> Rational {
        &self.a0 + &self.a1 * &p.x1 + &self.a2 * &p.x2
    }

    pub fn eta(&self) -> [Rational; 2] {
        [self.a1.clone(), self.a2.clone()]
    }
}

/// Exact Gaussian elimination for a small dense system.
pub(crate) fn solve_exact<const N: usize>(
    m: [[Rational; N]; N],
    b: [Rational; N],
) -> Option<[Rational; N]> {
    let mut a: Vec<Vec<Rational>> = m
        .into_iter()
        .zip(b)
        .map(|(row, rhs)| row.into_iter().chain(std::iter::once(rhs)).collect())
        .collect();
    for col in 0..N {
        let pivot = (col..N).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        let inv = a[col][col].recip();
        for x in a[col][col..].iter_mut() {
            *x = &*x * &inv;
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col && !row[col].is_zero() {
                let factor = row[col].clone();
                for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= &factor * p;
                }
            }
        }
    }
    Some(std::array::from_fn(|i| a[i][N].clone()))
}

/// The affine function whose `L^2(Delta)` pairing with affine `h` equals the
/// boundary integral of `h`, with weight zero on the removed edge.
pub fn extremal_affine(pp: &PuncturedPolytope) -> Result<AffineFunction, PolytopeError> {
    let m = moments(pp.polygon())?;
    let b = boundary_moments(pp)?;
    let [a0, a1, a2] =
        solve_exact(m.gram(), [b.b0, b.b1, b.b2]).ok_or(PolytopeError::SingularMomentMatrix)?;
    Ok(AffineFunction { a0, a1, a2 })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtremalData {
    pub eta: [Rational; 2],
    pub a0_residual: Rational,
    pub normalized: bool,
    pub translation: [Rational; 2],
}

impl ExtremalData {
    pub fn eta_f64(&self) -> [f64; 2] {
        [to_f64(&self.eta[0]), to_f64(&self.eta[1])]
    }
}

/// Translate along `eta` so that the extremal affine function has no constant term.
pub fn normalize(
    pp: &PuncturedPolytope,
    af: &AffineFunction,
) -> Result<(PuncturedPolytope, ExtremalData), NormalizeError> {
    let eta = af.eta();
    let norm2 = &eta[0] * &eta[0] + &eta[1] * &eta[1];
    if norm2.is_zero() {
        return Err(if af.a0.is_zero() {
            NormalizeError::ScalarFlat
        } else {
            NormalizeError::NotNormalizable
        });
    }
    let scale = &af.a0 / &norm2;
    let c = Point::new(&eta[0] * &scale, &eta[1] * &scale);
    let moved = pp.translated(&c);
    // On Delta + c the extremal function is x -> af(x - c); its constant term:
    let a0_residual = &af.a0 - (&eta[0] * &c.x1 + &eta[1] * &c.x2);
    let normalized = a0_residual.is_zero();
    Ok((
        moved,
        ExtremalData {
            eta,
            a0_residual,
            normalized,
            translation: [c.x1, c.x2],
        },
    ))
}

/// Extremal solve followed by normalization.
pub fn extremal_data(
    pp: &PuncturedPolytope,
) -> Result<(PuncturedPolytope, ExtremalData), crate::Error> {
    let af = extremal_affine(pp)?;
    Ok(normalize(pp, &af)?)
}
