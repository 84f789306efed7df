//! Oracles shared by the integration tests. Nothing here calls into the
//! library's own integration or differentiation code.

#![allow(dead_code)]

use bgtoric::boundary::Kink;
use bgtoric::polytope::{rat, ratio, validate, DelzantPolygon, Facet, Point, Rational};
use bgtoric::{BoundaryProfile, LatticeVector};
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Admissible profile: `A > 0`, all `a_i > 0`, `B = 0`, kinks at least 0.1 apart.
pub fn random_profile(rng: &mut impl Rng, max_kinks: usize) -> BoundaryProfile {
    let n = rng.gen_range(1..=max_kinks);
    let mut z = rng.gen_range(-2.0..0.0);
    let kinks = (0..n)
        .map(|_| {
            let k = Kink {
                z,
                a: rng.gen_range(0.1..2.0),
            };
            z += rng.gen_range(0.1..1.5);
            k
        })
        .collect();
    BoundaryProfile::from_kinks(rng.gen_range(0.1..3.0), 0.0, kinks).unwrap()
}

pub fn profile(a: f64, kinks: &[(f64, f64)]) -> BoundaryProfile {
    BoundaryProfile::from_kinks(a, 0.0, kinks.iter().map(|&(z, a)| Kink { z, a }).collect())
        .unwrap()
}

/// Relative difference scaled by `max(1, |reference|)`.
pub fn rel(x: f64, reference: f64) -> f64 {
    (x - reference).abs() / reference.abs().max(1.0)
}

pub fn central<F: Fn(f64) -> f64>(g: F, x: f64, h: f64) -> f64 {
    (g(x + h) - g(x - h)) / (2.0 * h)
}

pub fn second<F: Fn(f64) -> f64>(g: F, x: f64, h: f64) -> f64 {
    (g(x + h) - 2.0 * g(x) + g(x - h)) / (h * h)
}

/// Primitive normals with entries in `[-3, 3]`.
fn random_primitive(rng: &mut impl Rng) -> LatticeVector {
    loop {
        let v = LatticeVector::new(rng.gen_range(-3..=3), rng.gen_range(-3..=3));
        if !v.is_zero() && v.is_primitive() {
            return v;
        }
    }
}

/// A bounded convex polygon with 3 to 6 non-redundant facets containing a random
/// rational point. Not necessarily Delzant.
pub fn random_polygon(rng: &mut impl Rng) -> DelzantPolygon {
    loop {
        let k = rng.gen_range(3..=6);
        let c = Point::new(
            ratio(rng.gen_range(-6..=6), 3),
            ratio(rng.gen_range(-6..=6), 3),
        );
        let facets: Vec<Facet> = (0..k)
            .map(|_| {
                let nu = random_primitive(rng);
                let h = ratio(rng.gen_range(1..=12), rng.gen_range(1..=4));
                Facet::new(nu, nu.dot(&c) - h)
            })
            .collect();
        let Ok(polygon) = DelzantPolygon::new(facets) else {
            continue;
        };
        let report = validate(&polygon);
        if report.bounded
            && report
                .facets
                .iter()
                .all(|f| f.vertex_exists && f.edge_nondegenerate)
        {
            return polygon;
        }
    }
}

/// Random element of SL(2,Z) as a word in the standard generators.
pub fn random_sl2z(rng: &mut impl Rng) -> [[i64; 2]; 2] {
    const GENS: [[[i64; 2]; 2]; 4] = [
        [[0, -1], [1, 0]],
        [[1, 1], [0, 1]],
        [[1, -1], [0, 1]],
        [[1, 0], [1, 1]],
    ];
    let mut m = [[1, 0], [0, 1]];
    for _ in 0..rng.gen_range(1..=6) {
        let g = GENS[rng.gen_range(0..GENS.len())];
        m = [
            [
                m[0][0] * g[0][0] + m[0][1] * g[1][0],
                m[0][0] * g[0][1] + m[0][1] * g[1][1],
            ],
            [
                m[1][0] * g[0][0] + m[1][1] * g[1][0],
                m[1][0] * g[0][1] + m[1][1] * g[1][1],
            ],
        ];
    }
    m
}

/// Vertices in boundary order, by Cramer's rule on consecutive facets.
pub fn cramer_vertices(polygon: &DelzantPolygon) -> Vec<Point> {
    let n = polygon.len();
    (0..n)
        .map(|j| {
            let (f, g) = (polygon.facet(j), polygon.facet((j + 1) % n));
            let det = rat(f.normal.u1 * g.normal.u2 - f.normal.u2 * g.normal.u1);
            let x1 = (&f.offset * rat(g.normal.u2) - &g.offset * rat(f.normal.u2)) / &det;
            let x2 = (&g.offset * rat(f.normal.u1) - &f.offset * rat(g.normal.u1)) / &det;
            Point::new(x1, x2)
        })
        .collect()
}

/// Exact moments `[1, x1, x2, x1^2, x1 x2, x2^2]` from the shoelace formulas.
pub fn shoelace_moments(vertices: &[Point]) -> [Rational; 6] {
    let n = vertices.len();
    let mut m: [Rational; 6] = Default::default();
    for i in 0..n {
        let (p, q) = (&vertices[i], &vertices[(i + 1) % n]);
        let (x0, y0, x1, y1) = (&p.x1, &p.x2, &q.x1, &q.x2);
        let cr = x0 * y1 - x1 * y0;
        m[0] += &cr / rat(2);
        m[1] += (x0 + x1) * &cr / rat(6);
        m[2] += (y0 + y1) * &cr / rat(6);
        m[3] += (x0 * x0 + x0 * x1 + x1 * x1) * &cr / rat(12);
        m[4] += (x0 * y1 + rat(2) * x0 * y0 + rat(2) * x1 * y1 + x1 * y0) * &cr / rat(24);
        m[5] += (y0 * y0 + y0 * y1 + y1 * y1) * &cr / rat(12);
    }
    if m[0].is_negative() {
        for v in &mut m {
            *v = -v.clone();
        }
    }
    m
}

/// `integral over the edge of h dsigma` for affine `h` is the lattice length
/// times the midpoint value; lattice length from the primitive edge direction.
pub fn lattice_length(nu: LatticeVector, p: &Point, q: &Point) -> Rational {
    let (dx, dy) = (&q.x1 - &p.x1, &q.x2 - &p.x2);
    let t = if nu.u2 != 0 {
        dx / rat(nu.u2)
    } else {
        dy / rat(-nu.u1)
    };
    t.abs()
}

/// Boundary integrals of `1, x1, x2` against `dsigma` over every facet whose
/// canonical position is not `skip`.
pub fn boundary_integrals(polygon: &DelzantPolygon, skip: Option<usize>) -> [Rational; 3] {
    let v = cramer_vertices(polygon);
    let n = v.len();
    let mut out: [Rational; 3] = Default::default();
    for j in 0..n {
        if Some(j) == skip {
            continue;
        }
        // facet j runs from vertex j-1 to vertex j
        let (p, q) = (&v[(j + n - 1) % n], &v[j]);
        let len = lattice_length(polygon.facet(j).normal, p, q);
        out[0] += &len;
        out[1] += &len * (&p.x1 + &q.x1) / rat(2);
        out[2] += &len * (&p.x2 + &q.x2) / rat(2);
    }
    out
}

/// Monte-Carlo estimate and standard error of the six moments.
pub fn monte_carlo_moments(
    polygon: &DelzantPolygon,
    samples: usize,
    rng: &mut impl Rng,
) -> [(f64, f64); 6] {
    let v: Vec<[f64; 2]> = cramer_vertices(polygon).iter().map(Point::to_f64).collect();
    let (lo, hi) = v.iter().fold(
        ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
        |(lo, hi), p| {
            (
                [lo[0].min(p[0]), lo[1].min(p[1])],
                [hi[0].max(p[0]), hi[1].max(p[1])],
            )
        },
    );
    let box_area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
    let facets: Vec<([f64; 2], f64)> = polygon
        .facets()
        .iter()
        .map(|f| {
            (
                [f.normal.u1 as f64, f.normal.u2 as f64],
                bgtoric::polytope::to_f64(&f.offset),
            )
        })
        .collect();
    let mut sum = [0.0; 6];
    let mut sum2 = [0.0; 6];
    for _ in 0..samples {
        let x = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        if facets.iter().all(|(n, c)| n[0] * x[0] + n[1] * x[1] >= *c) {
            let g = [1.0, x[0], x[1], x[0] * x[0], x[0] * x[1], x[1] * x[1]];
            for k in 0..6 {
                sum[k] += g[k];
                sum2[k] += g[k] * g[k];
            }
        }
    }
    let n = samples as f64;
    std::array::from_fn(|k| {
        let mean = sum[k] / n;
        let var = (sum2[k] / n - mean * mean).max(0.0);
        (box_area * mean, box_area * (var / n).sqrt())
    })
}

pub fn is_zero(q: &Rational) -> bool {
    q.is_zero()
}

/// Random Delzant polygon: a scaled fixture, a few corner blow-ups (new normal
/// `nu_j + nu_{j+1}`), then a random unimodular map and translation.
pub fn random_delzant(rng: &mut impl Rng) -> DelzantPolygon {
    let fixtures = bgtoric::fixtures::all_fixtures();
    loop {
        let (_, base) = &fixtures[rng.gen_range(0..fixtures.len())];
        let scale = rat(rng.gen_range(2..=5));
        let mut facets: Vec<Facet> = (0..base.polygon().len())
            .map(|j| {
                let f = base.polygon().facet(j);
                Facet::new(f.normal, &f.offset * &scale)
            })
            .collect();
        for _ in 0..rng.gen_range(0..=3) {
            let polygon = DelzantPolygon::new(facets.clone()).unwrap();
            let v = cramer_vertices(&polygon);
            let j = rng.gen_range(0..polygon.len());
            let (f, g) = (polygon.facet(j), polygon.facet((j + 1) % polygon.len()));
            let nu = LatticeVector::new(f.normal.u1 + g.normal.u1, f.normal.u2 + g.normal.u2);
            let eps = ratio(1, rng.gen_range(1..=3));
            facets.push(Facet::new(nu, nu.dot(&v[j]) + eps));
        }
        let Ok(polygon) = DelzantPolygon::new(facets) else {
            continue;
        };
        if !validate(&polygon).passed {
            continue;
        }
        let Ok(polygon) = polygon.transformed(random_sl2z(rng)) else {
            continue;
        };
        let c = Point::new(
            ratio(rng.gen_range(-9..=9), 2),
            ratio(rng.gen_range(-9..=9), 3),
        );
        return polygon.translated(&c);
    }
}
