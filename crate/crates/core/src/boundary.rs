//! The boundary profile `f(z) = A + Bz + sum a_i |z - z_i|` and the
//! combinatorial data read off from the extremal vector.

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polytope::{rat, to_f64, LatticeVector, PuncturedPolytope, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundaryError {
    #[error("{coeffs} kink coefficients but {nodes} nodes")]
    LengthMismatch { coeffs: usize, nodes: usize },
    #[error("nodes must be strictly increasing (node {0} is not)")]
    UnorderedNodes(usize),
    #[error("profile parameters must be finite")]
    NonFinite,
}

/// A kink of `f` at `z` with weight `a`; serialized as `[z, a]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Kink {
    pub z: f64,
    pub a: f64,
}

impl From<(f64, f64)> for Kink {
    fn from((z, a): (f64, f64)) -> Self {
        Self { z, a }
    }
}

impl From<Kink> for (f64, f64) {
    fn from(k: Kink) -> Self {
        (k.z, k.a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryProfile {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub kinks: Vec<Kink>,
}

impl BoundaryProfile {
    pub fn new(a: f64, b: f64, coeffs: &[f64], nodes: &[f64]) -> Result<Self, BoundaryError> {
        if coeffs.len() != nodes.len() {
            return Err(BoundaryError::LengthMismatch {
                coeffs: coeffs.len(),
                nodes: nodes.len(),
            });
        }
        let kinks = nodes
            .iter()
            .zip(coeffs)
            .map(|(&z, &a)| Kink { z, a })
            .collect();
        Self::from_kinks(a, b, kinks)
    }

    pub fn from_kinks(a: f64, b: f64, kinks: Vec<Kink>) -> Result<Self, BoundaryError> {
        let finite = a.is_finite()
            && b.is_finite()
            && kinks.iter().all(|k| k.z.is_finite() && k.a.is_finite());
        if !finite {
            return Err(BoundaryError::NonFinite);
        }
        if let Some(i) = (1..kinks.len()).find(|&i| kinks[i].z <= kinks[i - 1].z) {
            return Err(BoundaryError::UnorderedNodes(i));
        }
        Ok(Self { a, b, kinks })
    }

    /// Check the invariants of a deserialized profile.
    pub fn validated(self) -> Result<Self, BoundaryError> {
        Self::from_kinks(self.a, self.b, self.kinks)
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.kinks.iter().map(|k| k.z).collect()
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.kinks.iter().map(|k| k.a).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.kinks.iter().map(|k| k.a).sum()
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.a
            + self.b * z
            + self
                .kinks
                .iter()
                .map(|k| k.a * (z - k.z).abs())
                .sum::<f64>()
    }

    /// Slope on segment `i`: `]-inf, z_1[` is 0, `]z_i, z_{i+1}[` is `i`.
    pub fn segment_slope(&self, i: usize) -> f64 {
        let (left, right) = self.kinks.split_at(i.min(self.kinks.len()));
        self.b + left.iter().map(|k| k.a).sum::<f64>() - right.iter().map(|k| k.a).sum::<f64>()
    }

    pub fn segment_slopes(&self) -> Vec<f64> {
        (0..=self.kinks.len())
            .map(|i| self.segment_slope(i))
            .collect()
    }

    /// Index of the segment containing `z` (kinks belong to the right segment).
    pub fn segment_of(&self, z: f64) -> usize {
        self.kinks.partition_point(|k| k.z <= z)
    }

    pub fn is_convex(&self) -> bool {
        self.segment_slopes().windows(2).all(|w| w[1] >= w[0])
    }
}

/// `det(eta, nu_i)` for the surviving edges, in order.
pub fn edge_slopes(eta: &[Rational; 2], pp: &PuncturedPolytope) -> Vec<Rational> {
    pp.surviving_normals()
        .into_iter()
        .map(|n| n.det_with(eta))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileCoefficients {
    pub a: Vec<Rational>,
    pub b: Rational,
}

impl ProfileCoefficients {
    pub fn a_f64(&self) -> Vec<f64> {
        self.a.iter().map(to_f64).collect()
    }

    pub fn b_f64(&self) -> f64 {
        to_f64(&self.b)
    }

    pub fn sum_a(&self) -> Rational {
        self.a.iter().fold(Rational::zero(), |acc, x| acc + x)
    }
}

/// `a_j = det(eta, nu_{j+1} - nu_j) / 2` and `B = det(eta, nu_1 + nu_d) / 2`.
pub fn profile_coefficients(eta: &[Rational; 2], pp: &PuncturedPolytope) -> ProfileCoefficients {
    coefficients_from_normals(eta, &pp.surviving_normals())
}

/// Same as [`profile_coefficients`] for an explicit list `nu_1 .. nu_d`.
pub fn coefficients_from_normals(
    eta: &[Rational; 2],
    normals: &[LatticeVector],
) -> ProfileCoefficients {
    let s: Vec<Rational> = normals.iter().map(|n| n.det_with(eta)).collect();
    let two = rat(2);
    let a = s.windows(2).map(|w| (&w[1] - &w[0]) / &two).collect();
    let b = match (s.first(), s.last()) {
        (Some(first), Some(last)) => (first + last) / &two,
        _ => Rational::zero(),
    };
    ProfileCoefficients { a, b }
}

/// Profile of a polytope at constant `A` with the given kink positions.
pub fn profile_for(
    eta: &[Rational; 2],
    pp: &PuncturedPolytope,
    a: f64,
    nodes: &[f64],
) -> Result<BoundaryProfile, BoundaryError> {
    let c = profile_coefficients(eta, pp);
    BoundaryProfile::new(a, c.b_f64(), &c.a_f64(), nodes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason")]
pub enum AdmissibilityFailure {
    NonPositiveA,
    NonPositiveKink {
        index: usize,
    },
    #[serde(rename = "NonALFSlope")]
    NonAlfSlope,
    NonPositiveProfile {
        z: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub a_positive: bool,
    pub kinks_positive: bool,
    pub b_zero: bool,
    pub f_positive: bool,
    pub admissible: bool,
    pub failures: Vec<AdmissibilityFailure>,
}

/// `f` is piecewise affine, so positivity on the node range is a check at the nodes.
pub fn admissibility(profile: &BoundaryProfile) -> AdmissibilityReport {
    let mut failures = Vec::new();
    let a_positive = profile.a > 0.0;
    if !a_positive {
        failures.push(AdmissibilityFailure::NonPositiveA);
    }
    for (index, k) in profile.kinks.iter().enumerate() {
        if k.a <= 0.0 {
            failures.push(AdmissibilityFailure::NonPositiveKink { index });
        }
    }
    let kinks_positive = profile.kinks.iter().all(|k| k.a > 0.0);
    let b_zero = profile.b == 0.0;
    if !b_zero {
        failures.push(AdmissibilityFailure::NonAlfSlope);
    }
    let probes = if profile.kinks.is_empty() {
        vec![0.0]
    } else {
        profile.nodes()
    };
    let mut f_positive = true;
    for z in probes {
        if profile.eval(z) <= 0.0 {
            f_positive = false;
            failures.push(AdmissibilityFailure::NonPositiveProfile { z });
        }
    }
    AdmissibilityReport {
        a_positive,
        kinks_positive,
        b_zero,
        f_positive,
        admissible: failures.is_empty(),
        failures,
    }
}

/// Where `scal` vanishes on the closure of the non-compact surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VanishingCase {
    AlongD,
    /// `end` is 1 or `d`: the non-compact edge whose endpoint on `D` carries the zero.
    AtVertex {
        end: usize,
    },
    Nowhere,
}

pub fn scal_vanishing_case(eta: &[Rational; 2], pp: &PuncturedPolytope) -> VanishingCase {
    let s = edge_slopes(eta, pp);
    let d = s.len();
    let first_zero = s.first().is_none_or(|x| x.is_zero());
    let last_zero = s.last().is_none_or(|x| x.is_zero());
    match (first_zero, last_zero) {
        (false, false) => VanishingCase::AlongD,
        // The zero sits on the end whose edge is not parallel to eta.
        (true, false) => VanishingCase::AtVertex { end: d },
        (false, true) => VanishingCase::AtVertex { end: 1 },
        (true, true) => VanishingCase::Nowhere,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyLabel {
    #[serde(rename = "ReversedTaubNUT")]
    ReversedTaubNut,
    KerrTaubBolt,
    ChenTeo,
    Unclassified,
}

impl FamilyLabel {
    pub fn from_edge_count(d: usize) -> Self {
        match d {
            2 => Self::ReversedTaubNut,
            3 => Self::KerrTaubBolt,
            4 => Self::ChenTeo,
            _ => Self::Unclassified,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ReversedTaubNut => "ReversedTaubNUT",
            Self::KerrTaubBolt => "KerrTaubBolt",
            Self::ChenTeo => "ChenTeo",
            Self::Unclassified => "Unclassified",
        }
    }
}

impl std::fmt::Display for FamilyLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub family: FamilyLabel,
    pub edges: usize,
    /// Input index of the removed facet.
    pub removed: Option<usize>,
}

pub fn classify_family(pp: &PuncturedPolytope) -> Classification {
    let edges = if pp.has_removed_edge() {
        pp.edge_count()
    } else {
        0
    };
    Classification {
        family: FamilyLabel::from_edge_count(edges),
        edges,
        removed: pp.removed_input_index(),
    }
}

/// Exact convexity: every kink weight is nonnegative.
pub fn coefficients_convex(c: &ProfileCoefficients) -> bool {
    c.a.iter().all(|a: &BigRational| !a.is_negative())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{ratio, DelzantPolygon, Facet};

    fn simplex_minus_hypotenuse() -> PuncturedPolytope {
        let p = DelzantPolygon::new(vec![
            Facet::new(LatticeVector::new(1, 0), rat(0)),
            Facet::new(LatticeVector::new(0, 1), rat(0)),
            Facet::new(LatticeVector::new(-1, -1), rat(-1)),
        ])
        .unwrap();
        PuncturedPolytope::new(p, Some(2)).unwrap()
    }

    #[test]
    fn det_convention() {
        let eta = [rat(0), rat(1)];
        assert_eq!(LatticeVector::new(1, 0).det_with(&eta), rat(-1));
        let eta = [rat(2), rat(4)];
        assert!(LatticeVector::new(1, 2).det_with(&eta).is_zero());
    }

    #[test]
    fn coefficient_from_two_normals() {
        let normals = [LatticeVector::new(1, 0), LatticeVector::new(0, 1)];
        let c = coefficients_from_normals(&[rat(0), rat(1)], &normals);
        assert_eq!(c.a, vec![ratio(1, 2)]);
    }

    #[test]
    fn simplex_coefficients() {
        let pp = simplex_minus_hypotenuse();
        let eta = [rat(-12), rat(-12)];
        let s = edge_slopes(&eta, &pp);
        assert_eq!(s, vec![rat(-12), rat(12)]);
        let c = profile_coefficients(&eta, &pp);
        assert_eq!(c.a, vec![rat(12)]);
        assert!(c.b.is_zero());
        assert_eq!(scal_vanishing_case(&eta, &pp), VanishingCase::AlongD);
        assert_eq!(classify_family(&pp).family, FamilyLabel::ReversedTaubNut);
    }

    #[test]
    fn vanishing_cases() {
        let pp = simplex_minus_hypotenuse();
        // E_1 = (0,1), E_2 = (1,0).
        assert_eq!(
            scal_vanishing_case(&[rat(0), rat(1)], &pp),
            VanishingCase::AtVertex { end: 2 }
        );
        assert_eq!(
            scal_vanishing_case(&[rat(1), rat(0)], &pp),
            VanishingCase::AtVertex { end: 1 }
        );
        assert_eq!(
            scal_vanishing_case(&[rat(0), rat(0)], &pp),
            VanishingCase::Nowhere
        );
    }

    #[test]
    fn single_kink_values() {
        let f = BoundaryProfile::new(1.0, 0.0, &[0.5], &[0.0]).unwrap();
        assert_eq!(f.eval(2.0), 2.0);
        assert_eq!(f.eval(-2.0), 2.0);
        assert_eq!(f.segment_slopes(), vec![-0.5, 0.5]);
    }

    #[test]
    fn unordered_nodes_rejected() {
        assert_eq!(
            BoundaryProfile::new(1.0, 0.0, &[1.0, 1.0], &[1.0, 0.0]),
            Err(BoundaryError::UnorderedNodes(1))
        );
        assert_eq!(
            BoundaryProfile::new(1.0, 0.0, &[1.0], &[1.0, 2.0]),
            Err(BoundaryError::LengthMismatch {
                coeffs: 1,
                nodes: 2
            })
        );
    }

    #[test]
    fn admissibility_flags() {
        let ok = BoundaryProfile::new(0.5, 0.0, &[0.5], &[0.0]).unwrap();
        assert!(admissibility(&ok).admissible);
        let neg = BoundaryProfile::new(-1.0, 0.0, &[0.5], &[0.0]).unwrap();
        let r = admissibility(&neg);
        assert!(!r.admissible && !r.a_positive);
        let tilted = BoundaryProfile::new(0.5, 0.1, &[0.5], &[0.0]).unwrap();
        let r = admissibility(&tilted);
        assert!(!r.admissible);
        assert!(r.failures.contains(&AdmissibilityFailure::NonAlfSlope));
        let json = serde_json::to_string(&r.failures).unwrap();
        assert!(json.contains("NonALFSlope"));
    }

    #[test]
    fn profile_json_shape() {
        let f = BoundaryProfile::new(0.5, 0.0, &[0.25, 1.0], &[0.0, 1.5]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&f).unwrap();
        assert_eq!(v["A"], 0.5);
        assert_eq!(v["kinks"][1][0], 1.5);
        let back: BoundaryProfile = serde_json::from_value(v).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn family_labels() {
        assert_eq!(FamilyLabel::from_edge_count(3), FamilyLabel::KerrTaubBolt);
        assert_eq!(FamilyLabel::from_edge_count(5), FamilyLabel::Unclassified);
        assert_eq!(
            serde_json::to_string(&FamilyLabel::ReversedTaubNut).unwrap(),
            "\"ReversedTaubNUT\""
        );
    }
}
