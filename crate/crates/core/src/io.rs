//! JSON file formats. Rationals travel as `"p/q"` strings.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::polytope::{
    AffineFunction, DelzantPolygon, ExtremalData, Facet, LatticeVector, PuncturedPolytope, Rational,
};
use crate::solver::NodeSolveProblem;
use crate::{Error, Result};

pub fn rational_string(q: &Rational) -> String {
    q.to_string()
}

pub fn parse_rational(s: &str) -> Result<Rational> {
    Rational::from_str(s.trim()).map_err(|_| Error::Input(format!("not a rational number: `{s}`")))
}

/// Offset as written in a polytope file: an integer or a `"p/q"` string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OffsetValue {
    Int(i64),
    Text(String),
}

impl OffsetValue {
    pub fn to_rational(&self) -> Result<Rational> {
        match self {
            Self::Int(n) => Ok(crate::polytope::rat(*n)),
            Self::Text(s) => parse_rational(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetSpec {
    pub normal: [i64; 2],
    pub offset: OffsetValue,
}

/// `{"facets": [{"normal": [int, int], "offset": "p/q"}, ...], "removed": int}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolytopeFile {
    pub facets: Vec<FacetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed: Option<usize>,
}

impl PolytopeFile {
    pub fn to_polytope(&self) -> Result<PuncturedPolytope> {
        let facets = self
            .facets
            .iter()
            .map(|f| {
                Ok(Facet::new(
                    LatticeVector::new(f.normal[0], f.normal[1]),
                    f.offset.to_rational()?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let polygon = DelzantPolygon::new(facets)?;
        Ok(PuncturedPolytope::new(polygon, self.removed)?)
    }

    /// Facets in input order, the removed index as given.
    pub fn from_polytope(pp: &PuncturedPolytope) -> Self {
        let facets = pp
            .polygon()
            .input_order_facets()
            .into_iter()
            .map(|f| FacetSpec {
                normal: [f.normal.u1, f.normal.u2],
                offset: OffsetValue::Text(rational_string(&f.offset)),
            })
            .collect();
        Self {
            facets,
            removed: pp.removed_input_index(),
        }
    }
}

pub fn parse_polytope(json: &str) -> Result<PuncturedPolytope> {
    let file: PolytopeFile = serde_json::from_str(json).map_err(|e| Error::Input(e.to_string()))?;
    file.to_polytope()
}

pub fn read_polytope(path: &std::path::Path) -> Result<PuncturedPolytope> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_polytope(&text)
}

/// Extremal data for reporting: exact values as strings plus floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalReport {
    /// `(alpha_0, alpha_1, alpha_2)` before normalization.
    pub alpha: [String; 3],
    pub eta: [String; 2],
    pub eta_f64: [f64; 2],
    pub a0_residual: String,
    pub normalized: bool,
    pub translation: [String; 2],
    pub polytope: PolytopeFile,
}

impl ExtremalReport {
    pub fn new(af: &AffineFunction, data: &ExtremalData, normalized: &PuncturedPolytope) -> Self {
        Self {
            alpha: [
                rational_string(&af.a0),
                rational_string(&af.a1),
                rational_string(&af.a2),
            ],
            eta: [rational_string(&data.eta[0]), rational_string(&data.eta[1])],
            eta_f64: data.eta_f64(),
            a0_residual: rational_string(&data.a0_residual),
            normalized: data.normalized,
            translation: [
                rational_string(&data.translation[0]),
                rational_string(&data.translation[1]),
            ],
            polytope: PolytopeFile::from_polytope(normalized),
        }
    }
}

/// Solve request: a polytope, `A`, and optionally explicit targets or
/// reference nodes from which targets are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRequest {
    pub polytope: PolytopeFile,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_targets: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_nodes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

impl SolveRequest {
    /// Normalize the polytope and assemble the node problem.
    pub fn to_problem(&self) -> Result<NodeSolveProblem> {
        let pp = self.polytope.to_polytope()?;
        let (normalized, data) = crate::polytope::extremal_data(&pp)?;
        let mut problem = match &self.reference_nodes {
            Some(nodes) => NodeSolveProblem::from_nodes(normalized, data.eta, self.a, nodes)?,
            None => NodeSolveProblem::from_polytope(normalized, data.eta, self.a)?,
        };
        if let Some(t) = &self.targets {
            problem.targets = t.clone();
        }
        if let Some(e) = self.end_targets {
            problem.end_targets = e;
        }
        Ok(problem)
    }
}

/// Parse a comma-separated list of reals, e.g. `0,0.75`.
pub fn parse_nodes(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("not a number: `{t}`")))
        })
        .collect()
}
