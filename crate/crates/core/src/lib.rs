//! Toric Delzant polygons with one removed edge, the axi-symmetric harmonic
//! potential they determine, and the metric quantities derived from it.
//!
//! The pipeline runs polygon -> extremal vector -> boundary profile `f` ->
//! harmonic function `U` and conjugate `H` -> scalar curvature, `V`, moment
//! coordinates and divisor volumes. The inverse problem of locating the kinks
//! of `f` from edge lengths lives in [`solver`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod config;
pub mod fixtures;
pub mod geometry;
pub mod harmonic;
pub mod io;
pub mod pipeline;
pub mod polytope;
pub mod solver;

pub use boundary::{BoundaryProfile, FamilyLabel, Kink, VanishingCase};
pub use config::Config;
pub use harmonic::{GridSpec, HarmonicEval};
pub use polytope::{
    DelzantPolygon, ExtremalData, Facet, LatticeVector, PuncturedPolytope, Rational,
};
pub use solver::{NodeSolveProblem, NodeSolveResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Polytope(#[from] polytope::PolytopeError),
    #[error(transparent)]
    Normalize(#[from] polytope::NormalizeError),
    #[error(transparent)]
    Boundary(#[from] boundary::BoundaryError),
    #[error(transparent)]
    Harmonic(#[from] harmonic::HarmonicError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
