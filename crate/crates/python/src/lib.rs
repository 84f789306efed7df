//! Python bindings. Polytopes, profiles and reports cross the boundary as JSON
//! strings in the same formats the command-line tool reads and writes.

use bgtoric::boundary::{admissibility, classify_family};
use bgtoric::harmonic;
use bgtoric::io::{parse_polytope, ExtremalReport, SolveRequest};
use bgtoric::pipeline::{self, Prepared, VerifyOptions};
use bgtoric::polytope::validate as validate_polygon;
use bgtoric::solver::solve_nodes_with;
use bgtoric::{fixtures, BoundaryProfile, Config, GridSpec};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json(value: &impl Serialize) -> PyResult<String> {
    serde_json::to_string(value).map_err(err)
}

fn read_profile(json: &str) -> PyResult<BoundaryProfile> {
    let p: BoundaryProfile = serde_json::from_str(json).map_err(err)?;
    BoundaryProfile::from_kinks(p.a, p.b, p.kinks).map_err(err)
}

/// Polytope JSON of a bundled fixture.
#[pyfunction]
fn fixture(name: &str) -> PyResult<String> {
    fixtures::fixture_json(name).map(str::to_owned).map_err(err)
}

#[pyfunction]
fn fixture_names() -> Vec<&'static str> {
    fixtures::fixture_names().collect()
}

/// Delzant validation report.
#[pyfunction]
fn validate(polytope: &str) -> PyResult<String> {
    to_json(&validate_polygon(
        parse_polytope(polytope).map_err(err)?.polygon(),
    ))
}

/// Extremal affine function, extremal vector and the normalized polytope.
#[pyfunction]
fn extremal(polytope: &str) -> PyResult<String> {
    let prepared = Prepared::new(&parse_polytope(polytope).map_err(err)?).map_err(err)?;
    to_json(&ExtremalReport::new(
        &prepared.affine,
        &prepared.extremal,
        &prepared.normalized,
    ))
}

#[pyfunction]
fn classify(polytope: &str) -> PyResult<String> {
    to_json(&classify_family(&parse_polytope(polytope).map_err(err)?))
}

/// Boundary profile JSON for `A` and the given kink positions (defaults when omitted).
#[pyfunction]
#[pyo3(signature = (polytope, a, nodes=None))]
fn profile(polytope: &str, a: f64, nodes: Option<Vec<f64>>) -> PyResult<String> {
    let prepared = Prepared::new(&parse_polytope(polytope).map_err(err)?).map_err(err)?;
    let nodes = nodes.unwrap_or_else(|| prepared.default_nodes());
    to_json(&prepared.profile(a, &nodes).map_err(err)?)
}

/// Whether a profile satisfies `A > 0`, `B = 0` and positive kink weights.
#[pyfunction]
fn is_admissible(profile: &str) -> PyResult<bool> {
    Ok(admissibility(&read_profile(profile)?).admissible)
}

/// Solve request JSON in, solve result JSON out.
#[pyfunction]
fn solve(request: &str) -> PyResult<String> {
    let req: SolveRequest = serde_json::from_str(request).map_err(err)?;
    let problem = req.to_problem().map_err(err)?;
    let mut opts = pipeline::solve_options(&Config::default());
    if let Some(tol) = req.tol {
        opts.tol = tol;
    }
    if let Some(max_iter) = req.max_iter {
        opts.max_iter = max_iter;
    }
    to_json(&solve_nodes_with(&problem, &opts).map_err(err)?)
}

#[pyfunction]
fn eval_u(profile: &str, z: f64, rho: f64) -> PyResult<f64> {
    harmonic::eval_u(&read_profile(profile)?, z, rho).map_err(err)
}

#[pyfunction]
fn eval_h(profile: &str, z: f64, rho: f64) -> PyResult<f64> {
    harmonic::eval_h(&read_profile(profile)?, z, rho).map_err(err)
}

/// `(U, U_z, U_rho, U_zz, U_rhorho, U_rhoz, H)` at one point.
#[pyfunction]
fn eval_partials(profile: &str, z: f64, rho: f64) -> PyResult<(f64, f64, f64, f64, f64, f64, f64)> {
    let e = harmonic::eval_partials(&read_profile(profile)?, z, rho).map_err(err)?;
    Ok((e.u, e.u_z, e.u_rho, e.u_zz, e.u_rhorho, e.u_rhoz, e.h))
}

/// Full pipeline report; `passed` is false when any invariant fails.
#[pyfunction]
#[pyo3(signature = (polytope, a, nodes=None, solve=false, grid=None))]
fn verify(
    polytope: &str,
    a: f64,
    nodes: Option<Vec<f64>>,
    solve: bool,
    grid: Option<&str>,
) -> PyResult<String> {
    let pp = parse_polytope(polytope).map_err(err)?;
    let grid = grid.map(str::parse::<GridSpec>).transpose().map_err(err)?;
    let opts = VerifyOptions {
        a,
        nodes,
        solve,
        grid,
        config: Config::default(),
    };
    to_json(&pipeline::verify(&pp, &opts).map_err(err)?)
}

#[pymodule]
fn bgtoric_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(fixture, m)?)?;
    m.add_function(wrap_pyfunction!(fixture_names, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(extremal, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add_function(wrap_pyfunction!(is_admissible, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(eval_u, m)?)?;
    m.add_function(wrap_pyfunction!(eval_h, m)?)?;
    m.add_function(wrap_pyfunction!(eval_partials, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
