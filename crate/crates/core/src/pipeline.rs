//! End-to-end run from a punctured polytope to a verification report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::{
    admissibility, classify_family, coefficients_convex, edge_slopes, profile_coefficients,
    scal_vanishing_case, AdmissibilityReport, BoundaryProfile, Classification, ProfileCoefficients,
    VanishingCase,
};
use crate::config::Config;
use crate::geometry::{
    calibrate, divisor_volumes, scal, v_quantity, vertex_anchored_profile, VolumeReport,
};
use crate::harmonic::{boundary_limit_residual, eval_h, eval_partials, eval_u, GridSpec};
use crate::io::ExtremalReport;
use crate::polytope::{
    boundary_moments, extremal_affine, moments, normalize, validate, AffineFunction, ExtremalData,
    PuncturedPolytope, Rational, ValidationReport,
};
use crate::solver::{solve_nodes_with, NodeSolveProblem, NodeSolveResult, SolveOptions};
use crate::Result;

/// A polytope after the exact stage: extremal function, normalization, coefficients.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub original: PuncturedPolytope,
    pub normalized: PuncturedPolytope,
    pub affine: AffineFunction,
    pub extremal: ExtremalData,
    pub coefficients: ProfileCoefficients,
}

impl Prepared {
    pub fn new(pp: &PuncturedPolytope) -> Result<Self> {
        let affine = extremal_affine(pp)?;
        let (normalized, extremal) = normalize(pp, &affine)?;
        let coefficients = profile_coefficients(&extremal.eta, &normalized);
        Ok(Self {
            original: pp.clone(),
            normalized,
            affine,
            extremal,
            coefficients,
        })
    }

    pub fn eta(&self) -> &[Rational; 2] {
        &self.extremal.eta
    }

    pub fn edge_count(&self) -> usize {
        self.normalized.edge_count()
    }

    pub fn extremal_report(&self) -> ExtremalReport {
        ExtremalReport::new(&self.affine, &self.extremal, &self.normalized)
    }

    pub fn profile(&self, a: f64, nodes: &[f64]) -> Result<BoundaryProfile> {
        Ok(BoundaryProfile::new(
            a,
            self.coefficients.b_f64(),
            &self.coefficients.a_f64(),
            nodes,
        )?)
    }

    /// Kink positions used when none are given: the vertex-anchored positions,
    /// or unit spacing when those do not exist.
    pub fn default_nodes(&self) -> Vec<f64> {
        let n = self.edge_count().saturating_sub(1);
        match vertex_anchored_profile(&self.normalized, self.eta()) {
            Ok(p) if p.kinks.len() == n => p.nodes(),
            _ => (0..n).map(|i| i as f64).collect(),
        }
    }

    pub fn solve(&self, a: f64, opts: &SolveOptions) -> Result<NodeSolveResult> {
        let problem =
            NodeSolveProblem::from_polytope(self.normalized.clone(), self.eta().clone(), a)?;
        Ok(solve_nodes_with(&problem, opts)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodesSource {
    Given,
    Solved,
    Default,
}

/// Choose kink positions: explicit nodes, a solve against the polytope's
/// edge lengths, or [`Prepared::default_nodes`].
pub fn resolve_nodes(
    prepared: &Prepared,
    a: f64,
    nodes: Option<Vec<f64>>,
    solve: bool,
    config: &Config,
) -> Result<(Vec<f64>, NodesSource, Option<NodeSolveResult>)> {
    if let Some(nodes) = nodes {
        return Ok((nodes, NodesSource::Given, None));
    }
    if solve {
        let r = prepared.solve(a, &solve_options(config))?;
        return Ok((r.nodes.clone(), NodesSource::Solved, Some(r)));
    }
    Ok((prepared.default_nodes(), NodesSource::Default, None))
}

pub fn solve_options(config: &Config) -> SolveOptions {
    SolveOptions {
        tol: config.solver_tol,
        max_iter: config.solver_max_iter,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }

    fn flag(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            threshold: 1.0,
            passed: ok,
        }
    }

    fn positive(name: &str, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: 0.0,
            passed: value > 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTrend {
    pub z: f64,
    pub rho: Vec<f64>,
    pub residuals: Vec<f64>,
    pub strictly_decreasing: bool,
    /// Relative change of `residual * |log rho^2|` between the last two radii.
    pub stabilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub grid_points: usize,
    pub max_harmonic_residual: f64,
    pub max_fd_error: f64,
    pub max_cr_residual: f64,
    pub min_scal: f64,
    pub min_v: Option<f64>,
    pub max_u_zz: f64,
    pub boundary_limit: BoundaryTrend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub validation: ValidationReport,
    pub classification: Classification,
    pub extremal: Option<ExtremalReport>,
    pub vanishing_case: Option<VanishingCase>,
    pub profile: Option<BoundaryProfile>,
    pub nodes_source: Option<NodesSource>,
    pub admissibility: Option<AdmissibilityReport>,
    pub solver: Option<NodeSolveResult>,
    pub solver_error: Option<String>,
    pub volumes: Option<VolumeReport>,
    pub residuals: Option<ResidualSummary>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub a: f64,
    pub nodes: Option<Vec<f64>>,
    pub solve: bool,
    pub grid: Option<GridSpec>,
    pub config: Config,
}

/// Run every invariant suite on one polytope.
///
/// Invariant failures are recorded in the report; `Err` is reserved for
/// inputs the pipeline cannot process at all.
pub fn verify(pp: &PuncturedPolytope, opts: &VerifyOptions) -> Result<PipelineReport> {
    let validation = validate(pp.polygon());
    let classification = classify_family(pp);
    let mut report = PipelineReport {
        validation: validation.clone(),
        classification,
        extremal: None,
        vanishing_case: None,
        profile: None,
        nodes_source: None,
        admissibility: None,
        solver: None,
        solver_error: None,
        volumes: None,
        residuals: None,
        checks: vec![Check::flag("polytope.delzant", validation.passed)],
        passed: false,
    };
    if !validation.passed {
        return Ok(report);
    }
    let cfg = &opts.config;
    let prepared = Prepared::new(pp)?;
    let eta = prepared.eta().clone();
    let norm = &prepared.normalized;
    report.extremal = Some(prepared.extremal_report());
    report.checks.push(Check::flag(
        "polytope.defining_identity",
        defining_identity_holds(pp, &prepared.affine)?,
    ));
    report.checks.push(Check::flag(
        "polytope.normalized",
        prepared.extremal.normalized,
    ));

    let coeffs = &prepared.coefficients;
    let slopes = edge_slopes(&eta, norm);
    let sum_a = coeffs.sum_a();
    let telescoping = match (slopes.first(), slopes.last()) {
        (Some(first), Some(last)) => &coeffs.b - &sum_a == *first && &coeffs.b + &sum_a == *last,
        _ => false,
    };
    report
        .checks
        .push(Check::flag("boundary.telescoping", telescoping));
    let case = scal_vanishing_case(&eta, norm);
    report.vanishing_case = Some(case);
    if case == VanishingCase::AlongD {
        report.checks.push(Check::flag(
            "boundary.b_vanishes",
            num_traits::Zero::is_zero(&coeffs.b),
        ));
    }

    let (nodes, source, solved) =
        match resolve_nodes(&prepared, opts.a, opts.nodes.clone(), opts.solve, cfg) {
            Ok(r) => r,
            Err(e) => {
                report.solver_error = Some(e.to_string());
                report.checks.push(Check::flag("solver.converged", false));
                (prepared.default_nodes(), NodesSource::Default, None)
            }
        };
    if let Some(r) = &solved {
        report
            .checks
            .push(Check::flag("solver.converged", r.converged));
    }
    report.solver = solved;
    report.nodes_source = Some(source);
    let profile = prepared.profile(opts.a, &nodes)?;
    report.profile = Some(profile.clone());
    report.checks.push(Check::flag(
        "boundary.convexity_equivalence",
        profile.is_convex() == coefficients_convex(coeffs),
    ));
    let adm = admissibility(&profile);
    report
        .checks
        .push(Check::flag("boundary.admissible", adm.admissible));
    report.admissibility = Some(adm);

    let grid = match &opts.grid {
        Some(g) => g.clone(),
        None => centered_grid(&cfg.grid, &nodes),
    };
    let summary = residual_summary(&profile, &grid, cfg)?;
    report.checks.push(Check::at_most(
        "harmonic.residual",
        summary.max_harmonic_residual,
        cfg.harmonic_residual,
    ));
    report.checks.push(Check::at_most(
        "harmonic.fd_agreement",
        summary.max_fd_error,
        cfg.fd_agreement,
    ));
    report.checks.push(Check::at_most(
        "harmonic.conjugacy",
        summary.max_cr_residual,
        cfg.cr_residual,
    ));
    report.checks.push(Check::flag(
        "harmonic.boundary_limit",
        summary.boundary_limit.strictly_decreasing && summary.boundary_limit.stabilization < 0.05,
    ));
    if profile.total_weight() > 0.0 {
        report.checks.push(Check {
            name: "harmonic.u_zz_negative".into(),
            value: summary.max_u_zz,
            threshold: 0.0,
            passed: summary.max_u_zz < 0.0,
        });
    }
    report
        .checks
        .push(Check::positive("geometry.scal_positive", summary.min_scal));
    if let Some(v) = summary.min_v {
        report
            .checks
            .push(Check::positive("geometry.v_positive", v));
    }

    let volumes = divisor_volumes(&profile, norm, &eta)?;
    report.checks.push(Check::at_most(
        "geometry.volume_consistency",
        volume_consistency(&profile, &volumes)?,
        1e-12,
    ));
    report.volumes = Some(volumes);
    if let Ok(cal) = calibrate(&profile, norm, &eta) {
        let mut worst: f64 = 0.0;
        for (z, rho) in grid.points().into_iter().step_by(97) {
            let x = cal.reconstruct(&profile, z, rho)?;
            let s = scal(&profile, z, rho)?;
            let e = cal.eta;
            // the transverse part cancels in eta . x only up to rounding of its size
            let t = -e[1] * x[0] + e[0] * x[1];
            worst = worst
                .max(((e[0] * x[0] + e[1] * x[1]) - s).abs() / s.abs().max(t.abs()).max(1e-300));
        }
        report
            .checks
            .push(Check::at_most("geometry.moment_identity", worst, 1e-12));
    }

    if prepared.edge_count() >= 3 && solver_applicable(coeffs) {
        let err = round_trip_error(&prepared, opts.a, &nodes, cfg);
        report.checks.push(Check::at_most(
            "solver.round_trip",
            err.unwrap_or(f64::INFINITY),
            1e-8,
        ));
    }

    report.residuals = Some(summary);
    report.passed = report.checks.iter().all(|c| c.passed);
    Ok(report)
}

fn solver_applicable(c: &ProfileCoefficients) -> bool {
    coefficients_convex(c)
        && num_traits::Zero::is_zero(&c.b)
        && c.a.iter().any(num_traits::Signed::is_positive)
}

fn defining_identity_holds(pp: &PuncturedPolytope, af: &AffineFunction) -> Result<bool> {
    let g = moments(pp.polygon())?.gram();
    let b = boundary_moments(pp)?;
    let alpha = [&af.a0, &af.a1, &af.a2];
    let lhs: Vec<Rational> = g
        .iter()
        .map(|row| row.iter().zip(alpha).map(|(m, a)| m * a).sum())
        .collect();
    Ok(lhs == [b.b0, b.b1, b.b2])
}

fn centered_grid(base: &GridSpec, nodes: &[f64]) -> GridSpec {
    let mid = match (nodes.first(), nodes.last()) {
        (Some(a), Some(b)) => 0.5 * (a + b),
        _ => 0.0,
    };
    let mut g = base.clone();
    g.z_min += mid;
    g.z_max += mid;
    g
}

fn volume_consistency(profile: &BoundaryProfile, report: &VolumeReport) -> Result<f64> {
    let nodes = profile.nodes();
    let mut worst: f64 = 0.0;
    for e in report.edges.iter().filter(|e| e.compact) {
        let Some(v) = e.volume else { continue };
        let i = e.edge;
        let s0 = scal(profile, nodes[i - 2], 0.0)?;
        let s1 = scal(profile, nodes[i - 1], 0.0)?;
        let norm2 = (e.euclidean_length / e.lattice_length).powi(2);
        let alt = 2.0 * std::f64::consts::PI * norm2 / e.det * (s0 - s1);
        worst = worst.max((alt - v).abs() / v.abs().max(1.0));
    }
    Ok(worst)
}

fn round_trip_error(prepared: &Prepared, a: f64, nodes: &[f64], cfg: &Config) -> Option<f64> {
    let problem = NodeSolveProblem::from_nodes(
        prepared.normalized.clone(),
        prepared.eta().clone(),
        a,
        nodes,
    )
    .ok()?;
    let r = solve_nodes_with(&problem, &solve_options(cfg)).ok()?;
    Some(
        r.nodes
            .iter()
            .zip(nodes)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max),
    )
}

fn residual_summary(
    profile: &BoundaryProfile,
    grid: &GridSpec,
    cfg: &Config,
) -> Result<ResidualSummary> {
    grid.check()?;
    let rows = grid.map(|z, rho| -> Result<(f64, f64, f64, Option<f64>)> {
        let e = eval_partials(profile, z, rho)?;
        let s = scal(profile, z, rho)?;
        let v = if profile.kinks.is_empty() {
            None
        } else {
            Some(v_quantity(profile, z, rho)?)
        };
        Ok((e.harmonic_residual(rho), e.u_zz, s, v))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let max_harmonic_residual = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let max_u_zz = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let min_scal = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    let min_v = rows.iter().filter_map(|r| r.3).reduce(f64::min);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rho_lo = grid.rho_min.max(0.1).min(grid.rho_max);
    let mut max_fd_error: f64 = 0.0;
    let mut max_cr_residual: f64 = 0.0;
    for _ in 0..cfg.fd_points {
        let z = rng.gen_range(grid.z_min..=grid.z_max);
        let rho = rng.gen_range(rho_lo..=grid.rho_max);
        max_fd_error = max_fd_error.max(fd_error(profile, z, rho, cfg.fd_step)?);
        let rho_cr = rho.max(0.5);
        max_cr_residual = max_cr_residual.max(cr_residual(profile, z, rho_cr, cfg.cr_step)?);
    }

    let z_probe = profile.kinks.last().map_or(1.0, |k| k.z + 1.0);
    let rho: Vec<f64> = (2..=8).map(|k| 10f64.powi(-k)).collect();
    let residuals = boundary_limit_residual(profile, z_probe, &rho);
    let strictly_decreasing = residuals.windows(2).all(|w| w[1] < w[0]);
    let scaled: Vec<f64> = residuals
        .iter()
        .zip(&rho)
        .map(|(r, p)| r * (p * p).ln().abs())
        .collect();
    let n = scaled.len();
    let stabilization = if scaled[n - 1] == 0.0 && scaled[n - 2] == 0.0 {
        0.0
    } else {
        (scaled[n - 1] - scaled[n - 2]).abs() / scaled[n - 1].abs()
    };
    Ok(ResidualSummary {
        grid_points: rows.len(),
        max_harmonic_residual,
        max_fd_error,
        max_cr_residual,
        min_scal,
        min_v,
        max_u_zz,
        boundary_limit: BoundaryTrend {
            z: z_probe,
            rho,
            residuals,
            strictly_decreasing,
            stabilization,
        },
    })
}

/// Largest relative deviation of the closed-form partials from central differences.
pub fn fd_error(profile: &BoundaryProfile, z: f64, rho: f64, h: f64) -> Result<f64> {
    let e = eval_partials(profile, z, rho)?;
    let ezp = eval_partials(profile, z + h, rho)?;
    let ezm = eval_partials(profile, z - h, rho)?;
    let erp = eval_partials(profile, z, rho + h)?;
    let erm = eval_partials(profile, z, rho - h)?;
    let d = |p: f64, m: f64| (p - m) / (2.0 * h);
    let pairs = [
        (
            e.u_z,
            d(eval_u(profile, z + h, rho)?, eval_u(profile, z - h, rho)?),
        ),
        (
            e.u_rho,
            d(eval_u(profile, z, rho + h)?, eval_u(profile, z, rho - h)?),
        ),
        (e.u_zz, d(ezp.u_z, ezm.u_z)),
        (e.u_rhorho, d(erp.u_rho, erm.u_rho)),
        (e.u_rhoz, d(ezp.u_rho, ezm.u_rho)),
        (e.u_rhoz, d(erp.u_z, erm.u_z)),
    ];
    Ok(pairs
        .iter()
        .map(|(exact, fd)| (exact - fd).abs() / exact.abs().max(1.0))
        .fold(0.0, f64::max))
}

/// Conjugacy residuals of `H` from five-point differences, relative to `max(1, |.|)`.
pub fn cr_residual(profile: &BoundaryProfile, z: f64, rho: f64, h: f64) -> Result<f64> {
    let e = eval_partials(profile, z, rho)?;
    let five = |f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        Ok((-f(2.0 * h)? + 8.0 * f(h)? - 8.0 * f(-h)? + f(-2.0 * h)?) / (12.0 * h))
    };
    let h_z = five(&|t| Ok(eval_h(profile, z + t, rho)?))?;
    let h_rho = five(&|t| Ok(eval_h(profile, z, rho + t)?))?;
    let a = rho * e.u_rho;
    let b = -rho * e.u_z;
    Ok(((h_z - a).abs() / a.abs().max(1.0)).max((h_rho - b).abs() / b.abs().max(1.0)))
}
