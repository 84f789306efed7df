//! Metric quantities derived from the harmonic potential: scalar curvature,
//! the `V` quantity, the moment coordinate `mu`, divisor volumes and the
//! reconstruction of moment coordinates from `(z, rho)`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::{profile_coefficients, BoundaryProfile};
use crate::harmonic::{eval_partials, half_rho_u_rho, GridSpec, HarmonicError};
use crate::polytope::{rat, to_f64, PolytopeError, PuncturedPolytope, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("scalar curvature is singular at (z, rho) = ({z}, {rho})")]
    SingularScal { z: f64, rho: f64 },
    #[error("V is undefined for a profile without kinks")]
    Degenerate,
    #[error("rho U_rho vanishes at (z, rho) = ({z}, {rho})")]
    VanishingRhoURho { z: f64, rho: f64 },
    #[error("rho must be nonnegative (got {0})")]
    NegativeRho(f64),
    #[error("expected {expected} nodes, got {got}")]
    MissingNodes { expected: usize, got: usize },
    #[error("moment calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Harmonic(#[from] HarmonicError),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
}

/// `1 / (rho U_rho) = 1 / (2 (A + Bz + sum a_i r_i))`, finite at `rho = 0`.
pub fn scal(profile: &BoundaryProfile, z: f64, rho: f64) -> Result<f64, GeometryError> {
    if !(rho >= 0.0) {
        return Err(GeometryError::NegativeRho(rho));
    }
    let den = 2.0 * half_rho_u_rho(profile, z, rho);
    if den == 0.0 || !den.is_finite() {
        return Err(GeometryError::SingularScal { z, rho });
    }
    Ok(1.0 / den)
}

/// `V = -(rho U_rho + U_rho^2 U_zz / (U_rhoz^2 + U_zz^2))`.
///
/// For one kink of weight `a` at the origin this is `2A + 2A^2 / (a R)`,
/// which reduces to `1 + 2A/R` when `A = a = 1/2` and tends to `2A` at infinity.
pub fn v_quantity(profile: &BoundaryProfile, z: f64, rho: f64) -> Result<f64, GeometryError> {
    if profile.kinks.is_empty() {
        return Err(GeometryError::Degenerate);
    }
    let e = eval_partials(profile, z, rho)?;
    let den = e.u_rhoz * e.u_rhoz + e.u_zz * e.u_zz;
    if den == 0.0 {
        return Err(GeometryError::Degenerate);
    }
    Ok(-(rho * e.u_rho + e.u_rho * e.u_rho * e.u_zz / den))
}

/// `mu = 2 ((rho^2 U_z + 2H) / (rho U_rho) - z)`.
///
/// Shifting `H` by a constant `c` shifts `mu` by `4c / (rho U_rho)`.
pub fn mu(profile: &BoundaryProfile, z: f64, rho: f64) -> Result<f64, GeometryError> {
    let e = eval_partials(profile, z, rho)?;
    let den = rho * e.u_rho;
    if den == 0.0 || !den.is_finite() {
        return Err(GeometryError::VanishingRhoURho { z, rho });
    }
    Ok(2.0 * ((rho * rho * e.u_z + 2.0 * e.h) / den - z))
}

/// `H` restricted to `rho = 0`: `2Az + Bz^2 + sum a_i s_i |s_i|`.
fn h_boundary(profile: &BoundaryProfile, z: f64) -> f64 {
    2.0 * profile.a * z
        + profile.b * z * z
        + profile
            .kinks
            .iter()
            .map(|k| {
                let s = z - k.z;
                k.a * s * s.abs()
            })
            .sum::<f64>()
}

/// Limit of `mu` at `rho = 0`: `2 (H - z f) / f`.
pub fn mu_boundary(profile: &BoundaryProfile, z: f64) -> Result<f64, GeometryError> {
    let f = profile.eval(z);
    if f == 0.0 || !f.is_finite() {
        return Err(GeometryError::VanishingRhoURho { z, rho: 0.0 });
    }
    Ok(2.0 * (h_boundary(profile, z) - z * f) / f)
}

/// `mu` for `rho > 0`, its boundary limit at `rho = 0`.
pub fn mu_extended(profile: &BoundaryProfile, z: f64, rho: f64) -> Result<f64, GeometryError> {
    if rho == 0.0 {
        mu_boundary(profile, z)
    } else {
        mu(profile, z, rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VolumeStatus {
    Computed,
    FormulaInapplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeVolume {
    /// 1-based surviving edge index.
    pub edge: usize,
    pub input_index: usize,
    pub compact: bool,
    pub det: f64,
    pub status: VolumeStatus,
    pub volume: Option<f64>,
    /// `pi |nu|^2 (z_i - z_{i-1}) / (f(z_{i-1}) f(z_i))`, the same quantity
    /// written without `det`; only finite for compact edges.
    pub limit_volume: Option<f64>,
    pub euclidean_length: f64,
    pub lattice_length: f64,
    /// `2 pi` times the euclidean length.
    pub target: f64,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub edges: Vec<EdgeVolume>,
    /// Largest `|volume - target|` over compact edges with a computed volume.
    pub max_compact_residual: f64,
}

/// `1/f` at node `i` in `0..=d`, with `1/f(-inf) = 1/f(+inf) = 0` at the ends.
fn inv_f_at(profile: &BoundaryProfile, i: usize) -> Option<f64> {
    if i == 0 || i > profile.kinks.len() {
        None
    } else {
        Some(1.0 / profile.eval(profile.kinks[i - 1].z))
    }
}

/// Volume of the sphere over edge `i` (1-based), or `None` when `det = 0`.
pub(crate) fn edge_volume(
    profile: &BoundaryProfile,
    i: usize,
    norm2: f64,
    det: f64,
) -> Option<f64> {
    if det == 0.0 {
        return None;
    }
    let lo = inv_f_at(profile, i - 1).unwrap_or(0.0);
    let hi = inv_f_at(profile, i).unwrap_or(0.0);
    Some(PI * norm2 / det * (lo - hi))
}

pub(crate) fn edge_limit_volume(profile: &BoundaryProfile, i: usize, norm2: f64) -> Option<f64> {
    let d = profile.kinks.len() + 1;
    if i <= 1 || i >= d {
        return None;
    }
    let (z0, z1) = (profile.kinks[i - 2].z, profile.kinks[i - 1].z);
    Some(PI * norm2 * (z1 - z0) / (profile.eval(z0) * profile.eval(z1)))
}

pub fn divisor_volumes(
    profile: &BoundaryProfile,
    pp: &PuncturedPolytope,
    eta: &[Rational; 2],
) -> Result<VolumeReport, GeometryError> {
    let edges = pp.edges()?;
    let d = edges.len();
    if profile.kinks.len() + 1 != d {
        return Err(GeometryError::MissingNodes {
            expected: d.saturating_sub(1),
            got: profile.kinks.len(),
        });
    }
    let mut out = Vec::with_capacity(d);
    for (k, e) in edges.iter().enumerate() {
        let i = k + 1;
        let det_exact = e.normal.det_with(eta);
        let det = to_f64(&det_exact);
        let norm2 = e.normal.norm_squared() as f64;
        let compact = i > 1 && i < d;
        let volume = if det_exact.is_zero() {
            None
        } else {
            edge_volume(profile, i, norm2, det)
        };
        let target = 2.0 * PI * e.euclidean_length;
        out.push(EdgeVolume {
            edge: i,
            input_index: e.input_index,
            compact,
            det,
            status: if volume.is_some() {
                VolumeStatus::Computed
            } else {
                VolumeStatus::FormulaInapplicable
            },
            volume,
            limit_volume: edge_limit_volume(profile, i, norm2),
            euclidean_length: e.euclidean_length,
            lattice_length: to_f64(&e.lattice_length),
            target,
            residual: volume.map(|v| v - target),
        });
    }
    let max_compact_residual = out
        .iter()
        .filter(|e| e.compact)
        .filter_map(|e| e.residual)
        .fold(0.0_f64, |m, r| m.max(r.abs()));
    Ok(VolumeReport {
        edges: out,
        max_compact_residual,
    })
}

/// Affine map from `(scal, mu)` to moment coordinates: `eta . x = scal` and
/// `eta_perp . x = scale * mu + scal_coeff * scal + offset`, with
/// `eta_perp = (-eta_2, eta_1)`. The `scal_coeff` term absorbs the free
/// additive constant of `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCalibration {
    pub eta: [f64; 2],
    pub scale: f64,
    pub scal_coeff: f64,
    pub offset: f64,
    /// Root-mean-square mismatch of the transverse coordinate over all anchors.
    pub residual: f64,
    pub anchors: usize,
}

impl MomentCalibration {
    pub fn point(&self, scal: f64, mu: f64) -> [f64; 2] {
        let [e1, e2] = self.eta;
        let n2 = e1 * e1 + e2 * e2;
        let t = self.scale * mu + self.scal_coeff * scal + self.offset;
        [(scal * e1 - t * e2) / n2, (scal * e2 + t * e1) / n2]
    }

    /// Moment coordinates at `(z, rho)`, `rho >= 0`.
    pub fn reconstruct(
        &self,
        profile: &BoundaryProfile,
        z: f64,
        rho: f64,
    ) -> Result<[f64; 2], GeometryError> {
        let s = scal(profile, z, rho)?;
        let m = mu_extended(profile, z, rho)?;
        Ok(self.point(s, m))
    }
}

/// Sample points of segment `seg` (0-based) of a profile with kinks `nodes`.
fn segment_samples(nodes: &[f64], seg: usize) -> Vec<f64> {
    let n = nodes.len();
    let span = (nodes[n - 1] - nodes[0]).max(1e-3);
    if seg == 0 {
        [0.25, 1.0, 4.0]
            .iter()
            .map(|k| nodes[0] - k * span)
            .collect()
    } else if seg == n {
        [0.25, 1.0, 4.0]
            .iter()
            .map(|k| nodes[n - 1] + k * span)
            .collect()
    } else {
        let (a, b) = (nodes[seg - 1], nodes[seg]);
        [0.25, 0.5, 0.75].iter().map(|k| a + k * (b - a)).collect()
    }
}

/// Fit `(scale, scal_coeff, offset)`. The kink points `(z_i, 0)` are matched
/// to the vertices `E_i cap E_{i+1}` (least squares once there are more than
/// three). Directions the vertices leave free are fixed by asking the boundary
/// points of segment `i` to land on the line of `E_i`; edges parallel to `eta`
/// carry no transverse information and are skipped.
pub fn calibrate(
    profile: &BoundaryProfile,
    pp: &PuncturedPolytope,
    eta: &[Rational; 2],
) -> Result<MomentCalibration, GeometryError> {
    let e = [to_f64(&eta[0]), to_f64(&eta[1])];
    if e == [0.0, 0.0] {
        return Err(GeometryError::Calibration(
            "extremal vector vanishes".into(),
        ));
    }
    let n2 = e[0] * e[0] + e[1] * e[1];
    let edges = pp.edges()?;
    if edges.len() != profile.kinks.len() + 1 {
        return Err(GeometryError::MissingNodes {
            expected: edges.len().saturating_sub(1),
            got: profile.kinks.len(),
        });
    }
    if profile.kinks.is_empty() {
        return Err(GeometryError::Calibration("no kink anchors".into()));
    }
    let nodes = profile.nodes();
    let row = |z: f64| -> Result<[f64; 3], GeometryError> {
        Ok([mu_boundary(profile, z)?, 1.0 / (2.0 * profile.eval(z)), 1.0])
    };
    let mut anchors: Vec<([f64; 3], f64)> = Vec::new();
    for (i, &z) in nodes.iter().enumerate() {
        let [x1, x2] = edges[i].end.to_f64();
        anchors.push((row(z)?, -e[1] * x1 + e[0] * x2));
    }
    let mut lines: Vec<([f64; 3], f64)> = Vec::new();
    for (seg, edge) in edges.iter().enumerate() {
        let nu = [edge.normal.u1 as f64, edge.normal.u2 as f64];
        let w = -nu[0] * e[1] + nu[1] * e[0];
        if w.abs() < 1e-12 {
            continue;
        }
        let nu_eta = nu[0] * e[0] + nu[1] * e[1];
        let [p1, p2] = edge.start.to_f64();
        let lambda = nu[0] * p1 + nu[1] * p2;
        for z in segment_samples(&nodes, seg) {
            let r = row(z)?;
            lines.push((r, (lambda * n2 - nu_eta * r[1]) / w));
        }
    }
    let matrix = |rows: &[([f64; 3], f64)]| {
        (
            DMatrix::from_fn(rows.len(), 3, |i, j| rows[i].0[j]),
            DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1)),
        )
    };
    let (c, t) = matrix(&anchors);
    let svd = c.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax.max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank == 0 {
        return Err(GeometryError::Calibration(
            "kink anchors are degenerate".into(),
        ));
    }
    let mut fit = svd
        .solve(&t, tol)
        .map_err(|e| GeometryError::Calibration(e.to_string()))?;
    if rank < 3 {
        // free directions: the kernel of the anchor rows
        let eig = (c.transpose() * &c).symmetric_eigen();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let null = DMatrix::from_fn(3, 3 - rank, |i, k| eig.eigenvectors[(i, order[k])]);
        let (l, r) = matrix(&lines);
        if l.nrows() < 3 - rank {
            return Err(GeometryError::Calibration(
                "boundary edges do not fix the transverse map".into(),
            ));
        }
        let reduced = &l * &null;
        let rsvd = reduced.clone().svd(true, true);
        if rsvd.singular_values.min() <= 1e-10 * rsvd.singular_values.max() {
            return Err(GeometryError::Calibration(
                "boundary edges do not fix the transverse map".into(),
            ));
        }
        let y = rsvd
            .solve(&(r - &l * &fit), 0.0)
            .map_err(|e| GeometryError::Calibration(e.to_string()))?;
        fit += &null * y;
    }
    let (all, rhs) = matrix(&[anchors.as_slice(), lines.as_slice()].concat());
    let residual = ((&all * &fit - &rhs).norm_squared() / all.nrows() as f64).sqrt();
    Ok(MomentCalibration {
        eta: e,
        scale: fit[0],
        scal_coeff: fit[1],
        offset: fit[2],
        residual,
        anchors: all.nrows(),
    })
}

pub fn reconstruct_moment_coords(
    profile: &BoundaryProfile,
    pp: &PuncturedPolytope,
    eta: &[Rational; 2],
    z: f64,
    rho: f64,
) -> Result<[f64; 2], GeometryError> {
    calibrate(profile, pp, eta)?.reconstruct(profile, z, rho)
}

/// The profile whose boundary values reproduce the polytope exactly:
/// `f(z_i) = 1 / (2 eta . v_i)` at every vertex, node gaps
/// `l_i / (2 s_{i-1} s_i)` from the lattice lengths, gauge `z_1 = 0`.
///
/// This pins `A` from the polytope alone and serves as a diagnostic.
pub fn vertex_anchored_profile(
    pp: &PuncturedPolytope,
    eta: &[Rational; 2],
) -> Result<BoundaryProfile, GeometryError> {
    let verts = pp.interior_vertices()?;
    let edges = pp.edges()?;
    let s: Vec<Rational> = verts
        .iter()
        .map(|v| &eta[0] * &v.x1 + &eta[1] * &v.x2)
        .collect();
    if let Some(bad) = s.iter().position(|x| !x.is_positive()) {
        return Err(GeometryError::Calibration(format!(
            "scalar curvature is not positive at vertex {}",
            bad + 1
        )));
    }
    let mut nodes = vec![Rational::zero()];
    for i in 1..s.len() {
        let gap = &edges[i].lattice_length / (rat(2) * &s[i - 1] * &s[i]);
        let next = &nodes[i - 1] + gap;
        nodes.push(next);
    }
    let c = profile_coefficients(eta, pp);
    let f1 = rat(1) / (rat(2) * &s[0]);
    let spread =
        c.a.iter()
            .zip(&nodes)
            .fold(Rational::zero(), |acc, (a, z)| acc + a * z);
    let a = f1 - spread;
    let nodes_f: Vec<f64> = nodes.iter().map(to_f64).collect();
    BoundaryProfile::new(to_f64(&a), c.b_f64(), &c.a_f64(), &nodes_f)
        .map_err(|e| GeometryError::Calibration(e.to_string()))
}

/// One row of the metrics grid CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub z: f64,
    pub rho: f64,
    pub scal: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub mu: f64,
    pub x1: Option<f64>,
    pub x2: Option<f64>,
}

pub const METRICS_HEADER: &str = "z,rho,scal,V,mu,x1,x2";

pub fn point_metrics(
    profile: &BoundaryProfile,
    calibration: Option<&MomentCalibration>,
    z: f64,
    rho: f64,
) -> Result<PointMetrics, GeometryError> {
    let s = scal(profile, z, rho)?;
    let m = mu(profile, z, rho)?;
    let v = v_quantity(profile, z, rho)?;
    let x = calibration.map(|c| c.point(s, m));
    Ok(PointMetrics {
        z,
        rho,
        scal: s,
        v,
        mu: m,
        x1: x.map(|p| p[0]),
        x2: x.map(|p| p[1]),
    })
}

pub fn sample_metrics(
    profile: &BoundaryProfile,
    calibration: Option<&MomentCalibration>,
    grid: &GridSpec,
) -> Result<Vec<PointMetrics>, GeometryError> {
    grid.check()?;
    grid.map(|z, rho| point_metrics(profile, calibration, z, rho))
        .into_iter()
        .collect()
}

pub fn write_metrics_csv<W: Write>(out: W, rows: &[PointMetrics]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(METRICS_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
