//! Closed-form axi-symmetric harmonic function `U` of a boundary profile,
//! its partial derivatives and its harmonic conjugate `H`.
//!
//! With `s = z - z_i`, `r = sqrt(rho^2 + s^2)` and `L = log((r + s) / rho)`:
//!
//! ```text
//! U = 2 sum a_i (r - s L) + (A + Bz) log rho^2
//! H = 2Az + Bz^2 - (B/2) rho^2 (log rho^2 - 1) + sum a_i (s r + rho^2 L)
//! ```
//!
//! `U_rhorho + U_rho/rho + U_zz = 0` holds identically and `H_z = rho U_rho`,
//! `H_rho = -rho U_z`.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::BoundaryProfile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarmonicError {
    #[error("rho must be positive (got {0})")]
    NonPositiveRho(f64),
    #[error("finite-difference step {step} does not fit below rho = {rho}")]
    StepTooLarge { step: f64, rho: f64 },
    #[error("dimension must be 3 or 5 (got {0})")]
    InvalidDimension(u32),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// `log((r + s) / rho)` without cancellation for either sign of `s`.
pub(crate) fn log_ratio(s: f64, r: f64, rho: f64) -> f64 {
    // (r + |s|)/rho = 1 + (|s| + s^2/(r + rho))/rho
    let v = ((s.abs() + s * s / (r + rho)) / rho).ln_1p();
    if s < 0.0 {
        -v
    } else {
        v
    }
}

fn check_rho(rho: f64) -> Result<(), HarmonicError> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(HarmonicError::NonPositiveRho(rho))
    }
}

/// `A + Bz + sum a_i r_i`, which equals `rho U_rho / 2`. Finite at `rho = 0`.
pub fn half_rho_u_rho(profile: &BoundaryProfile, z: f64, rho: f64) -> f64 {
    profile.a
        + profile.b * z
        + profile
            .kinks
            .iter()
            .map(|k| k.a * (z - k.z).hypot(rho))
            .sum::<f64>()
}

pub fn eval_u(profile: &BoundaryProfile, z: f64, rho: f64) -> Result<f64, HarmonicError> {
    check_rho(rho)?;
    let sum: f64 = profile
        .kinks
        .iter()
        .map(|k| {
            let s = z - k.z;
            let r = s.hypot(rho);
            k.a * (r - s * log_ratio(s, r, rho))
        })
        .sum();
    Ok(2.0 * sum + (profile.a + profile.b * z) * (rho * rho).ln())
}

pub fn eval_h(profile: &BoundaryProfile, z: f64, rho: f64) -> Result<f64, HarmonicError> {
    check_rho(rho)?;
    let rho2 = rho * rho;
    let sum: f64 = profile
        .kinks
        .iter()
        .map(|k| {
            let s = z - k.z;
            let r = s.hypot(rho);
            k.a * (s * r + rho2 * log_ratio(s, r, rho))
        })
        .sum();
    Ok(2.0 * profile.a * z + profile.b * z * z - 0.5 * profile.b * rho2 * (rho2.ln() - 1.0) + sum)
}

/// `U`, its first and second partials and `H` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicEval {
    pub u: f64,
    pub u_z: f64,
    pub u_rho: f64,
    pub u_zz: f64,
    pub u_rhorho: f64,
    pub u_rhoz: f64,
    pub h: f64,
}

impl HarmonicEval {
    /// `|U_rhorho + U_zz + U_rho/rho|` relative to the sum of the magnitudes.
    pub fn harmonic_residual(&self, rho: f64) -> f64 {
        let t = [self.u_rhorho, self.u_zz, self.u_rho / rho];
        let scale: f64 = t.iter().map(|x| x.abs()).sum();
        let res = (t[0] + t[1] + t[2]).abs();
        if scale == 0.0 {
            res
        } else {
            res / scale
        }
    }
}

pub fn eval_partials(
    profile: &BoundaryProfile,
    z: f64,
    rho: f64,
) -> Result<HarmonicEval, HarmonicError> {
    check_rho(rho)?;
    let rho2 = rho * rho;
    let log_rho2 = rho2.ln();
    let lin = profile.a + profile.b * z;
    let (mut u, mut h) = (0.0, 0.0);
    let (mut sum_r, mut sum_l, mut sum_inv_r, mut sum_s_r, mut sum_s2_r) =
        (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in &profile.kinks {
        let s = z - k.z;
        let r = s.hypot(rho);
        let l = log_ratio(s, r, rho);
        u += k.a * (r - s * l);
        h += k.a * (s * r + rho2 * l);
        sum_r += k.a * r;
        sum_l += k.a * l;
        sum_inv_r += k.a / r;
        sum_s_r += k.a * s / r;
        sum_s2_r += k.a * s * s / r;
    }
    Ok(HarmonicEval {
        u: 2.0 * u + lin * log_rho2,
        u_z: -2.0 * sum_l + profile.b * log_rho2,
        u_rho: 2.0 * (lin + sum_r) / rho,
        u_zz: -2.0 * sum_inv_r,
        u_rhorho: -2.0 * sum_s2_r / rho2 - 2.0 * lin / rho2,
        u_rhoz: 2.0 * (sum_s_r + profile.b) / rho,
        h: 2.0 * profile.a * z + profile.b * z * z - 0.5 * profile.b * rho2 * (log_rho2 - 1.0) + h,
    })
}

/// `|U(z, rho) / log(rho^2) - f(z)|` along a sequence of radii.
///
/// The error decays like `1/|log rho|`. Non-positive radii give `NaN`.
pub fn boundary_limit_residual(profile: &BoundaryProfile, z: f64, rho_seq: &[f64]) -> Vec<f64> {
    let f = profile.eval(z);
    rho_seq
        .iter()
        .map(|&rho| match eval_u(profile, z, rho) {
            Ok(u) => (u / (rho * rho).ln() - f).abs(),
            Err(_) => f64::NAN,
        })
        .collect()
}

/// Central-difference `g_rhorho + g_zz + (dim - 2) g_rho / rho`.
pub fn axisym_laplacian<F>(
    dim: u32,
    g: F,
    z: f64,
    rho: f64,
    step: f64,
) -> Result<f64, HarmonicError>
where
    F: Fn(f64, f64) -> f64,
{
    if dim != 3 && dim != 5 {
        return Err(HarmonicError::InvalidDimension(dim));
    }
    if !(step > 0.0 && rho - step > 0.0) {
        return Err(HarmonicError::StepTooLarge { step, rho });
    }
    let c = g(z, rho);
    let (rp, rm) = (g(z, rho + step), g(z, rho - step));
    let (zp, zm) = (g(z + step, rho), g(z - step, rho));
    let h2 = step * step;
    let g_rr = (rp - 2.0 * c + rm) / h2;
    let g_zz = (zp - 2.0 * c + zm) / h2;
    let g_r = (rp - rm) / (2.0 * step);
    Ok(g_rr + g_zz + f64::from(dim - 2) * g_r / rho)
}

/// Rectangular sampling grid in `(z, rho)`, optionally log-spaced in `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub z_min: f64,
    pub z_max: f64,
    pub nz: usize,
    pub rho_min: f64,
    pub rho_max: f64,
    pub nrho: usize,
    #[serde(default)]
    pub log_rho: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            z_min: -5.0,
            z_max: 5.0,
            nz: 101,
            rho_min: 0.01,
            rho_max: 10.0,
            nrho: 101,
            log_rho: false,
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

impl GridSpec {
    pub fn new(
        z: (f64, f64, usize),
        rho: (f64, f64, usize),
        log_rho: bool,
    ) -> Result<Self, HarmonicError> {
        let g = Self {
            z_min: z.0,
            z_max: z.1,
            nz: z.2,
            rho_min: rho.0,
            rho_max: rho.1,
            nrho: rho.2,
            log_rho,
        };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<(), HarmonicError> {
        let bad = |m: &str| Err(HarmonicError::InvalidGrid(m.to_string()));
        if self.nz < 2 || self.nrho < 2 {
            return bad("counts must be at least 2");
        }
        if !(self.rho_min > 0.0) {
            return bad("rho_min must be positive");
        }
        if !(self.z_max > self.z_min && self.rho_max > self.rho_min) {
            return bad("ranges must be increasing");
        }
        if ![self.z_min, self.z_max, self.rho_max]
            .iter()
            .all(|x| x.is_finite())
        {
            return bad("bounds must be finite");
        }
        Ok(())
    }

    pub fn z_values(&self) -> Vec<f64> {
        linspace(self.z_min, self.z_max, self.nz)
    }

    pub fn rho_values(&self) -> Vec<f64> {
        if self.log_rho {
            linspace(self.rho_min.ln(), self.rho_max.ln(), self.nrho)
                .into_iter()
                .map(f64::exp)
                .collect()
        } else {
            linspace(self.rho_min, self.rho_max, self.nrho)
        }
    }

    /// Points in row-major order: `rho` outer, `z` inner.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let zs = self.z_values();
        self.rho_values()
            .into_iter()
            .flat_map(|rho| zs.iter().map(move |&z| (z, rho)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nz * self.nrho
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Evaluate `g` at every grid point in parallel, keeping row-major order.
    pub fn map<T, F>(&self, g: F) -> Vec<T>
    where
        T: Send,
        F: Fn(f64, f64) -> T + Sync,
    {
        let zs = self.z_values();
        self.rho_values()
            .into_par_iter()
            .flat_map_iter(|rho| zs.iter().map(|&z| g(z, rho)).collect::<Vec<_>>())
            .collect()
    }
}

fn parse_range(s: &str) -> Result<(f64, f64, usize, bool), HarmonicError> {
    let err = || HarmonicError::InvalidGrid(format!("bad range `{s}` (expected lo:hi:n)"));
    let parts: Vec<&str> = s.split(':').collect();
    let (body, log) = match parts.as_slice() {
        [lo, hi, n] => ([*lo, *hi, *n], false),
        [lo, hi, n, "log"] => ([*lo, *hi, *n], true),
        _ => return Err(err()),
    };
    let lo = body[0].trim().parse().map_err(|_| err())?;
    let hi = body[1].trim().parse().map_err(|_| err())?;
    let n = body[2].trim().parse().map_err(|_| err())?;
    Ok((lo, hi, n, log))
}

/// Parses `z=lo:hi:n,rho=lo:hi:n`; append `:log` to the `rho` range for log spacing.
impl FromStr for GridSpec {
    type Err = HarmonicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (mut z, mut rho) = (None, None);
        for part in s.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| HarmonicError::InvalidGrid(format!("missing `=` in `{part}`")))?;
            match key.trim() {
                "z" => z = Some(parse_range(value)?),
                "rho" => rho = Some(parse_range(value)?),
                other => {
                    return Err(HarmonicError::InvalidGrid(format!(
                        "unknown axis `{other}`"
                    )))
                }
            }
        }
        let missing = |a: &str| HarmonicError::InvalidGrid(format!("missing `{a}` range"));
        let z = z.ok_or_else(|| missing("z"))?;
        let rho = rho.ok_or_else(|| missing("rho"))?;
        if z.3 {
            return Err(HarmonicError::InvalidGrid(
                "log spacing is only supported for rho".into(),
            ));
        }
        Self::new((z.0, z.1, z.2), (rho.0, rho.1, rho.2), rho.3)
    }
}

/// One row of the harmonic grid CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSample {
    pub z: f64,
    pub rho: f64,
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(rename = "Uz")]
    pub u_z: f64,
    #[serde(rename = "Urho")]
    pub u_rho: f64,
    #[serde(rename = "Uzz")]
    pub u_zz: f64,
    #[serde(rename = "Urhorho")]
    pub u_rhorho: f64,
    #[serde(rename = "Urhoz")]
    pub u_rhoz: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

impl GridSample {
    pub fn new(z: f64, rho: f64, e: &HarmonicEval) -> Self {
        Self {
            z,
            rho,
            u: e.u,
            u_z: e.u_z,
            u_rho: e.u_rho,
            u_zz: e.u_zz,
            u_rhorho: e.u_rhorho,
            u_rhoz: e.u_rhoz,
            h: e.h,
        }
    }
}

pub const GRID_HEADER: &str = "z,rho,U,Uz,Urho,Uzz,Urhorho,Urhoz,H";

pub fn sample_grid(
    profile: &BoundaryProfile,
    grid: &GridSpec,
) -> Result<Vec<GridSample>, HarmonicError> {
    grid.check()?;
    grid.map(|z, rho| eval_partials(profile, z, rho).map(|e| GridSample::new(z, rho, &e)))
        .into_iter()
        .collect()
}

pub fn write_grid_csv<W: Write>(out: W, samples: &[GridSample]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if samples.is_empty() {
        w.write_record(GRID_HEADER.split(','))?;
    }
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// `gamma = (U1_rho - U2_rho) / rho` over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub max_abs_gamma: f64,
    /// Largest 5D axi-symmetric Laplacian of `gamma`, relative to its terms.
    pub max_laplacian_residual: f64,
    /// Largest `|gamma| rho^2 / R`.
    pub max_decay_ratio: f64,
    pub points: usize,
}

pub fn gamma(p1: &BoundaryProfile, p2: &BoundaryProfile, z: f64, rho: f64) -> f64 {
    2.0 * (half_rho_u_rho(p1, z, rho) - half_rho_u_rho(p2, z, rho)) / (rho * rho)
}

pub fn compare_profiles(
    p1: &BoundaryProfile,
    p2: &BoundaryProfile,
    grid: &GridSpec,
) -> Result<GammaReport, HarmonicError> {
    grid.check()?;
    let g = |z: f64, rho: f64| gamma(p1, p2, z, rho);
    let rows = grid.map(|z, rho| {
        let v = g(z, rho);
        let step = (1e-3 * rho.max(1.0)).min(0.5 * rho);
        let h2 = step * step;
        let (rp, rm) = (g(z, rho + step), g(z, rho - step));
        let (zp, zm) = (g(z + step, rho), g(z - step, rho));
        let terms = [
            (rp - 2.0 * v + rm) / h2,
            (zp - 2.0 * v + zm) / h2,
            3.0 * (rp - rm) / (2.0 * step * rho),
        ];
        let scale: f64 = terms.iter().map(|t| t.abs()).sum();
        let lap = (terms[0] + terms[1] + terms[2]).abs();
        let rel = if scale == 0.0 { lap } else { lap / scale };
        let r = z.hypot(rho);
        (v.abs(), rel, v.abs() * rho * rho / r)
    });
    let fold = |i: usize| {
        rows.iter()
            .map(|t| [t.0, t.1, t.2][i])
            .fold(0.0_f64, f64::max)
    };
    Ok(GammaReport {
        max_abs_gamma: fold(0),
        max_laplacian_residual: fold(1),
        max_decay_ratio: fold(2),
        points: rows.len(),
    })
}
