//! Numerical tolerances and defaults, optionally read from a JSON file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::harmonic::GridSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Relative bound on `|U_rhorho + U_zz + U_rho/rho|`.
    pub harmonic_residual: f64,
    /// Relative agreement of closed-form partials with finite differences.
    pub fd_agreement: f64,
    /// Bound on the conjugacy residuals of `H`.
    pub cr_residual: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub fd_step: f64,
    pub cr_step: f64,
    pub fd_points: usize,
    pub seed: u64,
    pub grid: GridSpec,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            harmonic_residual: 1e-12,
            fd_agreement: 1e-6,
            cr_residual: 1e-10,
            solver_tol: 1e-10,
            solver_max_iter: 100,
            fd_step: 1e-5,
            cr_step: 1e-3,
            fd_points: 100,
            seed: 7,
            grid: GridSpec::default(),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Input(format!("config: {e}")))?;
        cfg.grid.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
