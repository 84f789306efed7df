//! Inverse problem: locate the kinks `z_1 < ... < z_{d-1}` of the boundary
//! profile from the euclidean lengths of the compact edges, for a given `A`.
//!
//! Each compact edge `E_i` contributes the equation
//! `pi |nu_i|^2 / det(eta, nu_i) (1/f(z_{i-1}) - 1/f(z_i)) = 2 pi l_i`.
//! A compact edge perpendicular to `eta` has no such equation; it is replaced
//! by the volume equation of the nearest non-compact edge, where
//! `1/f(-inf) = 1/f(+inf) = 0`.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::{profile_coefficients, BoundaryProfile};
use crate::geometry::{edge_limit_volume, edge_volume};
use crate::polytope::{to_f64, PolytopeError, PuncturedPolytope, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no convergence after {iterations} iterations (max residual {max_residual:e})")]
    NonConvergence {
        iterations: usize,
        max_residual: f64,
    },
    #[error("no ordered node configuration solves the volume equations")]
    OrderingViolation,
    #[error("nodes must be strictly increasing")]
    UnorderedNodes,
    #[error("expected {expected} nodes, got {got}")]
    WrongNodeCount { expected: usize, got: usize },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSolveProblem {
    pub pp: PuncturedPolytope,
    pub eta: [Rational; 2],
    pub a: f64,
    /// Euclidean lengths of the compact edges `E_2 .. E_{d-1}`.
    pub targets: Vec<f64>,
    /// Euclidean lengths of `E_1` and `E_d`; only used to replace the
    /// equation of a compact edge perpendicular to `eta`.
    pub end_targets: [f64; 2],
}

/// Which edge's volume equation stands in for compact edge `edge`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquationInfo {
    pub edge: usize,
    pub uses: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroppedEdge {
    pub edge: usize,
    pub predicted_volume: f64,
    pub target_volume: f64,
    pub mismatch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMethod {
    Trivial,
    Newton,
    Bisection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSolveResult {
    pub nodes: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub method: SolveMethod,
    pub equations: Vec<EquationInfo>,
    pub dropped: Vec<DroppedEdge>,
}

impl NodeSolveResult {
    pub fn max_residual(&self) -> f64 {
        max_abs(&self.residuals)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Per-edge data in `f64`, computed once per problem.
#[derive(Debug, Clone)]
struct SolveData {
    a: f64,
    b: f64,
    coeffs: Vec<f64>,
    norm2: Vec<f64>,
    det: Vec<f64>,
    perpendicular: Vec<bool>,
    lengths: Vec<f64>,
    plan: Vec<EquationInfo>,
}

impl SolveData {
    fn d(&self) -> usize {
        self.norm2.len()
    }

    fn profile(&self, nodes: &[f64]) -> BoundaryProfile {
        BoundaryProfile {
            a: self.a,
            b: self.b,
            kinks: nodes
                .iter()
                .zip(&self.coeffs)
                .map(|(&z, &a)| crate::boundary::Kink { z, a })
                .collect(),
        }
    }

    fn volume(&self, profile: &BoundaryProfile, edge: usize) -> Option<f64> {
        if self.perpendicular[edge - 1] {
            None
        } else {
            edge_volume(profile, edge, self.norm2[edge - 1], self.det[edge - 1])
        }
    }

    fn residuals(&self, nodes: &[f64]) -> Vec<f64> {
        let p = self.profile(nodes);
        self.plan
            .iter()
            .map(|eq| {
                let v = self.volume(&p, eq.uses).unwrap_or(f64::NAN);
                v - 2.0 * PI * self.lengths[eq.uses - 1]
            })
            .collect()
    }

    /// `d f(z_n) / d z_m` for 1-based node indices at ordered nodes.
    fn df_dnode(&self, n: usize, m: usize) -> f64 {
        if n == m {
            let below: f64 = self.coeffs[..m - 1].iter().sum();
            let above: f64 = self.coeffs[m..].iter().sum();
            self.b + below - above
        } else if n > m {
            -self.coeffs[m - 1]
        } else {
            self.coeffs[m - 1]
        }
    }

    /// Jacobian with respect to `z_2 .. z_{d-1}`.
    fn jacobian(&self, nodes: &[f64]) -> DMatrix<f64> {
        let p = self.profile(nodes);
        let k = self.plan.len();
        let d = self.d();
        let mut j = DMatrix::zeros(k, k);
        for (row, eq) in self.plan.iter().enumerate() {
            let i = eq.uses;
            let c = PI * self.norm2[i - 1] / self.det[i - 1];
            for col in 0..k {
                let m = col + 2;
                let dinv = |n: usize| {
                    if n == 0 || n == d {
                        0.0
                    } else {
                        let f = p.eval(nodes[n - 1]);
                        -self.df_dnode(n, m) / (f * f)
                    }
                };
                j[(row, col)] = c * (dinv(i - 1) - dinv(i));
            }
        }
        j
    }

    fn admissible_nodes(&self, nodes: &[f64]) -> bool {
        let ordered = nodes.windows(2).all(|w| w[1] > w[0]) && nodes.iter().all(|z| z.is_finite());
        if !ordered {
            return false;
        }
        let p = self.profile(nodes);
        nodes.iter().all(|&z| p.eval(z) > 0.0)
    }
}

fn plan_equations(perpendicular: &[bool]) -> Vec<EquationInfo> {
    let d = perpendicular.len();
    let mut used_ends = Vec::new();
    (2..d)
        .map(|edge| {
            if !perpendicular[edge - 1] {
                return EquationInfo { edge, uses: edge };
            }
            let mut ends = [(edge - 1, 1usize), (d - edge, d)];
            ends.sort();
            let uses = ends
                .iter()
                .map(|&(_, e)| e)
                .find(|e| !used_ends.contains(e) && !perpendicular[e - 1])
                .unwrap_or(ends[0].1);
            used_ends.push(uses);
            EquationInfo { edge, uses }
        })
        .collect()
}

impl NodeSolveProblem {
    /// Targets taken from the polytope's own edge lengths.
    pub fn from_polytope(
        pp: PuncturedPolytope,
        eta: [Rational; 2],
        a: f64,
    ) -> Result<Self, SolverError> {
        let edges = pp.edges()?;
        let d = edges.len();
        if d < 2 {
            return Err(SolverError::InvalidProblem(
                "fewer than two surviving edges".into(),
            ));
        }
        let targets = edges[1..d - 1].iter().map(|e| e.euclidean_length).collect();
        let end_targets = [edges[0].euclidean_length, edges[d - 1].euclidean_length];
        Ok(Self {
            pp,
            eta,
            a,
            targets,
            end_targets,
        })
    }

    /// Targets generated by the forward volume map at the given nodes.
    pub fn from_nodes(
        pp: PuncturedPolytope,
        eta: [Rational; 2],
        a: f64,
        nodes: &[f64],
    ) -> Result<Self, SolverError> {
        let mut problem = Self::from_polytope(pp, eta, a)?;
        let vols = forward_volumes(&problem, nodes)?;
        let d = vols.len();
        for (k, t) in problem.targets.iter_mut().enumerate() {
            if let Some(v) = vols[k + 1] {
                *t = v / (2.0 * PI);
            }
        }
        for (slot, idx) in [(0, 0), (1, d - 1)] {
            if let Some(v) = vols[idx] {
                problem.end_targets[slot] = v / (2.0 * PI);
            }
        }
        Ok(problem)
    }

    pub fn edge_count(&self) -> usize {
        self.pp.edge_count()
    }

    fn data(&self) -> Result<SolveData, SolverError> {
        let edges = self.pp.edges()?;
        let d = edges.len();
        if d < 2 {
            return Err(SolverError::InvalidProblem(
                "fewer than two surviving edges".into(),
            ));
        }
        if self.targets.len() != d - 2 {
            return Err(SolverError::InvalidProblem(format!(
                "{} compact edges but {} targets",
                d - 2,
                self.targets.len()
            )));
        }
        let c = profile_coefficients(&self.eta, &self.pp);
        let dets: Vec<Rational> = edges.iter().map(|e| e.normal.det_with(&self.eta)).collect();
        let perpendicular: Vec<bool> = dets.iter().map(Zero::is_zero).collect();
        let mut lengths = vec![self.end_targets[0]];
        lengths.extend(&self.targets);
        lengths.push(self.end_targets[1]);
        Ok(SolveData {
            a: self.a,
            b: c.b_f64(),
            coeffs: c.a_f64(),
            norm2: edges
                .iter()
                .map(|e| e.normal.norm_squared() as f64)
                .collect(),
            det: dets.iter().map(to_f64).collect(),
            plan: plan_equations(&perpendicular),
            perpendicular,
            lengths,
        })
    }

    fn check_admissible(&self, data: &SolveData) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidProblem(m));
        if !(self.a > 0.0) || !self.a.is_finite() {
            return bad(format!("A must be positive (got {})", self.a));
        }
        if self.targets.iter().any(|t| !(*t > 0.0)) {
            return bad("targets must be positive".into());
        }
        let c = profile_coefficients(&self.eta, &self.pp);
        if c.a.iter().any(Signed::is_negative) {
            return bad("kink coefficients must be nonnegative".into());
        }
        if !c.b.is_zero() {
            return bad("profile slope B must vanish".into());
        }
        for eq in &data.plan {
            if data.perpendicular[eq.uses - 1] {
                return bad(format!("no usable volume equation for edge {}", eq.edge));
            }
        }
        Ok(())
    }
}

fn check_nodes(problem: &NodeSolveProblem, nodes: &[f64]) -> Result<(), SolverError> {
    let expected = problem.edge_count().saturating_sub(1);
    if nodes.len() != expected {
        return Err(SolverError::WrongNodeCount {
            expected,
            got: nodes.len(),
        });
    }
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SolverError::UnorderedNodes);
    }
    Ok(())
}

/// Volumes of all `d` spheres at the given nodes; `None` where `det(eta, nu_i) = 0`.
pub fn forward_volumes(
    problem: &NodeSolveProblem,
    nodes: &[f64],
) -> Result<Vec<Option<f64>>, SolverError> {
    check_nodes(problem, nodes)?;
    let data = problem.data()?;
    let p = data.profile(nodes);
    Ok((1..=data.d()).map(|i| data.volume(&p, i)).collect())
}

/// One residual per compact edge, following the equation plan.
pub fn forward_residuals(
    problem: &NodeSolveProblem,
    nodes: &[f64],
) -> Result<Vec<f64>, SolverError> {
    check_nodes(problem, nodes)?;
    Ok(problem.data()?.residuals(nodes))
}

/// Equation plan: for each compact edge, the edge whose volume equation is used.
pub fn equation_plan(problem: &NodeSolveProblem) -> Result<Vec<EquationInfo>, SolverError> {
    Ok(problem.data()?.plan)
}

fn dropped_diagnostics(data: &SolveData, nodes: &[f64]) -> Vec<DroppedEdge> {
    let p = data.profile(nodes);
    data.plan
        .iter()
        .filter(|eq| eq.uses != eq.edge)
        .map(|eq| {
            let predicted =
                edge_limit_volume(&p, eq.edge, data.norm2[eq.edge - 1]).unwrap_or(f64::NAN);
            let target = 2.0 * PI * data.lengths[eq.edge - 1];
            DroppedEdge {
                edge: eq.edge,
                predicted_volume: predicted,
                target_volume: target,
                mismatch: predicted - target,
            }
        })
        .collect()
}

fn full_nodes(y: &[f64]) -> Vec<f64> {
    let mut nodes = Vec::with_capacity(y.len() + 1);
    nodes.push(0.0);
    nodes.extend_from_slice(y);
    nodes
}

enum NewtonOutcome {
    Converged,
    Stalled,
    Exhausted,
}

fn newton(
    data: &SolveData,
    y: &mut Vec<f64>,
    tol: f64,
    budget: usize,
    iterations: &mut usize,
) -> NewtonOutcome {
    let mut f = data.residuals(&full_nodes(y));
    let mut norm = max_abs(&f);
    loop {
        if norm <= tol {
            // A couple of extra full steps push the nodes to working precision.
            for _ in 0..2 {
                let Some(step) = newton_step(data, y, &f) else {
                    break;
                };
                let cand: Vec<f64> = y.iter().zip(&step).map(|(a, b)| a + b).collect();
                if !data.admissible_nodes(&full_nodes(&cand)) {
                    break;
                }
                let fc = data.residuals(&full_nodes(&cand));
                if max_abs(&fc) < norm {
                    *y = cand;
                    f = fc;
                    norm = max_abs(&f);
                } else {
                    break;
                }
            }
            return NewtonOutcome::Converged;
        }
        if *iterations >= budget {
            return NewtonOutcome::Exhausted;
        }
        *iterations += 1;
        let Some(step) = newton_step(data, y, &f) else {
            return NewtonOutcome::Stalled;
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = y.iter().zip(&step).map(|(a, b)| a + lambda * b).collect();
            if data.admissible_nodes(&full_nodes(&cand)) {
                let fc = data.residuals(&full_nodes(&cand));
                let nc = max_abs(&fc);
                if nc < norm {
                    *y = cand;
                    f = fc;
                    norm = nc;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return NewtonOutcome::Stalled;
        }
    }
}

fn newton_step(data: &SolveData, y: &[f64], f: &[f64]) -> Option<Vec<f64>> {
    let j = data.jacobian(&full_nodes(y));
    let rhs = -DVector::from_column_slice(f);
    let step = j.lu().solve(&rhs)?;
    step.iter()
        .all(|x| x.is_finite())
        .then(|| step.iter().copied().collect())
}

/// Bisection on `F_k` in `z_k` with the other nodes fixed. Returns false when
/// no sign change is bracketed inside the ordered region.
fn bisect_coordinate(data: &SolveData, y: &mut [f64], k: usize, scale: f64) -> bool {
    let lo = if k == 0 { 0.0 } else { y[k - 1] };
    let eval = |y: &mut [f64], z: f64| {
        let old = y[k];
        y[k] = z;
        let nodes = full_nodes(y);
        let r = if data.admissible_nodes(&nodes) {
            Some(data.residuals(&nodes)[k])
        } else {
            None
        };
        y[k] = old;
        r
    };
    let eps = 1e-12 * scale.max(1.0);
    let mut a = lo + eps;
    let mut hi = match y.get(k + 1) {
        Some(&next) => next - eps,
        None => lo + scale.max(1e-6),
    };
    let Some(mut fa) = eval(y, a) else {
        return false;
    };
    let mut fb = eval(y, hi);
    if y.get(k + 1).is_none() {
        let mut tries = 0;
        while matches!(fb, Some(v) if v.signum() == fa.signum()) && tries < 60 {
            hi = lo + 2.0 * (hi - lo);
            fb = eval(y, hi);
            tries += 1;
        }
    }
    let Some(fb) = fb else { return false };
    if fa.signum() == fb.signum() {
        return false;
    }
    let mut b = hi;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let Some(fm) = eval(y, m) else { return false };
        if fm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    y[k] = 0.5 * (a + b);
    true
}

pub fn solve_nodes(problem: &NodeSolveProblem) -> Result<NodeSolveResult, SolverError> {
    solve_nodes_with(problem, &SolveOptions::default())
}

pub fn solve_nodes_with(
    problem: &NodeSolveProblem,
    opts: &SolveOptions,
) -> Result<NodeSolveResult, SolverError> {
    let data = problem.data()?;
    problem.check_admissible(&data)?;
    let d = data.d();
    if d == 2 {
        return Ok(NodeSolveResult {
            nodes: vec![0.0],
            residuals: vec![],
            iterations: 0,
            converged: true,
            method: SolveMethod::Trivial,
            equations: vec![],
            dropped: vec![],
        });
    }
    let total_a: f64 = data.coeffs.iter().sum();
    if !(total_a > 0.0) {
        return Err(SolverError::InvalidProblem(
            "kink coefficients sum to zero".into(),
        ));
    }
    let mean: f64 = problem.targets.iter().sum::<f64>() / problem.targets.len() as f64;
    let unit = problem.a / total_a;
    let mut y = Vec::with_capacity(d - 2);
    let mut z = 0.0;
    for t in &problem.targets {
        z += unit * t / mean;
        y.push(z);
    }

    let mut iterations = 0;
    let mut method = SolveMethod::Newton;
    let mut outcome = newton(&data, &mut y, opts.tol, opts.max_iter, &mut iterations);
    if !matches!(outcome, NewtonOutcome::Converged) {
        method = SolveMethod::Bisection;
        let scale = unit * problem.targets.len() as f64;
        let mut sweeps = 0;
        while iterations < opts.max_iter && sweeps < opts.max_iter {
            sweeps += 1;
            iterations += 1;
            let mut any = false;
            for k in 0..y.len() {
                any |= bisect_coordinate(&data, &mut y, k, scale);
            }
            if !any {
                return Err(SolverError::OrderingViolation);
            }
            if max_abs(&data.residuals(&full_nodes(&y))) <= opts.tol.sqrt() {
                break;
            }
        }
        let budget = iterations + opts.max_iter;
        outcome = newton(&data, &mut y, opts.tol, budget, &mut iterations);
    }
    let nodes = full_nodes(&y);
    let residuals = data.residuals(&nodes);
    let converged = matches!(outcome, NewtonOutcome::Converged) && max_abs(&residuals) <= opts.tol;
    if !converged {
        return Err(SolverError::NonConvergence {
            iterations,
            max_residual: max_abs(&residuals),
        });
    }
    if !data.admissible_nodes(&nodes) {
        return Err(SolverError::OrderingViolation);
    }
    Ok(NodeSolveResult {
        dropped: dropped_diagnostics(&data, &nodes),
        equations: data.plan.clone(),
        nodes,
        residuals,
        iterations,
        converged,
        method,
    })
}

/// Solve the same problem for several values of `A`, in parallel.
pub fn sweep_a(
    problem: &NodeSolveProblem,
    values: &[f64],
) -> Vec<Result<NodeSolveResult, SolverError>> {
    values
        .par_iter()
        .map(|&a| {
            let mut p = problem.clone();
            p.a = a;
            solve_nodes(&p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessScan {
    pub points_per_axis: usize,
    pub upper: f64,
    pub flagged_cells: usize,
    /// Connected clusters of cells where every residual changes sign.
    pub roots: usize,
}

/// Sign-change scan of the residuals over the ordered box `0 < z_2 < ... <= upper`.
pub fn uniqueness_scan(
    problem: &NodeSolveProblem,
    upper: f64,
    n: usize,
) -> Result<UniquenessScan, SolverError> {
    let data = problem.data()?;
    let m = data.d().saturating_sub(2);
    if m == 0 {
        return Ok(UniquenessScan {
            points_per_axis: n,
            upper,
            flagged_cells: 0,
            roots: 0,
        });
    }
    if n < 2 || !(upper > 0.0) {
        return Err(SolverError::InvalidProblem(
            "scan needs n >= 2 and upper > 0".into(),
        ));
    }
    let coord = |i: usize| upper * (i + 1) as f64 / n as f64;
    let total = n.pow(m as u32);
    let unflatten = |mut idx: usize| {
        let mut out = vec![0usize; m];
        for slot in out.iter_mut().rev() {
            *slot = idx % n;
            idx /= n;
        }
        out
    };
    let flatten = |ix: &[usize]| ix.iter().fold(0usize, |acc, &i| acc * n + i);
    let values: Vec<Option<Vec<f64>>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let ix = unflatten(idx);
            let y: Vec<f64> = ix.iter().map(|&i| coord(i)).collect();
            let nodes = full_nodes(&y);
            data.admissible_nodes(&nodes)
                .then(|| data.residuals(&nodes))
        })
        .collect();

    let cells = (n - 1).pow(m as u32);
    let cell_index = |ix: &[usize]| ix.iter().fold(0usize, |acc, &i| acc * (n - 1) + i);
    let cell_unflatten = |mut idx: usize| {
        let mut out = vec![0usize; m];
        for slot in out.iter_mut().rev() {
            *slot = idx % (n - 1);
            idx /= n - 1;
        }
        out
    };
    let flagged: Vec<bool> = (0..cells)
        .map(|c| {
            let base = cell_unflatten(c);
            let mut lo = vec![false; m];
            let mut hi = vec![false; m];
            for bits in 0..(1usize << m) {
                let corner: Vec<usize> = (0..m).map(|k| base[k] + ((bits >> k) & 1)).collect();
                let Some(v) = &values[flatten(&corner)] else {
                    return false;
                };
                for (k, x) in v.iter().enumerate() {
                    lo[k] |= *x <= 0.0;
                    hi[k] |= *x >= 0.0;
                }
            }
            lo.iter().zip(&hi).all(|(a, b)| *a && *b)
        })
        .collect();

    let mut seen = vec![false; cells];
    let mut roots = 0;
    for start in 0..cells {
        if !flagged[start] || seen[start] {
            continue;
        }
        roots += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            let ix = cell_unflatten(c);
            for offs in 0..3usize.pow(m as u32) {
                let mut nb = ix.clone();
                let mut ok = true;
                let mut o = offs;
                for slot in nb.iter_mut() {
                    let delta = (o % 3) as isize - 1;
                    o /= 3;
                    let v = *slot as isize + delta;
                    if v < 0 || v >= (n - 1) as isize {
                        ok = false;
                        break;
                    }
                    *slot = v as usize;
                }
                if !ok {
                    continue;
                }
                let ci = cell_index(&nb);
                if flagged[ci] && !seen[ci] {
                    seen[ci] = true;
                    queue.push_back(ci);
                }
            }
        }
    }
    Ok(UniquenessScan {
        points_per_axis: n,
        upper,
        flagged_cells: flagged.iter().filter(|&&f| f).count(),
        roots,
    })
}
