//! `bgtoric`: run the polytope-to-harmonic-function pipeline from the shell.
//!
//! Exit codes: 0 on success, 1 when an invariant fails, 2 on bad input.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use bgtoric::boundary::{admissibility, classify_family};
use bgtoric::geometry::{calibrate, divisor_volumes, sample_metrics, write_metrics_csv};
use bgtoric::harmonic::{sample_grid, write_grid_csv, GridSpec};
use bgtoric::io::{parse_nodes, parse_polytope, SolveRequest};
use bgtoric::pipeline::{resolve_nodes, solve_options, verify, Prepared, VerifyOptions};
use bgtoric::polytope::{validate, ValidationReport};
use bgtoric::solver::{solve_nodes_with, NodeSolveProblem, SolverError};
use bgtoric::{fixtures, Config, PuncturedPolytope};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "bgtoric",
    version,
    about = "Toric polygons to axi-symmetric harmonic functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the Delzant conditions.
    Validate(Common),
    /// Extremal affine function and the normalized polytope.
    Extremal(Common),
    /// Boundary profile for a given `A`.
    Profile(Common),
    /// Family label from the number of surviving edges.
    Classify(Common),
    /// Recover kink positions from compact-edge lengths.
    Solve(Common),
    /// Write harmonic.csv and metrics.csv on a grid.
    Sample(Common),
    /// Run every invariant suite and report.
    Verify(Common),
    /// Divisor volumes against edge lengths.
    Volumes(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Polytope JSON file (for `solve`, a solve request is also accepted).
    #[arg(long, conflicts_with = "fixture")]
    input: Option<PathBuf>,
    /// Bundled fixture name.
    #[arg(long)]
    fixture: Option<String>,
    /// Constant term of the boundary profile.
    #[arg(long = "A", value_name = "REAL")]
    a: Option<f64>,
    /// Comma-separated kink positions.
    #[arg(long, value_name = "CSV")]
    nodes: Option<String>,
    /// Solve for the kink positions instead of using defaults.
    #[arg(long, conflicts_with = "nodes")]
    solve: bool,
    /// Grid as `z=lo:hi:n,rho=lo:hi:n[:log]`.
    #[arg(long)]
    grid: Option<String>,
    /// Tolerance overrides (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for artifacts; JSON goes to stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Invariant(anyhow::Error),
    Input(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Invariant(_) => 1,
            Self::Input(_) => 2,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Input(e)
    }
}

/// Solver breakdowns and degenerate geometry are invariant failures;
/// everything else traces back to the input.
impl From<bgtoric::Error> for Failure {
    fn from(e: bgtoric::Error) -> Self {
        use bgtoric::Error as E;
        match e {
            E::Solver(SolverError::NonConvergence { .. } | SolverError::OrderingViolation)
            | E::Normalize(_)
            | E::Geometry(_) => Self::Invariant(e.into()),
            _ => Self::Input(e.into()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Invariant(e) | Failure::Input(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Validate(c) => cmd_validate(&c),
        Command::Extremal(c) => cmd_extremal(&c),
        Command::Profile(c) => cmd_profile(&c),
        Command::Classify(c) => cmd_classify(&c),
        Command::Solve(c) => cmd_solve(&c),
        Command::Sample(c) => cmd_sample(&c),
        Command::Verify(c) => cmd_verify(&c),
        Command::Volumes(c) => cmd_volumes(&c),
    }
}

impl Common {
    fn input_text(&self) -> anyhow::Result<String> {
        match (&self.input, &self.fixture) {
            (Some(path), None) => {
                fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
            }
            (None, Some(name)) => Ok(fixtures::fixture_json(name)?.to_owned()),
            _ => Err(anyhow!("exactly one of --input or --fixture is required")),
        }
    }

    fn polytope(&self) -> Result<PuncturedPolytope, Failure> {
        Ok(parse_polytope(&self.input_text()?)?)
    }

    fn a(&self) -> anyhow::Result<f64> {
        let a = self.a.ok_or_else(|| anyhow!("--A is required"))?;
        if !a.is_finite() {
            return Err(anyhow!("--A must be finite"));
        }
        Ok(a)
    }

    fn nodes(&self) -> Result<Option<Vec<f64>>, Failure> {
        Ok(self.nodes.as_deref().map(parse_nodes).transpose()?)
    }

    fn config(&self) -> Result<Config, Failure> {
        Ok(match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        })
    }

    fn grid(&self) -> Result<Option<GridSpec>, Failure> {
        Ok(self
            .grid
            .as_deref()
            .map(str::parse::<GridSpec>)
            .transpose()
            .map_err(bgtoric::Error::from)?)
    }

    fn emit<T: Serialize>(&self, name: &str, value: &T) -> Outcome {
        let mut text = serde_json::to_string_pretty(value).context("serializing output")?;
        text.push('\n');
        match &self.output {
            Some(dir) => {
                let path = out_dir(dir)?.join(format!("{name}.json"));
                fs::write(&path, text)
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .context("writing to stdout")?,
        }
        Ok(())
    }
}

fn out_dir(dir: &Path) -> anyhow::Result<&Path> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

#[derive(Serialize)]
struct ValidateOutput<'a> {
    #[serde(flatten)]
    report: &'a ValidationReport,
    failing_vertices: Vec<(usize, usize)>,
}

fn cmd_validate(c: &Common) -> Outcome {
    let pp = c.polytope()?;
    let report = validate(pp.polygon());
    let failing = report.failing_vertices();
    c.emit(
        "validate",
        &ValidateOutput {
            report: &report,
            failing_vertices: failing.clone(),
        },
    )?;
    if report.passed {
        return Ok(());
    }
    let list: Vec<String> = failing
        .iter()
        .map(|(i, j)| format!("facets {i} and {j}"))
        .collect();
    Err(Failure::Invariant(anyhow!(
        "not a Delzant polygon; failing vertices: {}",
        if list.is_empty() {
            "none (unbounded or degenerate edge)".into()
        } else {
            list.join(", ")
        }
    )))
}

fn cmd_extremal(c: &Common) -> Outcome {
    let prepared = Prepared::new(&c.polytope()?)?;
    c.emit("extremal", &prepared.extremal_report())
}

fn cmd_classify(c: &Common) -> Outcome {
    c.emit("classify", &classify_family(&c.polytope()?))
}

/// Profile for `--A` with nodes from `--nodes`, `--solve` or the defaults.
fn build_profile(
    c: &Common,
    config: &Config,
) -> Result<(Prepared, bgtoric::BoundaryProfile), Failure> {
    let a = c.a()?;
    let prepared = Prepared::new(&c.polytope()?)?;
    let (nodes, _, _) = resolve_nodes(&prepared, a, c.nodes()?, c.solve, config)?;
    let profile = prepared.profile(a, &nodes)?;
    Ok((prepared, profile))
}

fn cmd_profile(c: &Common) -> Outcome {
    let config = c.config()?;
    let (_, profile) = build_profile(c, &config)?;
    c.emit("profile", &profile)?;
    let adm = admissibility(&profile);
    if adm.admissible {
        Ok(())
    } else {
        Err(Failure::Invariant(anyhow!(
            "profile is not admissible: {}",
            serde_json::to_string(&adm.failures).unwrap_or_default()
        )))
    }
}

fn cmd_solve(c: &Common) -> Outcome {
    let config = c.config()?;
    let text = c.input_text()?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| anyhow!("invalid JSON: {e}"))?;
    let mut opts = solve_options(&config);
    let problem = if value.get("polytope").is_some() {
        let req: SolveRequest =
            serde_json::from_value(value).map_err(|e| anyhow!("invalid solve request: {e}"))?;
        opts.tol = req.tol.unwrap_or(opts.tol);
        opts.max_iter = req.max_iter.unwrap_or(opts.max_iter);
        req.to_problem()?
    } else {
        let a = c.a()?;
        let prepared = Prepared::new(&parse_polytope(&text)?)?;
        let (pp, eta) = (prepared.normalized.clone(), prepared.eta().clone());
        match c.nodes()? {
            Some(reference) => NodeSolveProblem::from_nodes(pp, eta, a, &reference),
            None => NodeSolveProblem::from_polytope(pp, eta, a),
        }
        .map_err(bgtoric::Error::from)?
    };
    let result = solve_nodes_with(&problem, &opts).map_err(bgtoric::Error::from)?;
    c.emit("solve", &result)
}

fn cmd_sample(c: &Common) -> Outcome {
    let config = c.config()?;
    let (prepared, profile) = build_profile(c, &config)?;
    let grid = c.grid()?.unwrap_or_else(|| config.grid.clone());
    let calibration = calibrate(&profile, &prepared.normalized, prepared.eta()).ok();
    let harmonic = sample_grid(&profile, &grid).map_err(bgtoric::Error::from)?;
    let metrics =
        sample_metrics(&profile, calibration.as_ref(), &grid).map_err(bgtoric::Error::from)?;
    let dir = out_dir(c.output.as_deref().unwrap_or(Path::new(".")))?;
    write_csv(&dir.join("harmonic.csv"), |f| write_grid_csv(f, &harmonic))?;
    write_csv(&dir.join("metrics.csv"), |f| write_metrics_csv(f, &metrics))?;
    Ok(())
}

fn write_csv(path: &Path, write: impl FnOnce(fs::File) -> csv::Result<()>) -> anyhow::Result<()> {
    let file =
        fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    write(file).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_verify(c: &Common) -> Outcome {
    let config = c.config()?;
    let pp = c.polytope()?;
    let opts = VerifyOptions {
        a: c.a()?,
        nodes: c.nodes()?,
        solve: c.solve,
        grid: c.grid()?,
        config,
    };
    let report = verify(&pp, &opts)?;
    c.emit("verify", &report)?;
    if report.passed {
        return Ok(());
    }
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|k| !k.passed)
        .map(|k| k.name.as_str())
        .collect();
    Err(Failure::Invariant(anyhow!(
        "failed checks: {}",
        failed.join(", ")
    )))
}

fn cmd_volumes(c: &Common) -> Outcome {
    let config = c.config()?;
    let (prepared, profile) = build_profile(c, &config)?;
    let report = divisor_volumes(&profile, &prepared.normalized, prepared.eta())
        .map_err(bgtoric::Error::from)?;
    c.emit("volumes", &report)
}
