//! Command implementations behind the `gcs-sim` binary.
//!
//! Each command returns a [`CliError`] on failure; its exit code depends only
//! on whether the scenario parsed, whether it validated, and how many
//! violations the run produced.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use gcs_sim::engine::{self, RunOutput};
use gcs_sim::scenario::{Scenario, ScenarioError, ScenarioFile};
use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_VIOLATIONS: i32 = 4;
/// I/O and other failures not tied to the scenario.
pub const EXIT_IO: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
    #[error("run finished with {count} violation(s)")]
    Violations { count: u64 },
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Violations { .. } => EXIT_VIOLATIONS,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Parse { .. } => CliError::Parse(e.to_string()),
            ScenarioError::Invalid(_) => CliError::Invalid(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn load_file(path: &Path) -> Result<ScenarioFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(ScenarioFile::from_json(&text)?)
}

pub fn load(path: &Path) -> Result<Scenario, CliError> {
    let sc = Scenario::new(load_file(path)?)?;
    for w in &sc.warnings {
        log::warn!("{w}");
    }
    Ok(sc)
}

/// Runs a validated scenario, writing `trace.csv`, `summary.json` and
/// `violations.json` into `out_dir`.
pub fn run_to_dir(sc: &Scenario, out_dir: &Path) -> Result<RunOutput, CliError> {
    let out = engine::run(sc).map_err(|e| CliError::Invalid(e.to_string()))?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    let p = out_dir.join("trace.csv");
    let f = fs::File::create(&p).map_err(|e| io_err(&p, e))?;
    let mut w = BufWriter::new(f);
    out.trace.write_csv(&mut w).map_err(|e| io_err(&p, e))?;
    w.flush().map_err(|e| io_err(&p, e))?;

    let p = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&out.summary).map_err(|e| io_err(&p, e))?;
    fs::write(&p, json + "\n").map_err(|e| io_err(&p, e))?;

    let p = out_dir.join("violations.json");
    let json = serde_json::to_string_pretty(&out.violations).map_err(|e| io_err(&p, e))?;
    fs::write(&p, json + "\n").map_err(|e| io_err(&p, e))?;
    Ok(out)
}

pub fn cmd_run(scenario: &Path, seed: Option<u64>, out_dir: &Path) -> Result<RunOutput, CliError> {
    let mut sc = load(scenario)?;
    if let Some(s) = seed {
        sc = sc.with_seed(s);
    }
    info!("running {} with seed {}", scenario.display(), sc.seed());
    let out = run_to_dir(&sc, out_dir)?;
    let s = &out.summary;
    info!(
        "{} cycles, end time {}, max local {} (bound {}), max global {} (bound {})",
        s.cycles_completed,
        s.end_time,
        s.bounds.max_observed_local,
        s.bounds.local_bound,
        s.bounds.max_observed_global,
        s.bounds.global_bound
    );
    if s.violation_count > 0 {
        return Err(CliError::Violations {
            count: s.violation_count,
        });
    }
    Ok(out)
}

/// Static quantities printed by `check`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub sigma: f64,
    /// `(u, v, κ̂)` per edge.
    pub kappa: Vec<(usize, usize, f64)>,
    pub weighted_diameter: f64,
    pub local_bound: f64,
    pub local_bound_degenerate: bool,
    pub global_bound: f64,
    pub timeout: f64,
    pub s_max: u32,
    pub warnings: Vec<String>,
}

impl CheckReport {
    pub fn from_scenario(sc: &Scenario) -> Self {
        let b = &sc.bounds;
        Self {
            sigma: b.sigma,
            kappa: sc
                .graph
                .edges()
                .iter()
                .zip(&b.kappa)
                .map(|(e, &k)| (e.u.0, e.v.0, k))
                .collect(),
            weighted_diameter: b.weighted_diameter,
            local_bound: b.local_bound,
            local_bound_degenerate: b.local_degenerate,
            global_bound: b.global_bound,
            timeout: sc.timeout,
            s_max: sc.params.s_max,
            warnings: sc.warnings.clone(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sigma             {}", self.sigma);
        let _ = writeln!(s, "kappa diameter    {}", self.weighted_diameter);
        let _ = writeln!(
            s,
            "local bound       {}{}",
            self.local_bound,
            if self.local_bound_degenerate { " (degenerate: floor 2*kappa)" } else { "" }
        );
        let _ = writeln!(s, "global bound      {}", self.global_bound);
        let _ = writeln!(s, "timeout window    {}", self.timeout);
        let _ = writeln!(s, "s_max             {}", self.s_max);
        let _ = writeln!(s, "edge kappa:");
        for (u, v, k) in &self.kappa {
            let _ = writeln!(s, "  {u} - {v}  {k}");
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

pub fn cmd_check(scenario: &Path) -> Result<CheckReport, CliError> {
    Ok(CheckReport::from_scenario(&load(scenario)?))
}

/// Parameter grid for `sweep`. Absent keys keep the scenario's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default)]
    pub eps_d: Vec<f64>,
    #[serde(default)]
    pub eps_m: Vec<f64>,
    #[serde(default)]
    pub jitter: Vec<f64>,
    #[serde(default)]
    pub n: Vec<usize>,
}

/// One grid point; `None` leaves the base scenario untouched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GridPoint {
    pub theta: Option<f64>,
    pub mu: Option<f64>,
    pub eps_d: Option<f64>,
    pub eps_m: Option<f64>,
    pub jitter: Option<f64>,
    pub n: Option<usize>,
}

fn axis<T: Copy>(v: &[T]) -> Vec<Option<T>> {
    if v.is_empty() {
        vec![None]
    } else {
        v.iter().copied().map(Some).collect()
    }
}

impl ParamGrid {
    /// Cartesian product in key order `theta, mu, eps_d, eps_m, jitter, n`.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &theta in &axis(&self.theta) {
            for &mu in &axis(&self.mu) {
                for &eps_d in &axis(&self.eps_d) {
                    for &eps_m in &axis(&self.eps_m) {
                        for &jitter in &axis(&self.jitter) {
                            for &n in &axis(&self.n) {
                                out.push(GridPoint {
                                    theta,
                                    mu,
                                    eps_d,
                                    eps_m,
                                    jitter,
                                    n,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

impl GridPoint {
    pub fn apply(&self, base: &ScenarioFile) -> Result<ScenarioFile, ScenarioError> {
        let mut f = match self.n {
            Some(n) => base.with_node_count(n)?,
            None => base.clone(),
        };
        if let Some(x) = self.theta {
            f.clocks.theta = x;
        }
        if let Some(x) = self.mu {
            f.clocks.mu = x;
        }
        for e in &mut f.graph.edges {
            if let Some(x) = self.eps_d {
                e.eps_d = x;
            }
            if let Some(x) = self.eps_m {
                e.eps_m = x;
            }
            if let Some(x) = self.jitter {
                e.jitter = x;
            }
        }
        Ok(f)
    }
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: usize,
    pub params: GridPoint,
    pub seed: u64,
    pub max_local: f64,
    pub max_global: f64,
    pub bound_local: f64,
    pub bound_global: f64,
    pub slack_local: f64,
    pub slack_global: f64,
    /// `κ̂_e / d_e` per edge, `d_e` the edge's largest delay.
    pub kappa_over_d: Vec<f64>,
    pub violations: u64,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(point: usize, params: GridPoint, seed: u64, error: String) -> Self {
        Self {
            point,
            params,
            seed,
            max_local: f64::NAN,
            max_global: f64::NAN,
            bound_local: f64::NAN,
            bound_global: f64::NAN,
            slack_local: f64::NAN,
            slack_global: f64::NAN,
            kappa_over_d: Vec::new(),
            violations: 0,
            error: Some(error),
        }
    }
}

pub const SWEEP_HEADER: &str = "point,theta,mu,eps_d,eps_m,jitter,n,seed,max_local,max_global,bound_local,bound_global,slack_local,slack_global,kappa_over_d_min,kappa_over_d_max,violations,error";

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl SweepRow {
    pub fn csv_line(&self) -> String {
        let p = &self.params;
        let (lo, hi) = if self.kappa_over_d.is_empty() {
            (String::new(), String::new())
        } else {
            let lo = self.kappa_over_d.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = self.kappa_over_d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo.to_string(), hi.to_string())
        };
        let err = self
            .error
            .as_deref()
            .map(|e| format!("\"{}\"", e.replace('"', "'").replace('\n', "; ")))
            .unwrap_or_default();
        [
            self.point.to_string(),
            opt(p.theta),
            opt(p.mu),
            opt(p.eps_d),
            opt(p.eps_m),
            opt(p.jitter),
            opt(p.n),
            self.seed.to_string(),
            self.max_local.to_string(),
            self.max_global.to_string(),
            self.bound_local.to_string(),
            self.bound_global.to_string(),
            self.slack_local.to_string(),
            self.slack_global.to_string(),
            lo,
            hi,
            self.violations.to_string(),
            err,
        ]
        .join(",")
    }
}

/// `κ̂_e / d_e` for every edge of a validated scenario.
pub fn kappa_over_d(sc: &Scenario) -> Vec<f64> {
    sc.graph
        .edges()
        .iter()
        .zip(&sc.bounds.kappa)
        .map(|(e, &k)| k / e.params.max_delay())
        .collect()
}

fn sweep_one(base: &ScenarioFile, point: usize, gp: GridPoint, seed: u64) -> SweepRow {
    let sc = match gp.apply(base).and_then(Scenario::new) {
        Ok(sc) => sc.with_seed(seed),
        Err(e) => return SweepRow::failed(point, gp, seed, e.to_string()),
    };
    debug!("sweep point {point} seed {seed}");
    let out = match engine::run(&sc) {
        Ok(o) => o,
        Err(e) => return SweepRow::failed(point, gp, seed, e.to_string()),
    };
    let b = &out.summary.bounds;
    SweepRow {
        point,
        params: gp,
        seed,
        max_local: b.max_observed_local,
        max_global: b.max_observed_global,
        bound_local: b.local_bound,
        bound_global: b.global_bound,
        slack_local: b.local_bound - b.max_observed_local,
        slack_global: b.global_bound - b.max_observed_global,
        kappa_over_d: kappa_over_d(&sc),
        violations: out.summary.violation_count,
        error: None,
    }
}

/// Runs every `(grid point, seed)` pair in parallel; seeds are
/// `base_seed .. base_seed + seeds`. Failed runs become rows with an error.
pub fn sweep_rows(base: &ScenarioFile, grid: &ParamGrid, seeds: u64) -> Vec<SweepRow> {
    let jobs: Vec<(usize, GridPoint, u64)> = grid
        .points()
        .into_iter()
        .enumerate()
        .flat_map(|(i, gp)| (0..seeds).map(move |k| (i, gp, base.sim.seed + k)))
        .collect();
    jobs.into_par_iter()
        .map(|(i, gp, seed)| sweep_one(base, i, gp, seed))
        .collect()
}

pub fn cmd_sweep(scenario: &Path, grid: &Path, seeds: u64, out_dir: &Path) -> Result<Vec<SweepRow>, CliError> {
    let base = load_file(scenario)?;
    let text = fs::read_to_string(grid).map_err(|e| io_err(grid, e))?;
    let grid: ParamGrid = serde_json::from_str(&text).map_err(|e| {
        CliError::Parse(format!(
            "grid parse error at line {}, column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    let rows = sweep_rows(&base, &grid, seeds);
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let p = out_dir.join("sweep.csv");
    let mut body = String::from(SWEEP_HEADER);
    body.push('\n');
    for r in &rows {
        body.push_str(&r.csv_line());
        body.push('\n');
    }
    fs::write(&p, body).map_err(|e| io_err(&p, e))?;

    let mut failures: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        if let Some(e) = &r.error {
            *failures.entry(e.as_str()).or_default() += 1;
        }
    }
    for (e, k) in failures {
        log::warn!("{k} sweep run(s) failed: {e}");
    }
    Ok(rows)
}
