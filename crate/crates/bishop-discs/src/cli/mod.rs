//! Experiment runners behind the `bishop` binary, plus its argument parsing.
//!
//! Every runner takes an [`ExperimentConfig`] and returns a [`Report`]: a list
//! of pass/fail checks, a JSON payload with the measured quantities and
//! optional CSV tables. [`write_outputs`] stores them in the output directory.

mod dilation;
mod experiments;
mod fill;
mod finite_type;
mod selftest;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::acs::StructureSpec;
use crate::bishop::SolverOptions;
use crate::geom::HypersurfaceSpec;
use crate::grid::DiscGrid;
use crate::{Error, Result};

pub use dilation::{run_dilation_study, DilationConfig};
pub use experiments::{run_levi_scan, run_linearized, run_solve, DiscConfig, LeviScanConfig, LinearizedConfig};
pub use fill::{run_fill, FillConfig};
pub use finite_type::{alpha_closed_form, run_finite_type, FiniteTypeConfig};
pub use selftest::{run_selftest, run_selftest_with, SelftestConfig, SelftestHooks};

/// Version of the CSV column layouts written by the runners.
pub const CSV_LAYOUT: u32 = 1;

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "BISHOP_OUT";

/// Disc grid sizes: boundary nodes, radial nodes, angular nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_boundary: usize,
    pub n_radial: usize,
    pub n_angular: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_boundary: 256,
            n_radial: 64,
            n_angular: 128,
        }
    }
}

impl GridSpec {
    pub fn new(n_boundary: usize, n_radial: usize, n_angular: usize) -> Self {
        Self {
            n_boundary,
            n_radial,
            n_angular,
        }
    }

    pub fn build(&self) -> Result<DiscGrid> {
        DiscGrid::new(self.n_boundary, self.n_radial, self.n_angular)
    }

    /// Every size divided by two.
    pub fn halved(&self) -> Self {
        Self::new(self.n_boundary / 2, self.n_radial / 2, self.n_angular / 2)
    }
}

/// Parses `N,R,T`.
impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("grid must be N,R,T, got `{s}`")));
        }
        let mut v = [0usize; 3];
        for (k, p) in parts.iter().enumerate() {
            v[k] = p
                .parse()
                .map_err(|_| Error::Config(format!("grid size `{p}` is not a positive integer")))?;
        }
        Ok(Self::new(v[0], v[1], v[2]))
    }
}

/// One experiment: the geometric setting plus per-command parameters. Every
/// field has a default, so a config file only lists what it changes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub hypersurface: HypersurfaceSpec,
    pub structure: StructureSpec,
    pub grid: GridSpec,
    pub solver: SolverOptions,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub disc: DiscConfig,
    pub selftest: SelftestConfig,
    pub levi: LeviScanConfig,
    pub finite_type: FiniteTypeConfig,
    pub fill: FillConfig,
    pub dilation: DilationConfig,
    pub linearized: LinearizedConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "default".into(),
            hypersurface: HypersurfaceSpec::default(),
            structure: StructureSpec::default(),
            grid: GridSpec::default(),
            solver: SolverOptions::default(),
            seed: 0,
            out: None,
            disc: DiscConfig::default(),
            selftest: SelftestConfig::default(),
            levi: LeviScanConfig::default(),
            finite_type: FiniteTypeConfig::default(),
            fill: FillConfig::default(),
            dilation: DilationConfig::default(),
            linearized: LinearizedConfig::default(),
        }
    }
}

fn range(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} outside [{lo}, {hi}]")))
    }
}

fn structure_eps(s: &StructureSpec) -> Option<f64> {
    match s {
        StructureSpec::DiagonalPerturbation { eps }
        | StructureSpec::BlockDiagonal { eps }
        | StructureSpec::Normalized { eps } => Some(*eps),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks the documented parameter ranges and that every family builds.
    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        self.hypersurface.build()?;
        self.structure.build()?;
        if let Some(eps) = structure_eps(&self.structure) {
            range("structure.eps", eps, -0.5, 0.5)?;
        }
        if let HypersurfaceSpec::Quadric { sigma } = self.hypersurface {
            range("hypersurface.sigma", sigma, -10.0, 10.0)?;
        }
        range("solver.omega", self.solver.omega, 1e-3, 1.0)?;
        range("solver.tol", self.solver.tol, 1e-15, 1e-3)?;
        if self.solver.max_iter == 0 {
            return Err(Error::Config("solver.max_iter must be positive".into()));
        }
        self.disc.validate()?;
        self.selftest.validate()?;
        self.levi.validate()?;
        self.finite_type.validate()?;
        self.fill.validate()?;
        self.dilation.validate()?;
        self.linearized.validate()?;
        Ok(())
    }
}

/// Acceptance rule of one check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Bound {
    AtMost { limit: f64 },
    AtLeast { limit: f64 },
    Within { target: f64, tol: f64 },
    Equals { target: f64 },
}

impl Bound {
    fn accepts(&self, v: f64) -> bool {
        match *self {
            Bound::AtMost { limit } => v <= limit,
            Bound::AtLeast { limit } => v >= limit,
            Bound::Within { target, tol } => (v - target).abs() <= tol,
            Bound::Equals { target } => v == target,
        }
    }

    fn describe(&self) -> String {
        let f = |x: f64| {
            if x == 0.0 || (1e-2..1e4).contains(&x.abs()) {
                format!("{x}")
            } else {
                format!("{x:.1e}")
            }
        };
        match *self {
            Bound::AtMost { limit } => format!("<= {}", f(limit)),
            Bound::AtLeast { limit } => format!(">= {}", f(limit)),
            Bound::Within { target, tol } => format!("{} +- {}", f(target), f(tol)),
            Bound::Equals { target } => format!("== {}", f(target)),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, bound: Bound) -> Self {
        Self {
            name: name.into(),
            value,
            pass: !value.is_nan() && bound.accepts(value),
            bound,
            note: None,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, Bound::AtMost { limit })
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name, value, Bound::AtLeast { limit })
    }

    pub fn within(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Self::new(name, value, Bound::Within { target, tol })
    }

    /// Boolean predicate, recorded as `1` or `0`.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Bound::Equals { target: 1.0 })
    }

    /// A step that could not be carried out.
    pub fn failed(name: impl Into<String>, err: &Error) -> Self {
        let mut c = Self::new(name, f64::NAN, Bound::Equals { target: 1.0 });
        c.note = Some(err.to_string());
        c
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// A CSV table with a fixed header.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub version: &'static str,
    pub csv_layout: u32,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub runtime_s: f64,
    pub results: serde_json::Value,
    #[serde(skip)]
    pub tables: Vec<Table>,
    #[serde(skip)]
    started: Option<Instant>,
}

impl Report {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION"),
            csv_layout: CSV_LAYOUT,
            seed: cfg.seed,
            config: cfg.clone(),
            tolerances: BTreeMap::new(),
            checks: Vec::new(),
            passed: false,
            runtime_s: 0.0,
            results: serde_json::Value::Object(Default::default()),
            tables: Vec::new(),
            started: Some(Instant::now()),
        }
    }

    pub fn tolerance(&mut self, name: &str, v: f64) {
        self.tolerances.insert(name.into(), v);
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    /// Stores a serializable result under `key`.
    pub fn result(&mut self, key: &str, v: impl Serialize) {
        let v = serde_json::to_value(v).unwrap_or(serde_json::Value::Null);
        if let serde_json::Value::Object(m) = &mut self.results {
            m.insert(key.into(), v);
        }
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn finish(mut self) -> Self {
        self.passed = self.checks.iter().all(|c| c.pass);
        if let Some(t) = self.started {
            self.runtime_s = t.elapsed().as_secs_f64();
        }
        self
    }

    /// Human-readable summary, one line per check.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = write!(
                s,
                "[{}] {:<48} {:>12.4e}  ({})",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.bound.describe()
            );
            if let Some(n) = &c.note {
                let _ = write!(s, "  {n}");
            }
            s.push('\n');
        }
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        let _ = writeln!(
            s,
            "{}: {} checks, {} failed, {:.2} s",
            self.command,
            self.checks.len(),
            failed,
            self.runtime_s
        );
        s
    }
}

/// Writes `report.json` and every table as `<name>.csv`; returns the paths.
pub fn write_outputs(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let path = dir.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(report)?)?;
    out.push(path);
    for t in &report.tables {
        let path = dir.join(format!("{}.csv", t.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&t.header)?;
        for row in &t.rows {
            w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        out.push(path);
    }
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(
    name = "bishop",
    version,
    about = "Bishop discs attached to real hypersurfaces in almost complex C^2"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default `out/<command>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Grid sizes `N,R,T`: boundary, radial and angular nodes.
    #[arg(long, global = true, value_parser = parse_grid)]
    pub grid: Option<GridSpec>,
    /// Seed for randomized test data.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

fn parse_grid(s: &str) -> std::result::Result<GridSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Operator identities, structure algebra and Levi-form suites.
    Selftest,
    /// Solve one Bishop disc.
    Solve,
    /// Levi form by the disc and bracket routes over a sample of E.
    LeviScan,
    /// Transversal disc for a finite-type model hypersurface.
    FiniteType,
    /// One-sided filling by a family of discs.
    Fill,
    /// Isotropic and anisotropic dilation study.
    Dilate,
    /// Linearized Riemann-Hilbert diagnostics over a scenario matrix.
    Linearized,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Selftest => "selftest",
            Command::Solve => "solve",
            Command::LeviScan => "levi-scan",
            Command::FiniteType => "finite-type",
            Command::Fill => "fill",
            Command::Dilate => "dilate",
            Command::Linearized => "linearized",
        }
    }
}

pub fn run_command(cmd: Command, cfg: &ExperimentConfig) -> Result<Report> {
    match cmd {
        Command::Selftest => run_selftest(cfg),
        Command::Solve => run_solve(cfg),
        Command::LeviScan => run_levi_scan(cfg),
        Command::FiniteType => run_finite_type(cfg),
        Command::Fill => run_fill(cfg),
        Command::Dilate => run_dilation_study(cfg),
        Command::Linearized => run_linearized(cfg),
    }
}

/// Merges the command-line flags into the configuration and picks the output
/// directory: `--out`, then the environment override, then the config file.
pub fn resolve(cli: &Cli) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(g) = cli.grid {
        cfg.grid = g;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| Path::new("out").join(cli.command.name()));
    Ok((cfg, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spec_parsing() {
        assert_eq!("256,64,128".parse::<GridSpec>().unwrap(), GridSpec::default());
        assert_eq!(" 64, 16 ,32".parse::<GridSpec>().unwrap(), GridSpec::new(64, 16, 32));
        assert!("64,16".parse::<GridSpec>().is_err());
        assert!("64,x,32".parse::<GridSpec>().is_err());
        assert_eq!(GridSpec::default().halved(), GridSpec::new(128, 32, 64));
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.grid, cfg.grid);
        let cfg = ExperimentConfig::from_json(
            r#"{"hypersurface": {"family": "finite-type", "m": 4, "q": [1, 1, 0]},
                "structure": {"family": "normalized", "eps": 0.02}}"#,
        )
        .unwrap();
        assert_eq!(cfg.structure, StructureSpec::Normalized { eps: 0.02 });
        assert!(ExperimentConfig::from_json(r#"{"structure": {"family": "unknown"}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"structure": {"family": "block-diagonal", "eps": 3.0}}"#).is_err());
        assert!(
            ExperimentConfig::from_json(r#"{"grid": {"n_boundary": 100, "n_radial": 8, "n_angular": 16}}"#).is_err()
        );
    }

    #[test]
    fn checks_and_summary() {
        let cfg = ExperimentConfig::default();
        let mut r = Report::new("demo", &cfg);
        r.check(Check::at_most("small", 1e-9, 1e-8));
        r.check(Check::at_least("big", 0.5, 0.9));
        r.check(Check::at_most("nan", f64::NAN, 1.0));
        let r = r.finish();
        assert!(!r.passed);
        assert!(r.find("small").unwrap().pass);
        assert!(!r.find("big").unwrap().pass && !r.find("nan").unwrap().pass);
        assert_eq!(r.summary().lines().filter(|l| l.starts_with("[FAIL]")).count(), 2);
    }
}
