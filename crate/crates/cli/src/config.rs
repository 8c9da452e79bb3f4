//! Flat `key=value` run configuration with section prefixes.
//!
//! Later sources override earlier ones: built-in defaults, then the config
//! file, then `ASSIM_OUTPUT_DIR`, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use assim_core::adaptivity::{AdaptConfig, Strategy};
use assim_core::problems::{self, CatalogParams};
use assim_core::ProblemSpec;

use crate::error::{CliError, CliResult};

pub const OUTPUT_DIR_ENV: &str = "ASSIM_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub params: CatalogParams,
    pub d: usize,
    pub n: usize,
    pub horizon: f64,
    pub strategy: String,
    pub doerfler_theta: f64,
    pub n_initial: usize,
    pub n_max: usize,
    pub max_marks: Option<usize>,
    pub record_reference: bool,
    pub snapshots: bool,
    pub use_solution: bool,
    pub quad_order: usize,
    pub theta_scheme: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub oracle_levels: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "example1i".into(),
            params: CatalogParams::default(),
            d: 40,
            n: 40,
            horizon: 1.0,
            strategy: "max".into(),
            doerfler_theta: 0.5,
            n_initial: 5,
            n_max: 40,
            max_marks: None,
            record_reference: false,
            snapshots: false,
            use_solution: false,
            quad_order: 3,
            theta_scheme: 0.5,
            output_dir: PathBuf::from("out"),
            seed: 0,
            oracle_levels: vec![10, 20, 40],
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(CliError::Config(format!("{key}: expected a boolean, got '{other}'"))),
    }
}

impl RunConfig {
    /// Sets one key; unknown keys are rejected.
    pub fn apply(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        match key.trim() {
            "problem.name" => self.problem = v.to_string(),
            "problem.alpha" => self.params.alpha = parse_num(key, v)?,
            "problem.nu" => self.params.nu = parse_num(key, v)?,
            "problem.eps" => self.params.eps = parse_num(key, v)?,
            "problem.m" => self.params.m = parse_num(key, v)?,
            "grid.d" => self.d = parse_num(key, v)?,
            "grid.N" => self.n = parse_num(key, v)?,
            "grid.T" => self.horizon = parse_num(key, v)?,
            "adapt.strategy" => self.strategy = v.to_ascii_lowercase(),
            "adapt.theta" => self.doerfler_theta = parse_num(key, v)?,
            "adapt.n_initial" => self.n_initial = parse_num(key, v)?,
            "adapt.n_max" => self.n_max = parse_num(key, v)?,
            "adapt.max_marks" => self.max_marks = Some(parse_num(key, v)?),
            "adapt.record_reference" => self.record_reference = parse_bool(key, v)?,
            "adapt.snapshots" => self.snapshots = parse_bool(key, v)?,
            "adapt.use_solution" => self.use_solution = parse_bool(key, v)?,
            "quad_order" => self.quad_order = parse_num(key, v)?,
            "theta_scheme" => self.theta_scheme = parse_num(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "seed" => self.seed = parse_num(key, v)?,
            "oracle.levels" => {
                self.oracle_levels = v
                    .split(',')
                    .map(|s| parse_num(key, s))
                    .collect::<CliResult<Vec<usize>>>()?
            }
            other => return Err(CliError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value, got '{line}'", no + 1)))?;
            self.apply(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn apply_assignment(&mut self, kv: &str) -> CliResult<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        self.apply(k, v)
    }

    /// Range checks that must pass before any solve.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !problems::CATALOG_NAMES.contains(&self.problem.as_str()) {
            return bad(format!(
                "problem.name: unknown problem '{}', expected one of {}",
                self.problem,
                problems::CATALOG_NAMES.join(", ")
            ));
        }
        let p = &self.params;
        if !(p.alpha.is_finite() && p.alpha > 0.0) {
            return bad(format!("problem.alpha must be positive, got {}", p.alpha));
        }
        if !(p.nu.is_finite() && p.nu > 0.0) {
            return bad(format!("problem.nu must be positive, got {}", p.nu));
        }
        if !(p.eps.is_finite() && p.eps > 0.0) {
            return bad(format!("problem.eps must be positive, got {}", p.eps));
        }
        if self.d < 2 {
            return bad(format!("grid.d must be at least 2, got {}", self.d));
        }
        if self.n < 1 {
            return bad("grid.N must be at least 1".into());
        }
        if (self.horizon - 1.0).abs() > 1e-12 {
            return bad(format!("grid.T must equal the catalog horizon 1, got {}", self.horizon));
        }
        if !(1..=3).contains(&self.quad_order) {
            return bad(format!("quad_order must be 1, 2 or 3, got {}", self.quad_order));
        }
        if !(0.0..=1.0).contains(&self.theta_scheme) {
            return bad(format!("theta_scheme must lie in [0, 1], got {}", self.theta_scheme));
        }
        if self.oracle_levels.iter().any(|&l| l < 2) || self.oracle_levels.len() < 2 {
            return bad("oracle.levels needs at least two levels, each >= 2".into());
        }
        self.adapt_config()?
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn adapt_config(&self) -> CliResult<AdaptConfig> {
        let strategy = match self.strategy.as_str() {
            "max" => Strategy::Max,
            "doerfler" | "dorfler" => Strategy::Doerfler(self.doerfler_theta),
            other => return Err(CliError::Config(format!("adapt.strategy: expected max or doerfler, got '{other}'"))),
        };
        Ok(AdaptConfig {
            strategy,
            n_initial: self.n_initial,
            n_max: self.n_max,
            max_marks: self.max_marks,
            record_reference_error: self.record_reference,
            use_solution: self.use_solution,
            quad_order: self.quad_order,
        })
    }

    pub fn problem_spec(&self) -> CliResult<ProblemSpec> {
        Ok(problems::by_name(&self.problem, &self.params)?)
    }
}
