//! Command-line front end: configs, expressions, scenario building and the
//! run/study/certify pipelines.

pub mod build;
pub mod config;
pub mod expr;
pub mod pipeline;

use std::path::{Path, PathBuf};

use crate::error::Error;
use build::Built;
use config::{ProblemMode, ScenarioConfig};
pub use pipeline::{CheckOutcome, Report, StudyRow};

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Malformed config or unbuildable scenario; nothing was written.
    Input(Error),
    /// Numerical or I/O failure after the scenario was accepted.
    Runtime(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(e) => write!(f, "invalid scenario: {e}"),
            Failure::Runtime(e) => write!(f, "{e}"),
        }
    }
}

/// Parses and builds a config; relative matrix paths resolve against the
/// config's directory.
pub fn load(path: &Path) -> Result<Built, Failure> {
    let cfg = ScenarioConfig::load(path).map_err(Failure::Input)?;
    check_verify(&cfg).map_err(Failure::Input)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    build::build(&cfg, &base).map_err(Failure::Input)
}

fn check_verify(cfg: &ScenarioConfig) -> Result<(), Error> {
    let v = &cfg.verify;
    let mode = cfg.problem.mode;
    if v.apriori && mode != ProblemMode::Damped {
        return Err(Error::Config("the a priori check applies to linear damped problems".into()));
    }
    if mode == ProblemMode::Quasilinear && (v.energy || v.cross_check.is_some()) {
        return Err(Error::Config("energy and cross-check apply to linear problems".into()));
    }
    Ok(())
}

fn output_dir(built: &Built, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&built.config.output.directory))
}

pub fn run(path: &Path, out: Option<&Path>) -> Result<Report, Failure> {
    let built = load(path)?;
    pipeline::run(&built, &output_dir(&built, out)).map_err(Failure::Runtime)
}

pub fn certify(path: &Path, out: Option<&Path>) -> Result<Report, Failure> {
    let built = load(path)?;
    pipeline::certify(&built, &output_dir(&built, out)).map_err(Failure::Runtime)
}

pub fn study(path: &Path, levels: Option<usize>, out: Option<&Path>) -> Result<Vec<StudyRow>, Failure> {
    let built = load(path)?;
    let levels = levels.or(built.config.verify.convergence_levels).unwrap_or(3);
    if levels < 3 {
        return Err(Failure::Input(Error::Config(format!("a study needs at least 3 levels, got {levels}"))));
    }
    if built.exact.is_none() {
        return Err(Failure::Input(Error::Config("a convergence study needs data.exact".into())));
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    pipeline::study(&built, levels, |c| build::build(c, &base), &output_dir(&built, out)).map_err(Failure::Runtime)
}
