//! Configuration parsing and the `subcorr` commands.
//!
//! Exit codes: 0 every check passed, 1 a check or the numerics failed, 2 an enumeration
//! budget refused the work, 3 the configuration is invalid.

mod commands;
mod config;
mod csv;

use std::fmt;
use std::path::Path;

pub use commands::{
    cmd_run, cmd_spectrum, cmd_verify, run_experiment, spectrum_report, verify_experiment, CheckResult,
    CheckStatus, SpectrumReport, VerifyReport,
};
pub use config::{
    parse_config, AlgorithmKind, ConfigError, DecompositionSpec, ExperimentConfig, ProblemSpec,
    DEFAULT_CONDITION_TARGET, DEFAULT_TRIALS,
};
pub use csv::{format_real, CsvRow, CsvTrace, CSV_HEADER};

use crate::analysis::{DEFAULT_FACTORIAL_J, DEFAULT_PATH_BUDGET};
use crate::decomposition::Decomposition;
use crate::error::Error;
use crate::problem::{build_laplacian_1d, build_laplacian_2d, build_random_spd, LinearSystem, SpdOperator, Vector};
use crate::solvers::{Algorithm, FaultModel, RngStream};

/// Stream index reserved for drawing the exact solution.
pub const RHS_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    CheckFailure = 1,
    Refused = 2,
    ConfigError = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub enum HarnessError {
    Config(ConfigError),
    /// An enumeration budget would be exceeded.
    Refused(String),
    Numerical(Error),
    Io(std::io::Error),
}

impl HarnessError {
    pub fn exit_status(&self) -> ExitStatus {
        match self {
            HarnessError::Config(_) => ExitStatus::ConfigError,
            HarnessError::Refused(_) => ExitStatus::Refused,
            HarnessError::Numerical(_) | HarnessError::Io(_) => ExitStatus::CheckFailure,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(e) => write!(f, "config error: {e}"),
            HarnessError::Refused(m) => write!(f, "refused: {m}"),
            HarnessError::Numerical(e) => write!(f, "numerical failure: {e}"),
            HarnessError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        HarnessError::Config(e)
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

impl From<Error> for HarnessError {
    fn from(e: Error) -> Self {
        match e {
            Error::EnumerationTooLarge { paths, budget } => HarnessError::Refused(format!(
                "enumeration needs {paths} paths but the budget is {budget}; \
                 reduce steps or the number of subspaces, or raise budgets.paths"
            )),
            other => HarnessError::Numerical(other),
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

/// A fully assembled experiment. Built from a config, or directly for custom operators.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub decomposition: Decomposition,
    pub system: LinearSystem,
    pub u0: Vector,
    pub algorithm: Algorithm,
    pub steps: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub path_budget: u128,
    pub factorial_j: usize,
    pub eps: Option<f64>,
}

/// Unit vector with Gaussian direction, drawn from the reserved stream of `master_seed`.
pub fn seeded_unit_vector(n: usize, master_seed: u64) -> Vector {
    let mut rng = RngStream::new(master_seed, RHS_STREAM);
    loop {
        let v = Vector::from_fn(n, |_, _| rng.gaussian());
        let norm = v.norm();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

impl Experiment {
    /// `u⁰ = 0` and `f = A w` for the seeded unit vector `w`, with default budgets.
    pub fn new(decomposition: Decomposition, algorithm: Algorithm, steps: usize, master_seed: u64) -> Self {
        let a = decomposition.ambient().clone();
        let w = seeded_unit_vector(a.dim(), master_seed);
        let system = LinearSystem::with_solution(a, w).expect("dimension matches by construction");
        Self::with_system(decomposition, system, algorithm, steps, master_seed)
    }

    pub fn with_system(
        decomposition: Decomposition,
        system: LinearSystem,
        algorithm: Algorithm,
        steps: usize,
        master_seed: u64,
    ) -> Self {
        let u0 = Vector::zeros(decomposition.dim());
        Self {
            decomposition,
            system,
            u0,
            algorithm,
            steps,
            trials: DEFAULT_TRIALS,
            master_seed,
            path_budget: DEFAULT_PATH_BUDGET,
            factorial_j: DEFAULT_FACTORIAL_J,
            eps: None,
        }
    }

    pub fn trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn path_budget(mut self, budget: u128) -> Self {
        self.path_budget = budget;
        self
    }

    pub fn eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    pub fn fault_model(&self) -> Option<FaultModel> {
        self.algorithm.fault_model()
    }

    pub fn from_config(cfg: &ExperimentConfig) -> HarnessResult<Self> {
        let invalid = |key: &str, e: Error| ConfigError { line: None, key: key.to_string(), message: e.to_string() };
        let a: SpdOperator = match cfg.problem {
            ProblemSpec::Laplacian1d { n } => build_laplacian_1d(n),
            ProblemSpec::Laplacian2d { m } => build_laplacian_2d(m),
            ProblemSpec::RandomSpd { n, seed, condition_target } => build_random_spd(n, seed, condition_target),
        }
        .map_err(|e| invalid("problem.kind", e))?;
        let d = match &cfg.decomposition {
            DecompositionSpec::Coordinate => Decomposition::coordinate(a),
            DecompositionSpec::Blocks(b) => Decomposition::blocks(a, b),
        }
        .map_err(|e| invalid("decomposition.kind", e))?
        .with_solver(cfg.solver)
        .map_err(|e| invalid("solver.kind", e))?;
        let algorithm = match cfg.algorithm {
            AlgorithmKind::Psc => Algorithm::Psc,
            AlgorithmKind::Ssc => Algorithm::Ssc { order: cfg.sweep_order() },
            AlgorithmKind::RandomIndex => Algorithm::RandomIndex,
            AlgorithmKind::RandomPermutation => Algorithm::RandomPermutation,
            AlgorithmKind::FaultTolerant => Algorithm::FaultTolerant(
                FaultModel::new(cfg.theta.unwrap_or(0.0)).map_err(|e| invalid("theta", e))?,
            ),
        };
        let mut exp = Experiment::new(d, algorithm, cfg.steps, cfg.master_seed);
        exp.trials = cfg.trials;
        exp.path_budget = cfg.path_budget;
        exp.factorial_j = cfg.factorial_j;
        exp.eps = cfg.eps;
        Ok(exp)
    }

    /// Sweep order for sweep-level checks: the configured `ssc` order, else natural.
    pub fn sweep_order(&self) -> Vec<usize> {
        match &self.algorithm {
            Algorithm::Ssc { order } => order.clone(),
            _ => (0..self.decomposition.len()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Verify,
    Spectrum,
}

/// Command-line overrides; each beats the corresponding config value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

pub fn load_config(path: &Path, overrides: Overrides) -> HarnessResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        HarnessError::Config(ConfigError { line: None, key: path.display().to_string(), message: e.to_string() })
    })?;
    let mut cfg = parse_config(&text)?;
    if let Some(t) = overrides.trials {
        cfg.set_trials(t)?;
    }
    if let Some(s) = overrides.seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

/// Runs `command` and returns its text output with the exit status it implies.
pub fn execute(command: Command, cfg: &ExperimentConfig) -> HarnessResult<(String, ExitStatus)> {
    match command {
        Command::Run => Ok((cmd_run(cfg)?.to_csv_string(), ExitStatus::Success)),
        Command::Verify => {
            let report = cmd_verify(cfg)?;
            Ok((report.render(), report.exit_status()))
        }
        Command::Spectrum => {
            let report = cmd_spectrum(cfg)?;
            Ok((report.render(), report.exit_status()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_exit_codes() {
        let refused: HarnessError = Error::EnumerationTooLarge { paths: 10, budget: 5 }.into();
        assert_eq!(refused.exit_status().code(), 2);
        assert!(refused.to_string().contains("reduce steps"));
        let numeric: HarnessError = Error::Numerical("x".into()).into();
        assert_eq!(numeric.exit_status().code(), 1);
        let cfg: HarnessError = ConfigError { line: Some(1), key: "k".into(), message: "m".into() }.into();
        assert_eq!(cfg.exit_status().code(), 3);
    }

    #[test]
    fn seeded_vector_is_unit_and_reproducible() {
        let v = seeded_unit_vector(6, 42);
        assert!((v.norm() - 1.0).abs() < 1e-15);
        assert_eq!(v, seeded_unit_vector(6, 42));
        assert_ne!(v, seeded_unit_vector(6, 43));
    }

    #[test]
    fn experiment_from_minimal_config() {
        let cfg = parse_config(
            "problem.kind = laplacian1d\nproblem.n = 4\ndecomposition.kind = coordinate\nalgorithm.kind = random_index\nsteps = 4\nmaster_seed = 1",
        )
        .unwrap();
        let exp = Experiment::from_config(&cfg).unwrap();
        assert_eq!(exp.decomposition.len(), 4);
        assert_eq!(exp.u0, Vector::zeros(4));
        assert_eq!(exp.trials, DEFAULT_TRIALS);
        let w = seeded_unit_vector(4, 1);
        assert!((exp.system.exact_solution() - &w).amax() < 1e-14);
        assert_eq!(exp.sweep_order(), vec![0, 1, 2, 3]);
    }
}
