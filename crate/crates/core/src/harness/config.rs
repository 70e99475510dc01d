//! Flat `section.key = value` experiment configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! line    := blank | comment | entry
//! comment := '#' anything
//! entry   := key '=' value [comment]
//! key     := ident ('.' ident)?
//! value   := number | ident | list | list (',' list)*
//! list    := '[' integer (',' integer)* ']'
//! ```
//!
//! Subspace and index lists are one-based, matching the usual `{1, …, J}` labelling.

use std::collections::BTreeMap;
use std::fmt;

use crate::analysis::{DEFAULT_FACTORIAL_J, DEFAULT_PATH_BUDGET};
use crate::decomposition::SolverKind;
use crate::solvers::validate_permutation;

pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_CONDITION_TARGET: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, key: &str, message: impl Into<String>) -> Self {
        Self { line: Some(line), key: key.to_string(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.key, self.message),
            None => write!(f, "`{}`: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Laplacian1d { n: usize },
    Laplacian2d { m: usize },
    RandomSpd { n: usize, seed: u64, condition_target: f64 },
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match *self {
            ProblemSpec::Laplacian1d { n } | ProblemSpec::RandomSpd { n, .. } => n,
            ProblemSpec::Laplacian2d { m } => m * m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecompositionSpec {
    Coordinate,
    /// Zero-based index blocks.
    Blocks(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    Psc,
    Ssc,
    RandomIndex,
    RandomPermutation,
    FaultTolerant,
}

impl AlgorithmKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "psc" => Self::Psc,
            "ssc" => Self::Ssc,
            "random_index" => Self::RandomIndex,
            "random_permutation" => Self::RandomPermutation,
            "fault_tolerant" => Self::FaultTolerant,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub decomposition: DecompositionSpec,
    pub solver: SolverKind,
    pub algorithm: AlgorithmKind,
    /// Zero-based sweep order for `ssc`; `None` means the natural order.
    pub order: Option<Vec<usize>>,
    pub steps: usize,
    pub theta: Option<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub path_budget: u128,
    pub factorial_j: usize,
    pub eps: Option<f64>,
}

impl ExperimentConfig {
    /// Number of subspaces the decomposition will have.
    pub fn subspace_count(&self) -> usize {
        match &self.decomposition {
            DecompositionSpec::Coordinate => self.problem.dim(),
            DecompositionSpec::Blocks(b) => b.len(),
        }
    }

    /// Sweep order used by `ssc` and by sweep-level checks.
    pub fn sweep_order(&self) -> Vec<usize> {
        self.order.clone().unwrap_or_else(|| (0..self.subspace_count()).collect())
    }

    pub fn set_trials(&mut self, trials: usize) -> Result<(), ConfigError> {
        if trials < 2 {
            return Err(ConfigError { line: None, key: "trials".into(), message: "must be at least 2".into() });
        }
        self.trials = trials;
        Ok(())
    }
}

const KNOWN_KEYS: &[&str] = &[
    "problem.kind",
    "problem.n",
    "problem.m",
    "problem.seed",
    "problem.condition_target",
    "decomposition.kind",
    "decomposition.blocks",
    "solver.kind",
    "solver.omega",
    "algorithm.kind",
    "algorithm.order",
    "algorithm.sampling",
    "steps",
    "theta",
    "trials",
    "master_seed",
    "budgets.paths",
    "budgets.factorial_j",
    "eps",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|(l, _)| *l)
    }

    fn required(&mut self, key: &str) -> Result<(usize, String), ConfigError> {
        self.take(key).ok_or_else(|| ConfigError {
            line: None,
            key: key.to_string(),
            message: "required key is missing".into(),
        })
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| ConfigError::at(line, key, format!("expected {what}, found `{v}`"))),
        }
    }

    fn forbid(&self, key: &str, reason: &str) -> Result<(), ConfigError> {
        match self.line_of(key) {
            Some(line) => Err(ConfigError::at(line, key, format!("not allowed {reason}"))),
            None => Ok(()),
        }
    }
}

fn parse_list(line: usize, key: &str, text: &str) -> Result<Vec<usize>, ConfigError> {
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| ConfigError::at(line, key, format!("expected a bracketed integer list, found `{text}`")))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| ConfigError::at(line, key, format!("expected an integer, found `{}`", t.trim())))
        })
        .collect()
}

/// `[1,2],[2,3]` into its bracketed lists.
fn parse_list_of_lists(line: usize, key: &str, text: &str) -> Result<Vec<Vec<usize>>, ConfigError> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let close = rest
            .find(']')
            .ok_or_else(|| ConfigError::at(line, key, "unterminated list"))?;
        out.push(parse_list(line, key, &rest[..=close])?);
        rest = rest[close + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
            if rest.is_empty() {
                return Err(ConfigError::at(line, key, "trailing comma"));
            }
        } else if !rest.is_empty() {
            return Err(ConfigError::at(line, key, format!("unexpected `{rest}`")));
        }
    }
    if out.is_empty() {
        return Err(ConfigError::at(line, key, "at least one block is required"));
    }
    Ok(out)
}

fn to_zero_based(line: usize, key: &str, list: Vec<usize>, upper: usize) -> Result<Vec<usize>, ConfigError> {
    list.into_iter()
        .map(|i| {
            if i == 0 || i > upper {
                Err(ConfigError::at(line, key, format!("index {i} outside 1..={upper}")))
            } else {
                Ok(i - 1)
            }
        })
        .collect()
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line, content, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError::at(line, key, "unknown key"));
        }
        if value.is_empty() {
            return Err(ConfigError::at(line, key, "missing value"));
        }
        if let Some((first, _)) = map.get(key) {
            return Err(ConfigError::at(line, key, format!("duplicate key (lines {first} and {line})")));
        }
        map.insert(key.to_string(), (line, value.to_string()));
    }
    Ok(Entries { map })
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut e = tokenize(text)?;

    let (line, kind) = e.required("problem.kind")?;
    let problem = match kind.as_str() {
        "laplacian1d" | "randomspd" => {
            e.forbid("problem.m", "for this problem kind (use problem.n)")?;
            let n_line = e.line_of("problem.n");
            let n: usize = e.parsed("problem.n", "a positive integer")?.ok_or_else(|| ConfigError {
                line: Some(line),
                key: "problem.n".into(),
                message: "required for this problem kind".into(),
            })?;
            if n == 0 {
                return Err(ConfigError::at(n_line.unwrap_or(line), "problem.n", "must be at least 1"));
            }
            if kind == "laplacian1d" {
                e.forbid("problem.seed", "for laplacian1d")?;
                e.forbid("problem.condition_target", "for laplacian1d")?;
                ProblemSpec::Laplacian1d { n }
            } else {
                let seed = e.parsed("problem.seed", "a 64-bit unsigned integer")?.unwrap_or(0);
                let ct_line = e.line_of("problem.condition_target");
                let condition_target =
                    e.parsed("problem.condition_target", "a real number")?.unwrap_or(DEFAULT_CONDITION_TARGET);
                if !(condition_target > 1.0) || !f64::is_finite(condition_target) {
                    return Err(ConfigError::at(
                        ct_line.unwrap_or(line),
                        "problem.condition_target",
                        "must be a finite real > 1",
                    ));
                }
                ProblemSpec::RandomSpd { n, seed, condition_target }
            }
        }
        "laplacian2d" => {
            e.forbid("problem.n", "for laplacian2d (use problem.m)")?;
            e.forbid("problem.seed", "for laplacian2d")?;
            e.forbid("problem.condition_target", "for laplacian2d")?;
            let m_line = e.line_of("problem.m");
            let m: usize = e.parsed("problem.m", "a positive integer")?.ok_or_else(|| ConfigError {
                line: Some(line),
                key: "problem.m".into(),
                message: "required for laplacian2d".into(),
            })?;
            if m == 0 {
                return Err(ConfigError::at(m_line.unwrap_or(line), "problem.m", "must be at least 1"));
            }
            ProblemSpec::Laplacian2d { m }
        }
        other => {
            return Err(ConfigError::at(
                line,
                "problem.kind",
                format!("expected laplacian1d, laplacian2d or randomspd, found `{other}`"),
            ))
        }
    };
    let n = problem.dim();

    let (line, kind) = e.required("decomposition.kind")?;
    let decomposition = match kind.as_str() {
        "coordinate" => {
            e.forbid("decomposition.blocks", "unless decomposition.kind = blocks")?;
            DecompositionSpec::Coordinate
        }
        "blocks" => {
            let (bl, text) = e.take("decomposition.blocks").ok_or_else(|| {
                ConfigError::at(line, "decomposition.blocks", "required when decomposition.kind = blocks")
            })?;
            let blocks = parse_list_of_lists(bl, "decomposition.blocks", &text)?
                .into_iter()
                .map(|b| {
                    if b.is_empty() {
                        return Err(ConfigError::at(bl, "decomposition.blocks", "empty block"));
                    }
                    to_zero_based(bl, "decomposition.blocks", b, n)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut covered = vec![false; n];
            blocks.iter().flatten().for_each(|&i| covered[i] = true);
            if let Some(k) = covered.iter().position(|c| !c) {
                return Err(ConfigError::at(bl, "decomposition.blocks", format!("index {} is not covered", k + 1)));
            }
            DecompositionSpec::Blocks(blocks)
        }
        other => {
            return Err(ConfigError::at(
                line,
                "decomposition.kind",
                format!("expected coordinate or blocks, found `{other}`"),
            ))
        }
    };
    let j = match &decomposition {
        DecompositionSpec::Coordinate => n,
        DecompositionSpec::Blocks(b) => b.len(),
    };

    let solver = match e.take("solver.kind") {
        None => {
            e.forbid("solver.omega", "unless solver.kind = richardson")?;
            SolverKind::Exact
        }
        Some((line, kind)) => match kind.as_str() {
            "exact" => {
                e.forbid("solver.omega", "unless solver.kind = richardson")?;
                SolverKind::Exact
            }
            "richardson" => {
                let ol = e.line_of("solver.omega").unwrap_or(line);
                let omega: f64 = e
                    .parsed("solver.omega", "a real number")?
                    .ok_or_else(|| ConfigError::at(line, "solver.omega", "required when solver.kind = richardson"))?;
                if !(omega > 0.0 && omega < 2.0) {
                    return Err(ConfigError::at(
                        ol,
                        "solver.omega",
                        format!("{omega} is outside the open interval (0, 2) where the local solver contracts"),
                    ));
                }
                SolverKind::ScaledRichardson { omega }
            }
            other => {
                return Err(ConfigError::at(line, "solver.kind", format!("expected exact or richardson, found `{other}`")))
            }
        },
    };

    let (line, kind) = e.required("algorithm.kind")?;
    let algorithm = AlgorithmKind::parse(&kind).ok_or_else(|| {
        ConfigError::at(
            line,
            "algorithm.kind",
            format!("expected psc, ssc, random_index, random_permutation or fault_tolerant, found `{kind}`"),
        )
    })?;
    if let Some((sl, sampling)) = e.take("algorithm.sampling") {
        if sampling != "uniform" {
            return Err(ConfigError::at(sl, "algorithm.sampling", "only `uniform` index sampling is supported"));
        }
    }
    let order = match e.take("algorithm.order") {
        None => None,
        Some((ol, text)) => {
            if algorithm != AlgorithmKind::Ssc {
                return Err(ConfigError::at(ol, "algorithm.order", "only allowed for algorithm.kind = ssc"));
            }
            let order = to_zero_based(ol, "algorithm.order", parse_list(ol, "algorithm.order", &text)?, j)?;
            validate_permutation(&order, j).map_err(|err| ConfigError::at(ol, "algorithm.order", err.to_string()))?;
            Some(order)
        }
    };

    let theta = match e.take("theta") {
        None => {
            if algorithm == AlgorithmKind::FaultTolerant {
                return Err(ConfigError { line: None, key: "theta".into(), message: "required for fault_tolerant".into() });
            }
            None
        }
        Some((tl, text)) => {
            if algorithm != AlgorithmKind::FaultTolerant {
                return Err(ConfigError::at(tl, "theta", "only allowed for algorithm.kind = fault_tolerant"));
            }
            let theta: f64 =
                text.parse().map_err(|_| ConfigError::at(tl, "theta", format!("expected a real number, found `{text}`")))?;
            if !(0.0..1.0).contains(&theta) {
                return Err(ConfigError::at(
                    tl,
                    "theta",
                    format!("{theta} is outside [0, 1); the fault probability must be strictly below one"),
                ));
            }
            Some(theta)
        }
    };

    let steps: usize = e
        .parsed("steps", "a non-negative integer")?
        .ok_or_else(|| ConfigError { line: None, key: "steps".into(), message: "required key is missing".into() })?;

    let trials_line = e.line_of("trials");
    let trials: usize = e.parsed("trials", "an integer")?.unwrap_or(DEFAULT_TRIALS);
    if trials < 2 {
        return Err(ConfigError::at(trials_line.unwrap_or(0), "trials", "must be at least 2"));
    }
    let master_seed: u64 = e.parsed("master_seed", "a 64-bit unsigned integer")?.unwrap_or(0);

    let pl = e.line_of("budgets.paths");
    let path_budget: u128 = e.parsed("budgets.paths", "a positive integer")?.unwrap_or(DEFAULT_PATH_BUDGET);
    if path_budget == 0 {
        return Err(ConfigError::at(pl.unwrap_or(0), "budgets.paths", "must be positive"));
    }
    let fl = e.line_of("budgets.factorial_j");
    let factorial_j: usize = e.parsed("budgets.factorial_j", "a positive integer")?.unwrap_or(DEFAULT_FACTORIAL_J);
    if factorial_j == 0 {
        return Err(ConfigError::at(fl.unwrap_or(0), "budgets.factorial_j", "must be positive"));
    }
    let el = e.line_of("eps");
    let eps: Option<f64> = e.parsed("eps", "a real number")?;
    if let Some(x) = eps {
        if !(x > 0.0) || !x.is_finite() {
            return Err(ConfigError::at(el.unwrap_or(0), "eps", "must be a finite positive real"));
        }
    }

    Ok(ExperimentConfig {
        problem,
        decomposition,
        solver,
        algorithm,
        order,
        steps,
        theta,
        trials,
        master_seed,
        path_budget,
        factorial_j,
        eps,
    })
}
