use std::fmt::Write;

use crate::analysis::{
    check_against_oracle, fault_sweep_bound, markov_chain, oracle_expected_energy, permutation_expected_rate,
    spectrum_of_ba_a, sweep_bound, xz_c1_from_norm, xz_c1_supinf_exact, almost_sure_diagnostics,
    DEFAULT_STACKED_DIM_BUDGET,
};
use crate::decomposition::Decomposition;
use crate::error::Error;
use crate::harness::csv::{format_real, CsvTrace};
use crate::harness::{ExitStatus, Experiment, ExperimentConfig, HarnessResult};
use crate::problem::Matrix;
use crate::solvers::{psc_operator, run_trajectory, RngStream};

pub const IDENTITY_TOLERANCE: f64 = 1e-10;
pub const SPECTRUM_TOLERANCE: f64 = 1e-9;
pub const PERMUTATION_TOLERANCE: f64 = 1e-12;
pub const SWEEP_CONSTANT_TOLERANCE: f64 = 1e-8;
pub const TRANSITION_TOLERANCE: f64 = 1e-15;
pub const MARKOV_TOLERANCE: f64 = 1e-12;
pub const STRUCTURE_TOLERANCE: f64 = 1e-12;

pub fn cmd_run(cfg: &ExperimentConfig) -> HarnessResult<CsvTrace> {
    run_experiment(&Experiment::from_config(cfg)?)
}

/// Monte Carlo estimate for randomized algorithms, the single trajectory otherwise.
pub fn run_experiment(exp: &Experiment) -> HarnessResult<CsvTrace> {
    let d = &exp.decomposition;
    if exp.algorithm.is_randomized() {
        let report = crate::analysis::monte_carlo_report(
            &exp.algorithm,
            d,
            &exp.system,
            &exp.u0,
            exp.steps,
            exp.trials,
            exp.master_seed,
        )?;
        Ok(CsvTrace::from_report(&report))
    } else {
        let mut rng = RngStream::new(exp.master_seed, 0);
        let trace = run_trajectory(&exp.algorithm, d, &exp.system, &exp.u0, exp.steps, &mut rng)?;
        Ok(CsvTrace::from_energies(&trace.energies))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub measured: Option<f64>,
    pub tolerance: String,
}

impl CheckResult {
    fn at_most(name: &'static str, measured: f64, tol: f64) -> Self {
        let status = if measured <= tol { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { name, status, measured: Some(measured), tolerance: format!("<= {tol:e}") }
    }

    fn below(name: &'static str, measured: f64, limit: f64) -> Self {
        let status = if measured < limit { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { name, status, measured: Some(measured), tolerance: format!("< {limit}") }
    }

    fn skipped(name: &'static str, reason: impl Into<String>) -> Self {
        Self { name, status: CheckStatus::Skipped(reason.into()), measured: None, tolerance: String::new() }
    }

    fn failed(name: &'static str, reason: impl std::fmt::Display) -> Self {
        Self { name, status: CheckStatus::Fail, measured: None, tolerance: format!("error: {reason}") }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub subspaces: usize,
    pub steps: usize,
    pub theta: f64,
    pub checks: Vec<CheckResult>,
    /// Informational lines; they never affect the exit status.
    pub notes: Vec<String>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn exit_status(&self) -> ExitStatus {
        if self.all_pass() {
            ExitStatus::Success
        } else {
            ExitStatus::CheckFailure
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "subspaces J = {}, steps K = {}, theta = {}", self.subspaces, self.steps, self.theta).unwrap();
        writeln!(out, "{:<50} {:<8} {:<24} tolerance", "check", "status", "measured").unwrap();
        for c in &self.checks {
            let measured = c.measured.map(format_real).unwrap_or_default();
            match &c.status {
                CheckStatus::Skipped(reason) => {
                    writeln!(out, "{:<50} SKIPPED  ({reason})", c.name).unwrap();
                }
                s => {
                    let label = if *s == CheckStatus::Pass { "PASS" } else { "FAIL" };
                    writeln!(out, "{:<50} {label:<8} {measured:<24} {}", c.name, c.tolerance).unwrap();
                }
            }
        }
        for note in &self.notes {
            writeln!(out, "note: {note}").unwrap();
        }
        let failed = self.checks.iter().filter(|c| c.status == CheckStatus::Fail).count();
        writeln!(out, "{}", if failed == 0 { "all checks passed".to_string() } else { format!("{failed} check(s) failed") })
            .unwrap();
        out
    }
}

pub fn cmd_verify(cfg: &ExperimentConfig) -> HarnessResult<VerifyReport> {
    verify_experiment(&Experiment::from_config(cfg)?)
}

fn rel_defect(lhs: &Matrix, rhs: &Matrix) -> f64 {
    (lhs - rhs).amax() / rhs.amax().max(lhs.amax()).max(f64::MIN_POSITIVE)
}

/// Largest relative defect of the subspace operator identities over all subspaces.
fn structural_defect(d: &Decomposition) -> Result<f64, Error> {
    let a = d.ambient().matrix();
    let mut worst = 0.0_f64;
    let mut tbar_sum = Matrix::zeros(d.dim(), d.dim());
    for i in 0..d.len() {
        let ops = d.operators(i)?;
        worst = worst.max(rel_defect(&(&ops.a_local * &ops.p), &(&ops.q * a)));
        if d.solvers()[i].is_exact() {
            worst = worst.max(rel_defect(&(&ops.t * &ops.t), &ops.t));
            let at = a * &ops.t;
            worst = worst.max(rel_defect(&at, &at.transpose()));
        }
        tbar_sum += a * &ops.t_bar;
    }
    let ba = a * psc_operator(d, true) * a;
    Ok(worst.max(rel_defect(&ba, &tbar_sum)))
}

/// Every identity check that the configured decomposition supports.
pub fn verify_experiment(exp: &Experiment) -> HarnessResult<VerifyReport> {
    let d = &exp.decomposition;
    let j = d.len();
    let fault = exp.fault_model();
    let oracle = oracle_expected_energy(d, &exp.system, &exp.u0, exp.steps, fault.as_ref(), exp.path_budget)?;
    let spectrum = spectrum_of_ba_a(d)?;
    let mut checks = Vec::new();

    checks.push(CheckResult::at_most("expected energy decay identity", oracle.max_discrepancy, IDENTITY_TOLERANCE));

    let deltas: Vec<f64> = oracle.delta.iter().copied().filter(|x| x.is_finite()).collect();
    let violation = deltas
        .iter()
        .map(|&x| (spectrum.lambda_min - x).max(x - spectrum.lambda_max).max(0.0))
        .fold(0.0, f64::max);
    checks.push(CheckResult::at_most("delta_k within spectrum of B_a A", violation, SPECTRUM_TOLERANCE));
    let max_delta = deltas.iter().copied().fold(0.0, f64::max);
    checks.push(CheckResult::below("delta_k below J", max_delta, j as f64));

    match &oracle.corollary_delta {
        Some(cor) => {
            let gap = oracle
                .delta
                .iter()
                .zip(cor)
                .filter(|(x, _)| x.is_finite())
                .map(|(x, c)| (x - c).abs() / x.abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            checks.push(CheckResult::at_most("delta_k projection form", gap, IDENTITY_TOLERANCE));
        }
        None => checks.push(CheckResult::skipped("delta_k projection form", "requires exact local solvers")),
    }

    match permutation_expected_rate(d, exp.factorial_j) {
        Ok(rates) => {
            checks.push(CheckResult::at_most(
                "sweep-order mean identity",
                (rates.mean - rates.mean_from_c).abs(),
                PERMUTATION_TOLERANCE,
            ));
            checks.push(CheckResult::at_most(
                "sweep-order mean below worst order",
                (rates.mean - rates.worst).max(0.0),
                PERMUTATION_TOLERANCE,
            ));
        }
        Err(Error::EnumerationTooLarge { .. }) => {
            let reason = format!("J = {j} exceeds budgets.factorial_j = {}", exp.factorial_j);
            checks.push(CheckResult::skipped("sweep-order mean identity", reason.clone()));
            checks.push(CheckResult::skipped("sweep-order mean below worst order", reason));
        }
        Err(e) => return Err(e.into()),
    }

    let order = exp.sweep_order();
    let stacked: usize = d.subspaces().iter().map(|s| s.dim()).sum();
    if !d.all_exact() {
        checks.push(CheckResult::skipped("sweep constant cross-validation", "requires exact local solvers"));
    } else if stacked > DEFAULT_STACKED_DIM_BUDGET {
        checks.push(CheckResult::skipped(
            "sweep constant cross-validation",
            format!("stacked dimension {stacked} exceeds {DEFAULT_STACKED_DIM_BUDGET}"),
        ));
    } else {
        let pair = xz_c1_from_norm(d, &order)
            .and_then(|n| xz_c1_supinf_exact(d, &order, DEFAULT_STACKED_DIM_BUDGET).map(|v| (n.c1, v)));
        checks.push(match pair {
            Ok((c_norm, c_var)) => {
                CheckResult::at_most("sweep constant cross-validation", (c_norm - c_var).abs() / c_norm, SWEEP_CONSTANT_TOLERANCE)
            }
            Err(e) => CheckResult::failed("sweep constant cross-validation", e),
        });
    }

    let chain = markov_chain(j)?;
    checks.push(CheckResult::at_most(
        "markov transition matrix",
        chain.row_sum_defect().max(chain.idempotence_defect()),
        TRANSITION_TOLERANCE,
    ));
    let e0 = exp.system.exact_solution() - &exp.u0;
    let mc = check_against_oracle(&chain, d, &e0, exp.steps, exp.path_budget)?;
    checks.push(CheckResult::at_most(
        "markov conditional expectation",
        mc.max_state_discrepancy.max(mc.max_level_discrepancy),
        MARKOV_TOLERANCE,
    ));

    let lambda = spectrum.lambda_min;
    checks.push(CheckResult::at_most(
        "sweep bound below exp(-lambda_min)",
        sweep_bound(lambda, j) - (-lambda).exp(),
        0.0,
    ));
    let theta = oracle.theta;
    checks.push(CheckResult::at_most(
        "fault sweep bound below exp((theta-1)lambda_min)",
        fault_sweep_bound(lambda, j, theta) - ((theta - 1.0) * lambda).exp(),
        0.0,
    ));

    checks.push(CheckResult::at_most("subspace operator identities", structural_defect(d)?, STRUCTURE_TOLERANCE));

    match exp.eps {
        None => {
            checks.push(CheckResult::skipped("exceedance within markov bound", "eps not configured"));
            checks.push(CheckResult::skipped("energy nonincreasing on every trajectory", "eps not configured"));
        }
        Some(eps) => {
            let r = almost_sure_diagnostics(
                d,
                &exp.system,
                &exp.u0,
                exp.steps,
                exp.trials,
                exp.master_seed,
                fault.as_ref(),
                eps,
                exp.path_budget,
            )?;
            let worst = (0..=exp.steps)
                .map(|k| {
                    r.exceedance[k] - r.markov_bound[k] - 5.0 * (r.exceedance_std_error[k] + r.bound_std_error[k])
                })
                .fold(f64::NEG_INFINITY, f64::max);
            checks.push(CheckResult::at_most("exceedance within markov bound", worst, 0.0));
            checks.push(CheckResult::at_most(
                "energy nonincreasing on every trajectory",
                1.0 - r.nonincreasing_fraction,
                0.0,
            ));
        }
    }

    let mut notes = Vec::new();
    let sweeps = exp.steps / j;
    if sweeps > 0 {
        // E_{mJ} against exp(−m (1−θ) λ_min) E_0 over whole sweeps; observed, not asserted.
        let e = &oracle.expected_energy;
        let worst = (1..=sweeps)
            .map(|m| e[m * j] / ((-(m as f64) * (1.0 - theta) * lambda).exp() * e[0]))
            .fold(0.0, f64::max);
        notes.push(format!(
            "per-sweep exponential decay E_mJ / (exp(-m(1-theta)lambda_min) E_0), worst over {sweeps} sweep(s): {}",
            format_real(worst)
        ));
    }

    Ok(VerifyReport { subspaces: j, steps: exp.steps, theta, checks, notes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumReport {
    pub subspaces: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `(1 − λ_min/J)^J`.
    pub sweep_bound: f64,
    /// `exp(−λ_min)`.
    pub exp_bound: f64,
    pub theta: Option<f64>,
    /// `(1 − (1 − θ)λ_min/J)^J`.
    pub fault_sweep_bound: Option<f64>,
    /// `exp((θ − 1)λ_min)`.
    pub fault_exp_bound: Option<f64>,
}

impl SpectrumReport {
    pub fn bounds_hold(&self) -> bool {
        let fault_ok = match (self.fault_sweep_bound, self.fault_exp_bound) {
            (Some(s), Some(e)) => s <= e,
            _ => true,
        };
        self.sweep_bound <= self.exp_bound && fault_ok
    }

    pub fn exit_status(&self) -> ExitStatus {
        if self.bounds_hold() {
            ExitStatus::Success
        } else {
            ExitStatus::CheckFailure
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "subspaces = {}", self.subspaces).unwrap();
        writeln!(out, "lambda_min = {}", format_real(self.lambda_min)).unwrap();
        writeln!(out, "lambda_max = {}", format_real(self.lambda_max)).unwrap();
        writeln!(out, "sweep_bound = {}", format_real(self.sweep_bound)).unwrap();
        writeln!(out, "exp_bound = {}", format_real(self.exp_bound)).unwrap();
        writeln!(out, "sweep_bound <= exp_bound: {}", self.sweep_bound <= self.exp_bound).unwrap();
        if let (Some(theta), Some(s), Some(e)) = (self.theta, self.fault_sweep_bound, self.fault_exp_bound) {
            writeln!(out, "theta = {theta}").unwrap();
            writeln!(out, "fault_sweep_bound = {}", format_real(s)).unwrap();
            writeln!(out, "fault_exp_bound = {}", format_real(e)).unwrap();
            writeln!(out, "fault_sweep_bound <= fault_exp_bound: {}", s <= e).unwrap();
        }
        out
    }
}

pub fn cmd_spectrum(cfg: &ExperimentConfig) -> HarnessResult<SpectrumReport> {
    spectrum_report(&Experiment::from_config(cfg)?)
}

pub fn spectrum_report(exp: &Experiment) -> HarnessResult<SpectrumReport> {
    let d = &exp.decomposition;
    let j = d.len();
    let s = spectrum_of_ba_a(d)?;
    let theta = exp.fault_model().map(|f| f.theta());
    Ok(SpectrumReport {
        subspaces: j,
        lambda_min: s.lambda_min,
        lambda_max: s.lambda_max,
        sweep_bound: sweep_bound(s.lambda_min, j),
        exp_bound: (-s.lambda_min).exp(),
        theta,
        fault_sweep_bound: theta.map(|t| fault_sweep_bound(s.lambda_min, j, t)),
        fault_exp_bound: theta.map(|t| ((t - 1.0) * s.lambda_min).exp()),
    })
}
