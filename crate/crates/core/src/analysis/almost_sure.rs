use crate::analysis::monte_carlo::{mean_and_std_error, simulate_trials};
use crate::analysis::oracle::{oracle_expected_energy, path_count};
use crate::decomposition::{subspace_contraction_factor, Decomposition};
use crate::error::{Error, Result};
use crate::problem::{LinearSystem, Vector};
use crate::solvers::{Algorithm, FaultModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSource {
    Oracle,
    MonteCarlo,
}

/// Empirical `P(‖e^k‖²_A ≥ ε)` against the Markov bound `E(‖e^k‖²_A) / ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmostSureReport {
    pub eps: f64,
    pub trials: usize,
    /// Every local solver contracts on its own subspace, the hypothesis of the
    /// almost-sure convergence results. Without it the report is advisory.
    pub hypothesis_holds: bool,
    pub exceedance: Vec<f64>,
    pub exceedance_std_error: Vec<f64>,
    pub markov_bound: Vec<f64>,
    pub bound_std_error: Vec<f64>,
    pub bound_source: BoundSource,
    /// `exceedance_k ≤ bound_k + 5 (se_exceedance_k + se_bound_k)` at every `k`.
    pub within_bound: bool,
    /// Fraction of trajectories whose energy never increases (up to rounding).
    pub nonincreasing_fraction: f64,
    /// `‖e^K‖²_A / ‖e⁰‖²_A` per trajectory, in trial order.
    pub final_relative_energy: Vec<f64>,
}

fn nonincreasing(energies: &[f64]) -> bool {
    let floor = 1e-24 * energies.first().copied().unwrap_or(0.0);
    energies.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10) + floor)
}

#[allow(clippy::too_many_arguments)]
pub fn almost_sure_diagnostics(
    d: &Decomposition,
    sys: &LinearSystem,
    u0: &Vector,
    steps: usize,
    trials: usize,
    master_seed: u64,
    fault: Option<&FaultModel>,
    eps: f64,
    path_budget: u128,
) -> Result<AlmostSureReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if trials < 2 {
        return Err(Error::TooFewTrials(trials));
    }
    let mut hypothesis_holds = true;
    for i in 0..d.len() {
        hypothesis_holds &= subspace_contraction_factor(d, i)? < 1.0;
    }
    let algorithm = match fault {
        Some(fm) => Algorithm::FaultTolerant(*fm),
        None => Algorithm::RandomIndex,
    };
    let records = simulate_trials(&algorithm, d, sys, u0, steps, trials, master_seed)?;
    let n = trials as f64;

    let mut exceedance = vec![0.0; steps + 1];
    for r in &records {
        for (x, &e) in exceedance.iter_mut().zip(&r.trace.energies) {
            if e >= eps {
                *x += 1.0;
            }
        }
    }
    exceedance.iter_mut().for_each(|x| *x /= n);
    let exceedance_std_error: Vec<f64> = exceedance.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();

    let (mean, bound_source, mean_se) = if path_count(d.len(), steps, fault.is_some()) <= path_budget {
        let oracle = oracle_expected_energy(d, sys, u0, steps, fault, path_budget)?;
        (oracle.expected_energy, BoundSource::Oracle, vec![0.0; steps + 1])
    } else {
        let rows: Vec<&[f64]> = records.iter().map(|r| r.trace.energies.as_slice()).collect();
        let (m, se) = mean_and_std_error(&rows);
        (m, BoundSource::MonteCarlo, se)
    };
    let markov_bound: Vec<f64> = mean.iter().map(|m| m / eps).collect();
    let bound_std_error: Vec<f64> = mean_se.iter().map(|s| s / eps).collect();
    let within_bound = (0..=steps).all(|k| {
        exceedance[k] <= markov_bound[k] + 5.0 * (exceedance_std_error[k] + bound_std_error[k])
    });
    let monotone = records.iter().filter(|r| nonincreasing(&r.trace.energies)).count();
    let final_relative_energy = records
        .iter()
        .map(|r| {
            let e = &r.trace.energies;
            if e[0] > 0.0 {
                e[steps] / e[0]
            } else {
                0.0
            }
        })
        .collect();
    Ok(AlmostSureReport {
        eps,
        trials,
        hypothesis_holds,
        exceedance,
        exceedance_std_error,
        markov_bound,
        bound_std_error,
        bound_source,
        within_bound,
        nonincreasing_fraction: monotone as f64 / n,
        final_relative_energy,
    })
}
