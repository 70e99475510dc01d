use rayon::prelude::*;

use crate::analysis::oracle::{EstimateKind, ExpectationReport, StateForms};
use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::problem::{LinearSystem, Vector};
use crate::solvers::{run_trajectory_observed, Algorithm, FaultModel, IterationTrace, RngStream};

/// Per-trajectory energies `‖e^k‖²_A` and `(B_a A e^k, e^k)_A`.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trace: IterationTrace,
    pub ba_energy: Vec<f64>,
}

/// Runs `trials` independent trajectories; trial `t` uses stream `(master_seed, t)`.
/// Trials run in parallel but the output is in trial order.
pub fn simulate_trials(
    algorithm: &Algorithm,
    d: &Decomposition,
    sys: &LinearSystem,
    u0: &Vector,
    steps: usize,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<TrialRecord>> {
    let forms = StateForms::new(d)?;
    let exact = sys.exact_solution();
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = RngStream::new(master_seed, t as u64);
            let mut ba_energy = Vec::with_capacity(steps + 1);
            let trace = run_trajectory_observed(algorithm, d, sys, u0, steps, &mut rng, |_, u, _| {
                ba_energy.push(StateForms::quad(&forms.ba, &(exact - u)));
            })?;
            Ok(TrialRecord { trace, ba_energy })
        })
        .collect()
}

/// Sample mean and standard error of the mean per step, summed in trial order. Sums are
/// taken about the first trial's value so a constant column has exactly zero spread.
pub(crate) fn mean_and_std_error(rows: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let Some(first) = rows.first() else {
        return (Vec::new(), Vec::new());
    };
    let width = first.len();
    let mut shift_sum = vec![0.0; width];
    for row in rows {
        for ((s, x), x0) in shift_sum.iter_mut().zip(row.iter()).zip(first.iter()) {
            *s += x - x0;
        }
    }
    let shift_mean: Vec<f64> = shift_sum.iter().map(|s| s / n).collect();
    let mut var = vec![0.0; width];
    for row in rows {
        for (((v, x), x0), m) in var.iter_mut().zip(row.iter()).zip(first.iter()).zip(&shift_mean) {
            let d = (x - x0) - m;
            *v += d * d;
        }
    }
    let mean = first.iter().zip(&shift_mean).map(|(x0, m)| x0 + m).collect();
    let se = var.iter().map(|v| (v / (n - 1.0) / n).sqrt()).collect();
    (mean, se)
}

/// Monte Carlo estimate for any randomized algorithm. For the sweep-based permutation
/// variant the per-step identity does not apply and its columns are left NaN.
pub fn monte_carlo_report(
    algorithm: &Algorithm,
    d: &Decomposition,
    sys: &LinearSystem,
    u0: &Vector,
    steps: usize,
    trials: usize,
    master_seed: u64,
) -> Result<ExpectationReport> {
    if trials < 2 {
        return Err(Error::TooFewTrials(trials));
    }
    let records = simulate_trials(algorithm, d, sys, u0, steps, trials, master_seed)?;
    let energies: Vec<&[f64]> = records.iter().map(|r| r.trace.energies.as_slice()).collect();
    let bas: Vec<&[f64]> = records.iter().map(|r| r.ba_energy.as_slice()).collect();
    let (energy, se) = mean_and_std_error(&energies);
    let (ba, _) = mean_and_std_error(&bas);
    let theta = algorithm.fault_model().map_or(0.0, |f| f.theta());
    let identity_applies = matches!(algorithm, Algorithm::RandomIndex | Algorithm::FaultTolerant(_));
    Ok(ExpectationReport::from_moments(
        EstimateKind::MonteCarlo { trials },
        d.len(),
        theta,
        identity_applies,
        energy,
        ba,
        Some(se),
        None,
    ))
}

/// Monte Carlo estimate of `E(‖e^k‖²_A)` for single random corrections, with optional
/// faults.
pub fn monte_carlo_expected_energy(
    d: &Decomposition,
    sys: &LinearSystem,
    u0: &Vector,
    steps: usize,
    trials: usize,
    master_seed: u64,
    fault: Option<&FaultModel>,
) -> Result<ExpectationReport> {
    let algorithm = match fault {
        Some(fm) => Algorithm::FaultTolerant(*fm),
        None => Algorithm::RandomIndex,
    };
    monte_carlo_report(&algorithm, d, sys, u0, steps, trials, master_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::oracle::{oracle_expected_energy, DEFAULT_PATH_BUDGET};
    use crate::problem::{build_laplacian_1d, SpdOperator};
    use nalgebra::dvector;

    #[test]
    fn shifted_moments_match_two_pass() {
        let a = [3.0, 1.0, 4.0, 1.0, 5.0];
        let b = [2.0, 2.0, 2.0, 2.0, 2.0];
        let rows: Vec<Vec<f64>> = a.iter().zip(&b).map(|(&x, &y)| vec![x, y]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let (mean, se) = mean_and_std_error(&refs);
        let m = a.iter().sum::<f64>() / 5.0;
        let var = a.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
        assert!((mean[0] - m).abs() < 1e-15);
        assert!((se[0] - (var / 5.0).sqrt()).abs() < 1e-15);
        assert_eq!((mean[1], se[1]), (2.0, 0.0));
    }

    #[test]
    fn requires_two_trials() {
        let a = build_laplacian_1d(2).unwrap();
        let d = Decomposition::coordinate(a.clone()).unwrap();
        let sys = LinearSystem::new(a, dvector![1.0, 0.0]).unwrap();
        let err = monte_carlo_expected_energy(&d, &sys, &Vector::zeros(2), 2, 1, 0, None).unwrap_err();
        assert_eq!(err, Error::TooFewTrials(1));
    }

    #[test]
    fn identical_trajectories_have_zero_error_bar() {
        let a = build_laplacian_1d(3).unwrap();
        let d = Decomposition::blocks(a.clone(), &[vec![0, 1, 2]]).unwrap();
        let sys = LinearSystem::new(a, dvector![1.0, 0.0, 1.0]).unwrap();
        let r = monte_carlo_expected_energy(&d, &sys, &Vector::zeros(3), 3, 50, 4, None).unwrap();
        assert!(r.std_error.as_ref().unwrap().iter().all(|&s| s == 0.0));
        let mut rng = RngStream::new(4, 0);
        let single = crate::solvers::run_trajectory(&Algorithm::RandomIndex, &d, &sys, &Vector::zeros(3), 3, &mut rng)
            .unwrap();
        assert_eq!(r.expected_energy, single.energies);
    }

    #[test]
    fn agrees_with_oracle_on_identity() {
        let a = SpdOperator::identity(2).unwrap();
        let d = Decomposition::coordinate(a.clone()).unwrap();
        let sys = LinearSystem::with_solution(a, dvector![1.0, 1.0]).unwrap();
        let u0 = Vector::zeros(2);
        let oracle = oracle_expected_energy(&d, &sys, &u0, 2, None, DEFAULT_PATH_BUDGET).unwrap();
        let mc = monte_carlo_expected_energy(&d, &sys, &u0, 2, 100_000, 12, None).unwrap();
        let se = mc.std_error.as_ref().unwrap();
        for ((m, o), s) in mc.expected_energy.iter().zip(&oracle.expected_energy).zip(se) {
            assert!((m - o).abs() <= 5.0 * s);
        }
        let again = monte_carlo_expected_energy(&d, &sys, &u0, 2, 100_000, 12, None).unwrap();
        assert_eq!(mc, again);
    }
}
