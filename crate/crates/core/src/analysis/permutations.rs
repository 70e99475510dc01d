use itertools::Itertools;
use log::warn;

use crate::analysis::spectral::a_operator_norm;
use crate::analysis::xz::NORM_SENTINEL;
use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::solvers::ssc_error_propagator;

/// Largest `J` whose `J!` sweep orders are enumerated by default.
pub const DEFAULT_FACTORIAL_J: usize = 8;

/// Rates of every sweep order, in lexicographic order of the permutations.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationRates {
    pub permutations: Vec<Vec<usize>>,
    /// `‖I − B_σ A‖²_A` per permutation.
    pub norms_sq: Vec<f64>,
    /// `c_σ = 1 / (1 − ‖I − B_σ A‖²_A)`, `+∞` for non-convergent sweeps.
    pub c_sigma: Vec<f64>,
    /// Average of `norms_sq`.
    pub mean: f64,
    /// `1 − (1/J!) Σ 1/c_σ` over the finite `c_σ`.
    pub mean_from_c: f64,
    /// `max_σ (1 − 1/c_σ)`.
    pub worst: f64,
    /// Whether every `c_σ` agrees to 1e-12 relative.
    pub all_equal: bool,
    /// Number of permutations excluded for a non-convergent sweep.
    pub excluded: usize,
}

pub fn permutation_expected_rate(d: &Decomposition, max_j: usize) -> Result<PermutationRates> {
    let j = d.len();
    if j > max_j {
        let count = (1..=j as u128).product::<u128>();
        let budget = (1..=max_j as u128).product::<u128>();
        return Err(Error::EnumerationTooLarge { paths: count, budget });
    }
    let mut permutations = Vec::new();
    let mut norms_sq = Vec::new();
    let mut c_sigma = Vec::new();
    let mut excluded = 0;
    for sigma in (0..j).permutations(j) {
        let norm = a_operator_norm(d.ambient(), &ssc_error_propagator(d, &sigma)?)?;
        let nsq = norm * norm;
        let c = if nsq >= 1.0 - NORM_SENTINEL {
            warn!("sweep order {sigma:?} does not converge (norm^2 = {nsq}); excluded from 1/c average");
            excluded += 1;
            f64::INFINITY
        } else {
            1.0 / (1.0 - nsq)
        };
        permutations.push(sigma);
        norms_sq.push(nsq);
        c_sigma.push(c);
    }
    let count = permutations.len() as f64;
    let mean = norms_sq.iter().sum::<f64>() / count;
    let inv_sum: f64 = c_sigma.iter().filter(|c| c.is_finite()).map(|c| 1.0 / c).sum();
    let mean_from_c = 1.0 - inv_sum / count;
    let worst = c_sigma.iter().map(|&c| 1.0 - 1.0 / c).fold(f64::NEG_INFINITY, f64::max);
    let c_max = c_sigma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let all_equal = c_sigma.iter().all(|&c| c == c_max || (c - c_max).abs() <= 1e-12 * c_max);
    Ok(PermutationRates { permutations, norms_sq, c_sigma, mean, mean_from_c, worst, all_equal, excluded })
}
