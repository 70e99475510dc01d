//! Spectral quantities, exact expectation oracles and Monte Carlo estimators for the
//! randomized correction methods.

mod almost_sure;
mod markov;
mod monte_carlo;
mod oracle;
mod permutations;
mod spectral;
mod xz;

pub use almost_sure::{almost_sure_diagnostics, AlmostSureReport, BoundSource};
pub use markov::{check_against_oracle, identity_decrement, markov_chain, MarkovChain, MarkovConsistency};
pub use monte_carlo::{monte_carlo_expected_energy, monte_carlo_report, simulate_trials, TrialRecord};
pub use oracle::{
    enumerate_paths, oracle_expected_energy, oracle_from_error, path_count, EstimateKind, ExpectationReport,
    PathState, DEFAULT_PATH_BUDGET,
};
pub use permutations::{permutation_expected_rate, PermutationRates, DEFAULT_FACTORIAL_J};
pub use spectral::{a_operator_norm, generalized_eigenvalues, spectrum_of_ba_a, SpectrumSummary};
pub use xz::{xz_c1_from_norm, xz_c1_supinf_exact, XzConstants, DEFAULT_STACKED_DIM_BUDGET, NORM_SENTINEL};

/// `(1 − λ/J)^J`, the energy reduction bound over `J` random corrections.
pub fn sweep_bound(lambda_min: f64, subspaces: usize) -> f64 {
    (1.0 - lambda_min / subspaces as f64).powi(subspaces as i32)
}

/// As [`sweep_bound`] with each correction rejected with probability `theta`.
pub fn fault_sweep_bound(lambda_min: f64, subspaces: usize, theta: f64) -> f64 {
    (1.0 - (1.0 - theta) * lambda_min / subspaces as f64).powi(subspaces as i32)
}
