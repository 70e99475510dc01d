//! The index sequence of single random corrections as a Markov chain on `{0, …, J−1}`.

use crate::analysis::oracle::{enumerate_paths, oracle_from_error, StateForms};
use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::problem::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    transition: Matrix,
}

impl MarkovChain {
    /// Uniform chain `P = (1/J) 𝟙𝟙ᵀ`.
    pub fn uniform(states: usize) -> Result<Self> {
        if states == 0 {
            return Err(Error::InvalidDimension { what: "markov chain", value: 0 });
        }
        let p = 1.0 / states as f64;
        Ok(Self { transition: Matrix::from_element(states, states, p) })
    }

    pub fn states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn power(&self, n: u32) -> Matrix {
        let s = self.states();
        (0..n).fold(Matrix::identity(s, s), |acc, _| acc * &self.transition)
    }

    /// `max_i |Σ_j p_ij − 1|`.
    pub fn row_sum_defect(&self) -> f64 {
        self.transition.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `max |P² − P|`.
    pub fn idempotence_defect(&self) -> f64 {
        (self.power(2) - &self.transition).amax()
    }

    /// `E(‖e^{k+1}‖²_A | S_k = current)` summed over the transition row of `current`.
    pub fn conditional_expectation(&self, d: &Decomposition, current: usize, e: &Vector) -> Result<f64> {
        if d.len() != self.states() {
            return Err(Error::DimensionMismatch { expected: self.states(), found: d.len() });
        }
        let a = d.ambient();
        let mut sum = 0.0;
        for (next, &p) in self.transition.row(current).iter().enumerate() {
            let moved = e - d.iteration_operator(next)? * e;
            sum += p * a.energy(&moved);
        }
        Ok(sum)
    }
}

pub fn markov_chain(states: usize) -> Result<MarkovChain> {
    MarkovChain::uniform(states)
}

/// `‖e‖²_A − (1/J)(B_a A e, e)_A`.
pub fn identity_decrement(d: &Decomposition, e: &Vector) -> Result<f64> {
    let forms = StateForms::new(d)?;
    Ok(StateForms::quad(&forms.energy, e) - StateForms::quad(&forms.ba, e) / d.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovConsistency {
    /// Largest relative gap between the transition-row conditional expectation and
    /// `‖e‖²_A − (1/J)(B_a A e, e)_A` over all enumerated states.
    pub max_state_discrepancy: f64,
    /// Largest relative gap between `E_k − (1/J) E((B_a A e^k, e^k)_A)` and the oracle `E_{k+1}`.
    pub max_level_discrepancy: f64,
}

/// Recomputes each conditional expectation of the enumeration through the chain and
/// compares it with the energy identity, state by state and level by level.
pub fn check_against_oracle(
    chain: &MarkovChain,
    d: &Decomposition,
    e0: &Vector,
    steps: usize,
    budget: u128,
) -> Result<MarkovConsistency> {
    let forms = StateForms::new(d)?;
    let j = d.len() as f64;
    let mut max_state = 0.0_f64;
    let mut failure = None;
    enumerate_paths(d, e0, steps, None, budget, |s| {
        if s.level == steps || failure.is_some() {
            return;
        }
        let current = s.last_index.unwrap_or(0);
        match chain.conditional_expectation(d, current, s.error) {
            Ok(cond) => {
                let energy = StateForms::quad(&forms.energy, s.error);
                let identity = energy - StateForms::quad(&forms.ba, s.error) / j;
                if energy > 0.0 {
                    max_state = max_state.max((cond - identity).abs() / energy);
                }
            }
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let report = oracle_from_error(d, e0, steps, None, budget)?;
    let mut max_level = 0.0_f64;
    for k in 0..steps {
        let e_k = report.expected_energy[k];
        if e_k > 0.0 {
            let decrement = e_k - report.expected_ba_energy[k] / j;
            max_level = max_level.max((decrement - report.expected_energy[k + 1]).abs() / e_k);
        }
    }
    Ok(MarkovConsistency { max_state_discrepancy: max_state, max_level_discrepancy: max_level })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::oracle::DEFAULT_PATH_BUDGET;
    use crate::problem::build_laplacian_1d;
    use nalgebra::dvector;

    #[test]
    fn uniform_chain() {
        let p = markov_chain(3).unwrap();
        assert!(p.transition().iter().all(|&x| x == 1.0 / 3.0));
        assert!(p.idempotence_defect() <= 1e-15);
        assert!(p.row_sum_defect() <= 1e-15);
        assert_eq!(markov_chain(1).unwrap().transition(), &Matrix::from_element(1, 1, 1.0));
        assert!(markov_chain(0).is_err());
        let p8 = markov_chain(8).unwrap();
        assert_eq!(p8.row_sum_defect(), 0.0);
        assert!((p8.power(5) - p8.transition()).amax() <= 1e-15);
    }

    #[test]
    fn conditional_expectations_match_identity() {
        let a = build_laplacian_1d(4).unwrap();
        let d = Decomposition::coordinate(a).unwrap();
        let chain = markov_chain(4).unwrap();
        let c = check_against_oracle(&chain, &d, &dvector![1.0, -2.0, 0.5, 1.0], 4, DEFAULT_PATH_BUDGET).unwrap();
        assert!(c.max_state_discrepancy <= 1e-12);
        assert!(c.max_level_discrepancy <= 1e-12);

        let e = dvector![0.3, 0.1, -0.2, 0.9];
        let via_chain = chain.conditional_expectation(&d, 2, &e).unwrap();
        let via_identity = identity_decrement(&d, &e).unwrap();
        assert!((via_chain - via_identity).abs() <= 1e-14);
        assert!(markov_chain(3).unwrap().conditional_expectation(&d, 0, &e).is_err());
    }
}
