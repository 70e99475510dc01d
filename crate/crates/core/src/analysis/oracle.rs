//! Exact expectations over all index/fault sequences, and the report type shared with the
//! Monte Carlo estimator.

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::problem::{LinearSystem, Matrix, Vector};
use crate::solvers::{psc_operator, FaultModel};

/// Default cap on the number of enumerated leaf paths.
pub const DEFAULT_PATH_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateKind {
    Exact,
    MonteCarlo { trials: usize },
}

/// Expected energies `E(‖e^k‖²_A)` and the quantities of the expected-decay identity
/// `E_{k+1} = (1 − (1−θ) δ_k / J) E_k`.
///
/// `delta[k]` is NaN where `E_k = 0`. When `identity_applies` is false (sweep-based
/// algorithms) the predicted and discrepancy columns are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationReport {
    pub kind: EstimateKind,
    pub subspaces: usize,
    pub theta: f64,
    pub identity_applies: bool,
    pub k_values: Vec<usize>,
    pub expected_energy: Vec<f64>,
    /// `E((B_a A e^k, e^k)_A)`.
    pub expected_ba_energy: Vec<f64>,
    pub delta: Vec<f64>,
    pub predicted_energy: Vec<f64>,
    /// `|E_k − predicted_k| / E_{k−1}`, zero at `k = 0`.
    pub discrepancy: Vec<f64>,
    pub max_discrepancy: f64,
    pub std_error: Option<Vec<f64>>,
    /// `E(Σ_i ‖P_i e^k‖²_A) / E(‖e^k‖²_A)`; only for all-exact decompositions.
    pub corollary_delta: Option<Vec<f64>>,
}

impl ExpectationReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_moments(
        kind: EstimateKind,
        subspaces: usize,
        theta: f64,
        identity_applies: bool,
        energy: Vec<f64>,
        ba_energy: Vec<f64>,
        std_error: Option<Vec<f64>>,
        projection_energy: Option<Vec<f64>>,
    ) -> Self {
        let steps = energy.len();
        let delta: Vec<f64> = energy
            .iter()
            .zip(&ba_energy)
            .map(|(&e, &b)| if e > 0.0 { b / e } else { f64::NAN })
            .collect();
        let corollary_delta = projection_energy.map(|p| {
            energy.iter().zip(p).map(|(&e, p)| if e > 0.0 { p / e } else { f64::NAN }).collect()
        });
        let (predicted_energy, discrepancy) = if identity_applies {
            let rate = (1.0 - theta) / subspaces as f64;
            let mut predicted = Vec::with_capacity(steps);
            let mut disc = Vec::with_capacity(steps);
            predicted.push(energy[0]);
            disc.push(0.0);
            for k in 1..steps {
                let prev = energy[k - 1];
                if prev > 0.0 {
                    let p = (1.0 - rate * delta[k - 1]) * prev;
                    predicted.push(p);
                    disc.push((energy[k] - p).abs() / prev);
                } else {
                    predicted.push(0.0);
                    disc.push(energy[k].abs());
                }
            }
            (predicted, disc)
        } else {
            (vec![f64::NAN; steps], vec![f64::NAN; steps])
        };
        let max_discrepancy = discrepancy.iter().copied().fold(
            if identity_applies { 0.0 } else { f64::NAN },
            f64::max,
        );
        Self {
            kind,
            subspaces,
            theta,
            identity_applies,
            k_values: (0..steps).collect(),
            expected_energy: energy,
            expected_ba_energy: ba_energy,
            delta,
            predicted_energy,
            discrepancy,
            max_discrepancy,
            std_error,
            corollary_delta,
        }
    }
}

/// Number of leaf paths of a `steps`-level enumeration, saturating.
pub fn path_count(subspaces: usize, steps: usize, with_faults: bool) -> u128 {
    let branching = subspaces as u128 + u128::from(with_faults);
    (0..steps).fold(1u128, |acc, _| acc.saturating_mul(branching))
}

/// A state reached during enumeration.
pub struct PathState<'a> {
    pub level: usize,
    /// Branch taken into this state: `None` at the root or after a fault.
    pub last_index: Option<usize>,
    pub probability: f64,
    pub error: &'a Vector,
}

/// Depth-first walk over every event sequence of length `steps`, visiting each state with
/// its path probability. Faults (when `theta > 0`) are visited before index branches;
/// index branches in increasing order. With `theta = 0` fault branches carry probability
/// zero and are skipped.
pub fn enumerate_paths(
    d: &Decomposition,
    e0: &Vector,
    steps: usize,
    fault: Option<&FaultModel>,
    budget: u128,
    mut visit: impl FnMut(PathState<'_>),
) -> Result<()> {
    let j = d.len();
    let paths = path_count(j, steps, fault.is_some());
    if paths > budget {
        return Err(Error::EnumerationTooLarge { paths, budget });
    }
    if e0.len() != d.dim() {
        return Err(Error::DimensionMismatch { expected: d.dim(), found: e0.len() });
    }
    let n = d.dim();
    let id = Matrix::identity(n, n);
    let propagators = (0..j)
        .map(|i| Ok(&id - d.iteration_operator(i)?))
        .collect::<Result<Vec<_>>>()?;
    let theta = fault.map_or(0.0, FaultModel::theta);
    let walker = Walker { propagators, theta, index_prob: (1.0 - theta) / j as f64, steps };
    walker.walk(0, None, 1.0, e0, &mut visit);
    Ok(())
}

struct Walker {
    propagators: Vec<Matrix>,
    theta: f64,
    index_prob: f64,
    steps: usize,
}

impl Walker {
    fn walk(
        &self,
        level: usize,
        last_index: Option<usize>,
        probability: f64,
        e: &Vector,
        visit: &mut impl FnMut(PathState<'_>),
    ) {
        visit(PathState { level, last_index, probability, error: e });
        if level == self.steps {
            return;
        }
        if self.theta > 0.0 {
            self.walk(level + 1, None, probability * self.theta, e, visit);
        }
        for (i, m) in self.propagators.iter().enumerate() {
            let next = m * e;
            self.walk(level + 1, Some(i), probability * self.index_prob, &next, visit);
        }
    }
}

/// Symmetric matrices whose quadratic forms give the per-state quantities:
/// `A B_a A` for `(B_a A e, e)_A` and `Σ A P_i` for `Σ ‖P_i e‖²_A`.
pub(crate) struct StateForms {
    pub energy: Matrix,
    pub ba: Matrix,
    pub projections: Option<Matrix>,
}

impl StateForms {
    pub fn new(d: &Decomposition) -> Result<Self> {
        let a = d.ambient().matrix();
        let ba = a * psc_operator(d, true) * a;
        let projections = if d.all_exact() {
            let mut sum = Matrix::zeros(d.dim(), d.dim());
            for i in 0..d.len() {
                sum += a * d.projection(i)?;
            }
            Some(sum)
        } else {
            None
        };
        Ok(Self { energy: a.clone(), ba, projections })
    }

    pub fn quad(m: &Matrix, e: &Vector) -> f64 {
        e.dot(&(m * e))
    }
}

/// Exact `E(‖e^k‖²_A)` and `E((B_a A e^k, e^k)_A)` for `k = 0..=steps`, by enumeration of
/// every index sequence (and fault pattern when `fault` is given).
pub fn oracle_expected_energy(
    d: &Decomposition,
    sys: &LinearSystem,
    u0: &Vector,
    steps: usize,
    fault: Option<&FaultModel>,
    budget: u128,
) -> Result<ExpectationReport> {
    if sys.dim() != d.dim() {
        return Err(Error::DimensionMismatch { expected: d.dim(), found: sys.dim() });
    }
    if u0.len() != d.dim() {
        return Err(Error::DimensionMismatch { expected: d.dim(), found: u0.len() });
    }
    let e0 = sys.exact_solution() - u0;
    oracle_from_error(d, &e0, steps, fault, budget)
}

/// As [`oracle_expected_energy`], starting from a given initial error `e⁰`.
pub fn oracle_from_error(
    d: &Decomposition,
    e0: &Vector,
    steps: usize,
    fault: Option<&FaultModel>,
    budget: u128,
) -> Result<ExpectationReport> {
    let forms = StateForms::new(d)?;
    let mut energy = vec![0.0; steps + 1];
    let mut ba = vec![0.0; steps + 1];
    let mut proj = forms.projections.as_ref().map(|_| vec![0.0; steps + 1]);
    enumerate_paths(d, e0, steps, fault, budget, |s| {
        let k = s.level;
        energy[k] += s.probability * StateForms::quad(&forms.energy, s.error);
        ba[k] += s.probability * StateForms::quad(&forms.ba, s.error);
        if let (Some(p), Some(m)) = (proj.as_mut(), forms.projections.as_ref()) {
            p[k] += s.probability * StateForms::quad(m, s.error);
        }
    })?;
    let theta = fault.map_or(0.0, FaultModel::theta);
    Ok(ExpectationReport::from_moments(
        EstimateKind::Exact,
        d.len(),
        theta,
        true,
        energy,
        ba,
        None,
        proj,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::spectrum_of_ba_a;
    use crate::decomposition::SolverKind;
    use crate::problem::{build_laplacian_1d, build_random_spd, SpdOperator};
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn identity_instance() -> (Decomposition, LinearSystem) {
        let a = SpdOperator::identity(2).unwrap();
        let d = Decomposition::coordinate(a.clone()).unwrap();
        let sys = LinearSystem::with_solution(a, dvector![1.0, 1.0]).unwrap();
        (d, sys)
    }

    #[test]
    fn identity_energies() {
        let (d, sys) = identity_instance();
        let r = oracle_expected_energy(&d, &sys, &Vector::zeros(2), 2, None, DEFAULT_PATH_BUDGET).unwrap();
        assert_eq!(r.expected_energy, vec![2.0, 1.0, 0.5]);
        assert_eq!(r.max_discrepancy, 0.0);
        assert_eq!(r.delta, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_theta_matches_fault_free_bitwise() {
        let (d, sys) = identity_instance();
        let plain = oracle_expected_energy(&d, &sys, &Vector::zeros(2), 3, None, DEFAULT_PATH_BUDGET).unwrap();
        let fm = FaultModel::new(0.0).unwrap();
        let zero = oracle_expected_energy(&d, &sys, &Vector::zeros(2), 3, Some(&fm), DEFAULT_PATH_BUDGET).unwrap();
        assert_eq!(plain, zero);
    }

    #[test]
    fn fault_identity_on_laplacian() {
        let a = build_laplacian_1d(4).unwrap();
        let d = Decomposition::coordinate(a.clone()).unwrap();
        let sys = LinearSystem::with_solution(a, dvector![1.0, -0.5, 0.25, 2.0]).unwrap();
        let fm = FaultModel::new(0.3).unwrap();
        let r = oracle_expected_energy(&d, &sys, &Vector::zeros(4), 4, Some(&fm), DEFAULT_PATH_BUDGET).unwrap();
        assert!(r.max_discrepancy <= 1e-10);
        // probabilities over all leaves sum to one
        let mut total = 0.0;
        enumerate_paths(&d, &dvector![1.0, 0.0, 0.0, 0.0], 4, Some(&fm), DEFAULT_PATH_BUDGET, |s| {
            if s.level == 4 {
                total += s.probability;
            }
        })
        .unwrap();
        assert_relative_eq!(total, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn brute_force_product_formula() {
        // Independent check: expand each leaf path into an explicit matrix product.
        let a = build_random_spd(3, 9, 15.0).unwrap();
        let d = Decomposition::blocks(a.clone(), &[vec![0, 1], vec![1, 2], vec![2]])
            .unwrap()
            .with_solver(SolverKind::ScaledRichardson { omega: 1.2 })
            .unwrap();
        let e0 = dvector![0.3, -1.0, 0.7];
        let steps = 3;
        let r = oracle_from_error(&d, &e0, steps, None, DEFAULT_PATH_BUDGET).unwrap();
        let id = Matrix::identity(3, 3);
        let ts: Vec<Matrix> = (0..3).map(|i| d.iteration_operator(i).unwrap()).collect();
        let mut expected = 0.0;
        for i0 in 0..3 {
            for i1 in 0..3 {
                for i2 in 0..3 {
                    let e = (&id - &ts[i2]) * (&id - &ts[i1]) * (&id - &ts[i0]) * &e0;
                    expected += a.energy(&e) / 27.0;
                }
            }
        }
        assert_relative_eq!(r.expected_energy[3], expected, max_relative = 1e-13);
        let spectrum = spectrum_of_ba_a(&d).unwrap();
        for &delta in &r.delta {
            assert!(delta >= spectrum.lambda_min - 1e-9 && delta <= spectrum.lambda_max + 1e-9);
        }
        assert!(r.corollary_delta.is_none());
    }

    #[test]
    fn budget_is_enforced() {
        let a = build_laplacian_1d(8).unwrap();
        let d = Decomposition::coordinate(a.clone()).unwrap();
        let sys = LinearSystem::with_solution(a, Vector::from_element(8, 1.0)).unwrap();
        let err = oracle_expected_energy(&d, &sys, &Vector::zeros(8), 5, None, 1000).unwrap_err();
        assert_eq!(err, Error::EnumerationTooLarge { paths: 32768, budget: 1000 });
        assert_eq!(path_count(4, 4, true), 625);
        assert_eq!(path_count(10, 100, true), u128::MAX);
    }
}
