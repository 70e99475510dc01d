//! Parallel, successive, randomized and fault-tolerant subspace correction iterations.
//!
//! Reporting granularity: PSC, single random corrections and fault-tolerant steps count one
//! correction per step; SSC and the random-permutation variant count one full sweep over
//! all `J` subspaces per step.

mod rng;

pub use rng::RngStream;

use std::fmt;

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::problem::{LinearSystem, Matrix, Vector};

/// Per-step Bernoulli fault injector; a fault rejects the whole correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultModel {
    theta: f64,
}

impl FaultModel {
    pub fn new(theta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!(
                "fault probability theta must lie in [0, 1), got {theta}"
            )));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepEvent {
    Corrected(usize),
    Faulted,
    /// A full sweep in the recorded order.
    Swept(Vec<usize>),
    /// All subspaces corrected from the same residual.
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    Psc,
    Ssc { order: Vec<usize> },
    RandomIndex,
    RandomPermutation,
    FaultTolerant(FaultModel),
}

impl Algorithm {
    pub fn tag(&self) -> &'static str {
        match self {
            Algorithm::Psc => "psc",
            Algorithm::Ssc { .. } => "ssc",
            Algorithm::RandomIndex => "random_index",
            Algorithm::RandomPermutation => "random_permutation",
            Algorithm::FaultTolerant(_) => "fault_tolerant",
        }
    }

    pub fn is_randomized(&self) -> bool {
        matches!(
            self,
            Algorithm::RandomIndex | Algorithm::RandomPermutation | Algorithm::FaultTolerant(_)
        )
    }

    pub fn fault_model(&self) -> Option<FaultModel> {
        match self {
            Algorithm::FaultTolerant(fm) => Some(*fm),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Energy errors `‖u − u^k‖²_A` for `k = 0..=K` and the event of each step.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub algorithm: &'static str,
    pub seed: u64,
    pub energies: Vec<f64>,
    pub events: Vec<StepEvent>,
}

fn check_system(d: &Decomposition, sys: &LinearSystem, u: &Vector) -> Result<()> {
    if sys.dim() != d.dim() {
        return Err(Error::DimensionMismatch { expected: d.dim(), found: sys.dim() });
    }
    if u.len() != d.dim() {
        return Err(Error::DimensionMismatch { expected: d.dim(), found: u.len() });
    }
    Ok(())
}

pub fn validate_permutation(order: &[usize], len: usize) -> Result<()> {
    if order.len() != len {
        return Err(Error::InvalidPermutation(format!(
            "expected {len} entries, got {}",
            order.len()
        )));
    }
    let mut seen = vec![false; len];
    for &i in order {
        if i >= len || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidPermutation(format!("{order:?} is not a bijection on 0..{len}")));
        }
    }
    Ok(())
}

/// `u + I_i R_i Q_i (f − A u)`; dimensions are assumed checked.
fn correct(d: &Decomposition, sys: &LinearSystem, u: &Vector, i: usize) -> Vector {
    let r = sys.rhs() - sys.operator().matrix() * u;
    u + d.correction(i, &r)
}

pub fn psc_step(d: &Decomposition, sys: &LinearSystem, u: &Vector) -> Result<Vector> {
    check_system(d, sys, u)?;
    let r = sys.residual(u)?;
    let mut next = u.clone();
    for i in 0..d.len() {
        next += d.correction(i, &r);
    }
    Ok(next)
}

/// `B_a = Σ I_i R_i Q_i`, or with `R̄_i` in place of `R_i` when `symmetrized` is set.
pub fn psc_operator(d: &Decomposition, symmetrized: bool) -> Matrix {
    let n = d.dim();
    let mut b = Matrix::zeros(n, n);
    for (s, solver) in d.subspaces().iter().zip(d.solvers()) {
        let r = if symmetrized { solver.symmetrized() } else { solver.matrix() };
        let inc = s.inclusion();
        b += inc * r * inc.transpose();
    }
    b
}

pub fn ssc_sweep(d: &Decomposition, sys: &LinearSystem, u: &Vector, order: &[usize]) -> Result<Vector> {
    check_system(d, sys, u)?;
    validate_permutation(order, d.len())?;
    Ok(order.iter().fold(u.clone(), |v, &i| correct(d, sys, &v, i)))
}

/// `(I − T_{order[J−1]}) ⋯ (I − T_{order[0]})`.
pub fn ssc_error_propagator(d: &Decomposition, order: &[usize]) -> Result<Matrix> {
    validate_permutation(order, d.len())?;
    let n = d.dim();
    let id = Matrix::identity(n, n);
    order.iter().try_fold(id.clone(), |acc, &i| Ok((&id - d.iteration_operator(i)?) * acc))
}

pub fn random_index_step(
    d: &Decomposition,
    sys: &LinearSystem,
    u: &Vector,
    rng: &mut RngStream,
) -> Result<(Vector, usize)> {
    check_system(d, sys, u)?;
    let i = rng.uniform_index(d.len());
    Ok((correct(d, sys, u, i), i))
}

pub fn random_permutation_sweep(
    d: &Decomposition,
    sys: &LinearSystem,
    u: &Vector,
    rng: &mut RngStream,
) -> Result<(Vector, Vec<usize>)> {
    check_system(d, sys, u)?;
    let sigma = rng.permutation(d.len());
    let next = sigma.iter().fold(u.clone(), |v, &i| correct(d, sys, &v, i));
    Ok((next, sigma))
}

/// One fault-tolerant step. The fault draw always comes first; the index is drawn only
/// when no fault occurred.
pub fn fault_tolerant_step(
    d: &Decomposition,
    sys: &LinearSystem,
    u: &Vector,
    rng: &mut RngStream,
    fm: &FaultModel,
) -> Result<(Vector, StepEvent)> {
    check_system(d, sys, u)?;
    if rng.bernoulli(fm.theta()) {
        return Ok((u.clone(), StepEvent::Faulted));
    }
    let i = rng.uniform_index(d.len());
    Ok((correct(d, sys, u, i), StepEvent::Corrected(i)))
}

/// Advance `u` by one reporting step of `algorithm`.
pub fn step(
    algorithm: &Algorithm,
    d: &Decomposition,
    sys: &LinearSystem,
    u: &Vector,
    rng: &mut RngStream,
) -> Result<(Vector, StepEvent)> {
    Ok(match algorithm {
        Algorithm::Psc => (psc_step(d, sys, u)?, StepEvent::Parallel),
        Algorithm::Ssc { order } => (ssc_sweep(d, sys, u, order)?, StepEvent::Swept(order.clone())),
        Algorithm::RandomIndex => {
            let (v, i) = random_index_step(d, sys, u, rng)?;
            (v, StepEvent::Corrected(i))
        }
        Algorithm::RandomPermutation => {
            let (v, sigma) = random_permutation_sweep(d, sys, u, rng)?;
            (v, StepEvent::Swept(sigma))
        }
        Algorithm::FaultTolerant(fm) => fault_tolerant_step(d, sys, u, rng, fm)?,
    })
}

pub fn run_trajectory(
    algorithm: &Algorithm,
    d: &Decomposition,
    sys: &LinearSystem,
    u0: &Vector,
    steps: usize,
    rng: &mut RngStream,
) -> Result<IterationTrace> {
    run_trajectory_observed(algorithm, d, sys, u0, steps, rng, |_, _, _| {})
}

/// As [`run_trajectory`], calling `observe(k, u^k, event)` after each step `k ≥ 1`
/// (with `event = None` for the initial iterate).
pub fn run_trajectory_observed(
    algorithm: &Algorithm,
    d: &Decomposition,
    sys: &LinearSystem,
    u0: &Vector,
    steps: usize,
    rng: &mut RngStream,
    mut observe: impl FnMut(usize, &Vector, Option<&StepEvent>),
) -> Result<IterationTrace> {
    check_system(d, sys, u0)?;
    if let Algorithm::Ssc { order } = algorithm {
        validate_permutation(order, d.len())?;
    }
    let a = sys.operator();
    let exact = sys.exact_solution();
    let mut energies = Vec::with_capacity(steps + 1);
    let mut events = Vec::with_capacity(steps);
    let mut u = u0.clone();
    energies.push(a.energy(&(exact - &u)));
    observe(0, &u, None);
    for k in 1..=steps {
        let (next, event) = step(algorithm, d, sys, &u, rng)?;
        u = next;
        energies.push(a.energy(&(exact - &u)));
        observe(k, &u, Some(&event));
        events.push(event);
    }
    Ok(IterationTrace { algorithm: algorithm.tag(), seed: rng.master_seed(), energies, events })
}
