//! Method of subspace corrections on small dense SPD systems.
//!
//! * [`problem`]: SPD model operators, energy inner products, exact solves.
//! * [`decomposition`]: space decompositions and their subspace operators.
//! * [`solvers`]: parallel, successive, randomized and fault-tolerant iterations.
//! * [`analysis`]: operator norms, spectra, expectation oracles, Monte Carlo estimators.
//! * [`harness`]: configuration parsing and the `subcorr` command implementations.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod decomposition;
pub mod error;
pub mod harness;
pub mod problem;
pub mod solvers;

pub use error::{Error, Result};
