use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::problem::{Matrix, SpdOperator};
use crate::solvers::psc_operator;

/// Eigenvalues (ascending) of the symmetric-definite pencil `K v = λ A v`, computed from
/// the congruence `L⁻¹ K L⁻ᵀ` with `A = L Lᵀ`.
pub fn generalized_eigenvalues(a: &SpdOperator, k: &Matrix) -> Result<Vec<f64>> {
    let n = a.dim();
    if k.shape() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n, found: k.nrows() });
    }
    let l = a.lower_factor();
    let y = l
        .solve_lower_triangular(k)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let s = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let sym = (&s + s.transpose()) * 0.5;
    let mut eigs: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(f64::total_cmp);
    Ok(eigs)
}

/// `sup_{v≠0} ‖M v‖_A / ‖v‖_A`.
pub fn a_operator_norm(a: &SpdOperator, m: &Matrix) -> Result<f64> {
    let n = a.dim();
    if m.shape() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n, found: m.nrows() });
    }
    // MᵀAM = Cᵀ C with C = Lᵀ M, which keeps the pencil exactly symmetric.
    let c = a.lower_factor().transpose() * m;
    let gram = c.transpose() * c;
    let eigs = generalized_eigenvalues(a, &gram)?;
    Ok(eigs.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumSummary {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Extreme eigenvalues of `B_a A` with `B_a` built from the symmetrized local solvers.
///
/// `B_a A` is A-self-adjoint, so its spectrum is that of the pencil `(A B_a A, A)`.
pub fn spectrum_of_ba_a(d: &Decomposition) -> Result<SpectrumSummary> {
    let a = d.ambient();
    let ba = psc_operator(d, true);
    let k = a.matrix() * ba * a.matrix();
    let eigs = generalized_eigenvalues(a, &k)?;
    Ok(SpectrumSummary { lambda_min: eigs[0], lambda_max: eigs[eigs.len() - 1] })
}
