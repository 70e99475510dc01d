//! The two routes to the sweep constant `c₁` of `‖I − B A‖²_A = 1 − 1/c₁`: from the
//! operator norm of the sweep propagator, and (exact local solvers only) from the
//! variational sup-inf over decompositions `v = Σ v_i`.

use nalgebra::SVD;

use crate::analysis::spectral::{a_operator_norm, generalized_eigenvalues};
use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::problem::Matrix;
use crate::solvers::{ssc_error_propagator, validate_permutation};

/// Sweeps with `‖I − B A‖²_A` at or above `1 − NORM_SENTINEL` are treated as non-convergent.
pub const NORM_SENTINEL: f64 = 1e-14;

/// Default cap on `Σ n_i` for the variational route.
pub const DEFAULT_STACKED_DIM_BUDGET: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XzConstants {
    pub norm_sq: f64,
    pub c0: f64,
    pub c1: f64,
}

/// `c₁ = 1 / (1 − ‖I − B A‖²_A)` for the sweep in `order`, and `c₀ = c₁ − 1`.
pub fn xz_c1_from_norm(d: &Decomposition, order: &[usize]) -> Result<XzConstants> {
    let e = ssc_error_propagator(d, order)?;
    let norm = a_operator_norm(d.ambient(), &e)?;
    let norm_sq = norm * norm;
    if norm_sq >= 1.0 - NORM_SENTINEL {
        return Err(Error::NonConvergentSweep { norm_sq });
    }
    let c1 = 1.0 / (1.0 - norm_sq);
    Ok(XzConstants { norm_sq, c0: c1 - 1.0, c1 })
}

/// `c₁ = sup_{‖v‖_A=1} inf_{Σ v_i = v} Σ_i ‖P_i Σ_{j≥i} v_j‖²_A`, with `i` running over
/// sweep positions of `order`.
///
/// Writing `v_i = I_i y_i` and stacking `y`, the objective is `yᵀ H y` under the constraint
/// `G y = v`, `G = [I_1 … I_J]`. The KKT system `[2H Gᵀ; G 0] [Y; Λ] = [0; I]` gives the
/// minimizer `y = Y v` for every `v` at once, so the inner infimum is `vᵀ (Yᵀ H Y) v` and
/// the supremum is the top eigenvalue of the pencil `(Yᵀ H Y, A)`.
pub fn xz_c1_supinf_exact(d: &Decomposition, order: &[usize], max_stacked_dim: usize) -> Result<f64> {
    validate_permutation(order, d.len())?;
    if !d.all_exact() {
        return Err(Error::Unsupported(
            "the variational sweep constant requires exact local solvers".into(),
        ));
    }
    let n = d.dim();
    let a = d.ambient().matrix();
    let inclusions: Vec<&Matrix> = order.iter().map(|&i| d.subspaces()[i].inclusion()).collect();
    let widths: Vec<usize> = inclusions.iter().map(|m| m.ncols()).collect();
    let m: usize = widths.iter().sum();
    if m > max_stacked_dim {
        return Err(Error::Unsupported(format!(
            "stacked decomposition dimension {m} exceeds the budget {max_stacked_dim}"
        )));
    }
    let offsets: Vec<usize> = widths
        .iter()
        .scan(0, |acc, w| {
            let o = *acc;
            *acc += w;
            Some(o)
        })
        .collect();

    let mut g = Matrix::zeros(n, m);
    for (inc, &o) in inclusions.iter().zip(&offsets) {
        g.columns_mut(o, inc.ncols()).copy_from(inc);
    }

    let mut h = Matrix::zeros(m, m);
    for (pos, &sub) in order.iter().enumerate() {
        // S y = Σ_{j ≥ pos} I_(j) y_j
        let mut tail = Matrix::zeros(n, m);
        for j in pos..order.len() {
            tail.columns_mut(offsets[j], widths[j]).copy_from(inclusions[j]);
        }
        let weight = a * d.projection(sub)?;
        h += tail.transpose() * weight * &tail;
    }
    let h = (&h + h.transpose()) * 0.5;

    let size = m + n;
    let mut kkt = Matrix::zeros(size, size);
    kkt.view_mut((0, 0), (m, m)).copy_from(&(&h * 2.0));
    kkt.view_mut((0, m), (m, n)).copy_from(&g.transpose());
    kkt.view_mut((m, 0), (n, m)).copy_from(&g);
    let mut rhs = Matrix::zeros(size, n);
    rhs.view_mut((m, 0), (n, n)).fill_with_identity();

    let solution = match kkt.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|x| x.is_finite()) => s,
        _ => min_norm_solve(&kkt, &rhs)?,
    };
    let y = solution.rows(0, m).into_owned();
    let k = y.transpose() * &h * &y;
    let k = (&k + k.transpose()) * 0.5;
    let eigs = generalized_eigenvalues(d.ambient(), &k)?;
    Ok(eigs[eigs.len() - 1])
}

fn min_norm_solve(kkt: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let svd = SVD::new(kkt.clone(), true, true);
    let max_sv = svd.singular_values.max();
    let x = svd
        .solve(rhs, 1e-12 * max_sv)
        .map_err(|e| Error::DegenerateDecomposition(e.to_string()))?;
    let residual = (kkt * &x - rhs).amax();
    if residual > 1e-8 {
        return Err(Error::DegenerateDecomposition(format!(
            "KKT system is inconsistent (residual {residual:e})"
        )));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::SolverKind;
    use crate::problem::{build_laplacian_1d, build_random_spd, SpdOperator};
    use approx::assert_relative_eq;

    #[test]
    fn from_norm_examples() {
        let d = Decomposition::coordinate(SpdOperator::identity(2).unwrap()).unwrap();
        let c = xz_c1_from_norm(&d, &[0, 1]).unwrap();
        assert_eq!((c.c1, c.c0), (1.0, 0.0));

        let d = Decomposition::coordinate(build_laplacian_1d(2).unwrap()).unwrap();
        let c = xz_c1_from_norm(&d, &[0, 1]).unwrap();
        assert_relative_eq!(c.c1, 4.0 / 3.0, epsilon = 1e-13);
        assert_relative_eq!(c.c0, 1.0 / 3.0, epsilon = 1e-13);

        let d = Decomposition::blocks(build_random_spd(4, 1, 9.0).unwrap(), &[vec![0, 1, 2, 3]]).unwrap();
        assert_relative_eq!(xz_c1_from_norm(&d, &[0]).unwrap().c1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn non_convergent_sweep_is_rejected() {
        // A vanishing Richardson weight leaves the sweep numerically at norm one.
        let d = Decomposition::coordinate(build_laplacian_1d(2).unwrap())
            .unwrap()
            .with_solver(SolverKind::ScaledRichardson { omega: 1e-16 })
            .unwrap();
        assert!(matches!(xz_c1_from_norm(&d, &[0, 1]), Err(Error::NonConvergentSweep { .. })));
    }

    #[test]
    fn supinf_matches_norm_route() {
        let cases = vec![
            Decomposition::coordinate(SpdOperator::identity(2).unwrap()).unwrap(),
            Decomposition::coordinate(build_laplacian_1d(2).unwrap()).unwrap(),
            Decomposition::blocks(build_laplacian_1d(3).unwrap(), &[vec![0, 1], vec![1, 2]]).unwrap(),
            Decomposition::coordinate(build_random_spd(4, 5, 30.0).unwrap()).unwrap(),
            Decomposition::blocks(build_random_spd(5, 6, 10.0).unwrap(), &[vec![0, 1, 2], vec![2, 3], vec![3, 4, 0]])
                .unwrap(),
        ];
        for d in &cases {
            let orders: Vec<Vec<usize>> = vec![(0..d.len()).collect(), (0..d.len()).rev().collect()];
            for order in orders {
                let norm_route = xz_c1_from_norm(d, &order).unwrap().c1;
                let supinf = xz_c1_supinf_exact(d, &order, DEFAULT_STACKED_DIM_BUDGET).unwrap();
                assert!((supinf - norm_route).abs() / norm_route <= 1e-8, "{supinf} vs {norm_route}");
            }
        }
        let d = &cases[1];
        assert_relative_eq!(xz_c1_supinf_exact(d, &[0, 1], 64).unwrap(), 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn supinf_rejects_inexact_and_oversized() {
        let d = Decomposition::coordinate(build_laplacian_1d(3).unwrap())
            .unwrap()
            .with_solver(SolverKind::ScaledRichardson { omega: 1.0 })
            .unwrap();
        assert!(matches!(xz_c1_supinf_exact(&d, &[0, 1, 2], 64), Err(Error::Unsupported(_))));
        let d = Decomposition::coordinate(build_laplacian_1d(3).unwrap()).unwrap();
        assert!(matches!(xz_c1_supinf_exact(&d, &[0, 1, 2], 2), Err(Error::Unsupported(_))));
        assert!(xz_c1_supinf_exact(&d, &[0, 1], 64).is_err());
    }
}
