//! Space decompositions `V = Σ V_i` given by inclusion bases, the subspace operators
//! `Q_i`, `A_i`, `P_i`, `T_i` built from them, and the local solvers `R_i`.
//!
//! Subspace indices are zero-based throughout the library API.

use nalgebra::{Cholesky, Dyn};

use crate::analysis::a_operator_norm;
use crate::error::{Error, Result};
use crate::problem::{cholesky_checked, Matrix, SpdOperator, Vector};

/// Relative singular value threshold for rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-10;

fn numerical_rank(m: &Matrix) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

/// A subspace `V_i` represented by a basis stored column-wise (the matrix of `I_i`).
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    inclusion: Matrix,
}

impl Subspace {
    pub fn new(inclusion: Matrix) -> Result<Self> {
        let (n, ni) = inclusion.shape();
        if ni == 0 || ni > n {
            return Err(Error::InvalidDecomposition(format!(
                "subspace dimension {ni} must lie in 1..={n}"
            )));
        }
        let rank = numerical_rank(&inclusion);
        if rank != ni {
            return Err(Error::InvalidDecomposition(format!(
                "inclusion basis has rank {rank} but {ni} columns"
            )));
        }
        Ok(Self { inclusion })
    }

    /// Span of the unit vectors `e_k` for `k` in `indices`.
    pub fn from_indices(ambient_dim: usize, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidDecomposition("empty block".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&k| k >= ambient_dim) {
            return Err(Error::InvalidDecomposition(format!(
                "index {bad} outside 0..{ambient_dim}"
            )));
        }
        let mut inclusion = Matrix::zeros(ambient_dim, indices.len());
        for (c, &k) in indices.iter().enumerate() {
            inclusion[(k, c)] = 1.0;
        }
        Self::new(inclusion)
    }

    pub fn dim(&self) -> usize {
        self.inclusion.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.inclusion.nrows()
    }

    pub fn inclusion(&self) -> &Matrix {
        &self.inclusion
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Exact,
    /// `R_i = (ω / λ_max(A_i)) I`, convergent for `0 < ω < 2`.
    ScaledRichardson { omega: f64 },
}

impl SolverKind {
    pub fn validate(self) -> Result<Self> {
        if let SolverKind::ScaledRichardson { omega } = self {
            if !(omega > 0.0 && omega < 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "Richardson weight omega must lie in (0, 2), got {omega}"
                )));
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone)]
enum LocalAction {
    Factor(Cholesky<f64, Dyn>),
    Scale(f64),
}

/// Local solver `R_i` acting on subspace coordinates.
#[derive(Debug, Clone)]
pub struct SubspaceSolver {
    kind: SolverKind,
    local: Matrix,
    action: LocalAction,
}

impl SubspaceSolver {
    pub fn new(kind: SolverKind, local: Matrix) -> Result<Self> {
        let kind = kind.validate()?;
        let action = match kind {
            SolverKind::Exact => LocalAction::Factor(cholesky_checked(&local)?),
            SolverKind::ScaledRichardson { omega } => {
                let lambda_max = local
                    .clone()
                    .symmetric_eigenvalues()
                    .iter()
                    .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                if !(lambda_max > 0.0) {
                    return Err(Error::NotPositiveDefinite { index: 0, pivot: lambda_max });
                }
                LocalAction::Scale(omega / lambda_max)
            }
        };
        Ok(Self { kind, local, action })
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.kind, SolverKind::Exact)
    }

    /// The restricted operator `A_i`.
    pub fn local_operator(&self) -> &Matrix {
        &self.local
    }

    pub fn apply(&self, r: &Vector) -> Vector {
        match &self.action {
            LocalAction::Factor(f) => f.solve(r),
            LocalAction::Scale(s) => r * *s,
        }
    }

    /// Dense `R_i`.
    pub fn matrix(&self) -> Matrix {
        let n = self.local.nrows();
        match &self.action {
            LocalAction::Factor(f) => f.inverse(),
            LocalAction::Scale(s) => Matrix::identity(n, n) * *s,
        }
    }

    /// `R̄_i = R_iᵀ + R_i − R_iᵀ A_i R_i`.
    pub fn symmetrized(&self) -> Matrix {
        let r = self.matrix();
        let rt = r.transpose();
        &rt + &r - &rt * &self.local * &r
    }

    /// `‖I − R_i A_i‖_{A_i}`, the contraction of the local solver on its own subspace.
    pub fn local_contraction(&self) -> Result<f64> {
        let n = self.local.nrows();
        let local_op = SpdOperator::new(symmetrize(&self.local))?;
        let e = Matrix::identity(n, n) - self.matrix() * &self.local;
        a_operator_norm(&local_op, &e)
    }
}

fn symmetrize(m: &Matrix) -> Matrix {
    let n = m.nrows();
    Matrix::from_fn(n, n, |i, j| if i <= j { m[(i, j)] } else { m[(j, i)] })
}

/// The operators attached to one subspace, all as dense arrays.
///
/// `q`, `p` map `V` to subspace coordinates (`n_i × N`); `t`, `t_star` and `t_bar` act on
/// `V` (`N × N`).
#[derive(Debug, Clone)]
pub struct SubspaceOperators {
    pub q: Matrix,
    pub a_local: Matrix,
    pub p: Matrix,
    pub t: Matrix,
    pub t_star: Matrix,
    pub t_bar: Matrix,
}

/// An ordered list of subspaces spanning the ambient space, each with its local solver.
#[derive(Debug, Clone)]
pub struct Decomposition {
    ambient: SpdOperator,
    subspaces: Vec<Subspace>,
    solvers: Vec<SubspaceSolver>,
}

impl Decomposition {
    pub fn new(ambient: SpdOperator, subspaces: Vec<Subspace>, kind: SolverKind) -> Result<Self> {
        let kinds = vec![kind; subspaces.len()];
        Self::with_solver_kinds(ambient, subspaces, kinds)
    }

    pub fn with_solver_kinds(
        ambient: SpdOperator,
        subspaces: Vec<Subspace>,
        kinds: Vec<SolverKind>,
    ) -> Result<Self> {
        let n = ambient.dim();
        if subspaces.is_empty() {
            return Err(Error::InvalidDecomposition("at least one subspace is required".into()));
        }
        if kinds.len() != subspaces.len() {
            return Err(Error::DimensionMismatch { expected: subspaces.len(), found: kinds.len() });
        }
        if let Some(s) = subspaces.iter().find(|s| s.ambient_dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: s.ambient_dim() });
        }
        let total: usize = subspaces.iter().map(Subspace::dim).sum();
        let mut stacked = Matrix::zeros(n, total);
        let mut col = 0;
        for s in &subspaces {
            stacked.columns_mut(col, s.dim()).copy_from(s.inclusion());
            col += s.dim();
        }
        let rank = numerical_rank(&stacked);
        if rank != n {
            return Err(Error::InvalidDecomposition(format!(
                "subspaces span a space of dimension {rank}, ambient dimension is {n}"
            )));
        }
        let solvers = subspaces
            .iter()
            .zip(kinds)
            .map(|(s, kind)| {
                let i = s.inclusion();
                SubspaceSolver::new(kind, i.transpose() * ambient.matrix() * i)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { ambient, subspaces, solvers })
    }

    /// `V_i = span(e_i)`, one subspace per coordinate, exact solvers.
    pub fn coordinate(ambient: SpdOperator) -> Result<Self> {
        let n = ambient.dim();
        let subspaces = (0..n).map(|k| Subspace::from_indices(n, &[k])).collect::<Result<_>>()?;
        Self::new(ambient, subspaces, SolverKind::Exact)
    }

    /// One subspace per index block; blocks may overlap but must cover every index.
    pub fn blocks(ambient: SpdOperator, blocks: &[Vec<usize>]) -> Result<Self> {
        let n = ambient.dim();
        let mut covered = vec![false; n];
        for b in blocks {
            for &k in b {
                if k < n {
                    covered[k] = true;
                }
            }
        }
        let subspaces = blocks
            .iter()
            .map(|b| Subspace::from_indices(n, b))
            .collect::<Result<Vec<_>>>()?;
        if let Some(k) = covered.iter().position(|c| !c) {
            return Err(Error::InvalidDecomposition(format!("index {k} is not covered by any block")));
        }
        Self::new(ambient, subspaces, SolverKind::Exact)
    }

    /// Same subspaces, every local solver replaced by `kind`.
    pub fn with_solver(self, kind: SolverKind) -> Result<Self> {
        Self::new(self.ambient, self.subspaces, kind)
    }

    /// Number of subspaces `J`.
    pub fn len(&self) -> usize {
        self.subspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subspaces.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.ambient.dim()
    }

    pub fn ambient(&self) -> &SpdOperator {
        &self.ambient
    }

    pub fn subspaces(&self) -> &[Subspace] {
        &self.subspaces
    }

    pub fn solvers(&self) -> &[SubspaceSolver] {
        &self.solvers
    }

    pub fn all_exact(&self) -> bool {
        self.solvers.iter().all(SubspaceSolver::is_exact)
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange { index: i, len: self.len() });
        }
        Ok(())
    }

    /// `I_i R_i Q_i r` for a residual `r`.
    pub fn correction(&self, i: usize, residual: &Vector) -> Vector {
        let inc = self.subspaces[i].inclusion();
        let local = inc.tr_mul(residual);
        inc * self.solvers[i].apply(&local)
    }

    /// `T_i = I_i R_i Q_i A` on `V`.
    pub fn iteration_operator(&self, i: usize) -> Result<Matrix> {
        self.check_index(i)?;
        let inc = self.subspaces[i].inclusion();
        Ok(inc * self.solvers[i].matrix() * inc.transpose() * self.ambient.matrix())
    }

    /// The A-orthogonal projection onto `V_i` as an operator on `V`.
    pub fn projection(&self, i: usize) -> Result<Matrix> {
        self.check_index(i)?;
        let inc = self.subspaces[i].inclusion();
        let local = Cholesky::new(self.solvers[i].local_operator().clone())
            .ok_or(Error::NotPositiveDefinite { index: i, pivot: f64::NAN })?;
        Ok(inc * local.solve(&(inc.transpose() * self.ambient.matrix())))
    }

    pub fn operators(&self, i: usize) -> Result<SubspaceOperators> {
        self.check_index(i)?;
        let a = self.ambient.matrix();
        let inc = self.subspaces[i].inclusion();
        let q = inc.transpose();
        let a_local = self.solvers[i].local_operator().clone();
        let local = Cholesky::new(a_local.clone())
            .ok_or(Error::NotPositiveDefinite { index: i, pivot: f64::NAN })?;
        let qa = &q * a;
        let p = local.solve(&qa);
        let t = inc * self.solvers[i].matrix() * &qa;
        let t_star = self.ambient.solve_matrix(&(t.transpose() * a))?;
        let t_bar = &t + &t_star - &t_star * &t;
        Ok(SubspaceOperators { q, a_local, p, t, t_star, t_bar })
    }
}

pub fn make_coordinate_decomposition(a: &SpdOperator) -> Result<Decomposition> {
    Decomposition::coordinate(a.clone())
}

pub fn make_block_decomposition(a: &SpdOperator, blocks: &[Vec<usize>]) -> Result<Decomposition> {
    Decomposition::blocks(a.clone(), blocks)
}

pub fn assemble_operators(d: &Decomposition, i: usize) -> Result<SubspaceOperators> {
    d.operators(i)
}

pub fn symmetrized_solver(d: &Decomposition, i: usize) -> Result<Matrix> {
    d.check_index(i)?;
    Ok(d.solvers[i].symmetrized())
}

/// `‖I − T_i‖_A` over the whole space. This is 1 whenever `V_i` is a proper subspace;
/// see [`subspace_contraction_factor`] for the contraction on `V_i` itself.
pub fn contraction_factor(d: &Decomposition, i: usize) -> Result<f64> {
    let t = d.iteration_operator(i)?;
    let n = d.dim();
    a_operator_norm(d.ambient(), &(Matrix::identity(n, n) - t))
}

/// `‖(I − T_i)|_{V_i}‖_A = ‖I − R_i A_i‖_{A_i}`.
pub fn subspace_contraction_factor(d: &Decomposition, i: usize) -> Result<f64> {
    d.check_index(i)?;
    d.solvers[i].local_contraction()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{build_laplacian_1d, build_random_spd};
    use crate::solvers::psc_operator;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rel_diff(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).amax() / a.amax().max(b.amax()).max(1e-300)
    }

    fn test_decompositions() -> Vec<Decomposition> {
        let lap4 = build_laplacian_1d(4).unwrap();
        let lap3 = build_laplacian_1d(3).unwrap();
        let spd = build_random_spd(5, 11, 30.0).unwrap();
        let rich = SolverKind::ScaledRichardson { omega: 1.3 };
        vec![
            Decomposition::coordinate(lap4.clone()).unwrap(),
            Decomposition::blocks(lap4.clone(), &[vec![0, 1], vec![2, 3]]).unwrap(),
            Decomposition::blocks(lap4.clone(), &[vec![0, 1, 2], vec![1, 2, 3]]).unwrap(),
            Decomposition::blocks(lap3, &[vec![0, 1], vec![1, 2]]).unwrap(),
            Decomposition::coordinate(spd.clone()).unwrap(),
            Decomposition::blocks(spd.clone(), &[vec![0, 2, 4], vec![1, 3], vec![3, 4]]).unwrap(),
            Decomposition::blocks(lap4, &[vec![0, 1], vec![1, 2, 3]]).unwrap().with_solver(rich).unwrap(),
            Decomposition::blocks(spd, &[vec![0, 1, 2], vec![2, 3, 4]]).unwrap().with_solver(rich).unwrap(),
        ]
    }

    #[test]
    fn coordinate_construction() {
        let d = make_coordinate_decomposition(&SpdOperator::identity(2).unwrap()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.subspaces()[0].inclusion(), &Matrix::from_column_slice(2, 1, &[1.0, 0.0]));
        assert_eq!(d.subspaces()[1].inclusion(), &Matrix::from_column_slice(2, 1, &[0.0, 1.0]));

        let d = make_coordinate_decomposition(&build_laplacian_1d(3).unwrap()).unwrap();
        for s in d.solvers() {
            assert_eq!(s.local_operator(), &Matrix::from_element(1, 1, 2.0));
        }
        let concat = Matrix::from_fn(3, 3, |r, c| d.subspaces()[c].inclusion()[(r, 0)]);
        assert_eq!(concat, Matrix::identity(3, 3));
    }

    #[test]
    fn block_construction() {
        let a = build_laplacian_1d(4).unwrap();
        let d = make_block_decomposition(&a, &[vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.subspaces().iter().all(|s| s.dim() == 2));

        let d = make_block_decomposition(&a, &[vec![0, 1, 2], vec![1, 2, 3]]).unwrap();
        assert_eq!(d.subspaces()[0].dim(), 3);

        let a2 = build_laplacian_1d(2).unwrap();
        assert!(matches!(
            make_block_decomposition(&a2, &[vec![0]]),
            Err(Error::InvalidDecomposition(_))
        ));
        assert!(make_block_decomposition(&a2, &[vec![0, 1], vec![]]).is_err());
        assert!(make_block_decomposition(&a2, &[vec![0, 2]]).is_err());
        assert!(make_block_decomposition(&a2, &[vec![0, 0, 1]]).is_err());
    }

    #[test]
    fn rejects_incomplete_or_dependent_bases() {
        let a = build_laplacian_1d(3).unwrap();
        let s = Subspace::new(Matrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0])).unwrap();
        assert!(Decomposition::new(a.clone(), vec![s], SolverKind::Exact).is_err());
        let dependent = Matrix::from_column_slice(3, 2, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0]);
        assert!(Subspace::new(dependent).is_err());
        assert!(Decomposition::new(a, vec![], SolverKind::Exact).is_err());
    }

    #[test]
    fn rejects_bad_omega() {
        let a = build_laplacian_1d(3).unwrap();
        for omega in [0.0, 2.0, 2.5, -1.0, f64::NAN] {
            let d = Decomposition::coordinate(a.clone()).unwrap();
            assert!(d.with_solver(SolverKind::ScaledRichardson { omega }).is_err());
        }
    }

    #[test]
    fn operators_on_identity_and_laplacian() {
        let d = make_coordinate_decomposition(&SpdOperator::identity(2).unwrap()).unwrap();
        let ops = assemble_operators(&d, 0).unwrap();
        let e1e1 = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(ops.t, e1e1);
        assert_eq!(d.projection(0).unwrap(), e1e1);

        let d = make_coordinate_decomposition(&build_laplacian_1d(2).unwrap()).unwrap();
        let ops = assemble_operators(&d, 0).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[1.0, -0.5, 0.0, 0.0]);
        assert!(rel_diff(&ops.t, &expected) < 1e-15);
        assert!(matches!(assemble_operators(&d, 2), Err(Error::IndexOutOfRange { index: 2, len: 2 })));
    }

    #[test]
    fn symmetrized_solver_cases() {
        let d = make_coordinate_decomposition(&build_laplacian_1d(3).unwrap()).unwrap();
        let rbar = symmetrized_solver(&d, 1).unwrap();
        assert_relative_eq!(rbar[(0, 0)], 0.5, epsilon = 1e-15);

        let d = make_block_decomposition(&build_laplacian_1d(4).unwrap(), &[vec![0, 1, 2], vec![3]]).unwrap();
        let rbar = symmetrized_solver(&d, 0).unwrap();
        let inv = d.solvers()[0].local_operator().clone().try_inverse().unwrap();
        assert!(rel_diff(&rbar, &inv) < 1e-12);

        // A_i = [2], λ_max = 2, R = ω/2 so R̄ = ω − ω²/2.
        for omega in [0.3, 1.0, 1.7] {
            let d = make_coordinate_decomposition(&build_laplacian_1d(3).unwrap())
                .unwrap()
                .with_solver(SolverKind::ScaledRichardson { omega })
                .unwrap();
            let rbar = symmetrized_solver(&d, 0).unwrap();
            assert_relative_eq!(rbar[(0, 0)], omega - omega * omega / 2.0, epsilon = 1e-15);
            assert_relative_eq!(d.solvers()[0].matrix()[(0, 0)], omega / 2.0, epsilon = 1e-15);
        }
        assert!(symmetrized_solver(&d, 3).is_err());
    }

    #[test]
    fn contraction_factors() {
        let d = make_coordinate_decomposition(&SpdOperator::identity(2).unwrap()).unwrap();
        assert_relative_eq!(contraction_factor(&d, 0).unwrap(), 1.0, epsilon = 1e-12);

        let d = make_coordinate_decomposition(&build_laplacian_1d(4).unwrap()).unwrap();
        for i in 0..4 {
            assert_relative_eq!(contraction_factor(&d, i).unwrap(), 1.0, epsilon = 1e-10);
            assert!(subspace_contraction_factor(&d, i).unwrap() < 1e-12);
        }

        // Whole space as one subspace, ω = 1: ‖I − A/λ_max‖_A = 1 − λ_min/λ_max = 1 − 1/3.
        let d = make_block_decomposition(&build_laplacian_1d(2).unwrap(), &[vec![0, 1]])
            .unwrap()
            .with_solver(SolverKind::ScaledRichardson { omega: 1.0 })
            .unwrap();
        assert_relative_eq!(contraction_factor(&d, 0).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(subspace_contraction_factor(&d, 0).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn t_bar_matches_definition() {
        for d in test_decompositions() {
            for i in 0..d.len() {
                let ops = d.operators(i).unwrap();
                let expected = &ops.t + &ops.t_star - &ops.t_star * &ops.t;
                assert!(rel_diff(&ops.t_bar, &expected) < 1e-12);
                let inc = d.subspaces()[i].inclusion();
                let a_i = inc.transpose() * d.ambient().matrix() * inc;
                assert!(rel_diff(&ops.a_local, &a_i) < 1e-12);
                let t = inc * d.solvers()[i].matrix() * &ops.q * d.ambient().matrix();
                assert!(rel_diff(&ops.t, &t) < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn structural_invariants(
            which in 0usize..8,
            raw_u in proptest::collection::vec(-1.0f64..1.0, 5),
            raw_v in proptest::collection::vec(-1.0f64..1.0, 5),
        ) {
            let d = test_decompositions().swap_remove(which);
            let n = d.dim();
            let a = d.ambient();
            let u = Vector::from_iterator(n, raw_u.into_iter().take(n));
            let v = Vector::from_iterator(n, raw_v.into_iter().take(n));
            let mut tbar_sum = 0.0;
            for i in 0..d.len() {
                let ops = d.operators(i).unwrap();
                // A_i P_i = Q_i A
                let lhs = &ops.a_local * &ops.p;
                let rhs = &ops.q * a.matrix();
                prop_assert!(rel_diff(&lhs, &rhs) < 1e-12);
                if d.solvers()[i].is_exact() {
                    prop_assert!(rel_diff(&(&ops.t * &ops.t), &ops.t) < 1e-12);
                    let l = a.inner(&(&ops.t * &u), &v).unwrap();
                    let r = a.inner(&u, &(&ops.t * &v)).unwrap();
                    prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()));
                } else {
                    let before = a.norm(&v).unwrap();
                    let after = a.norm(&(&v - &ops.t * &v)).unwrap();
                    prop_assert!(after <= before * (1.0 + 1e-12));
                    let w = d.subspaces()[i].inclusion() * Vector::from_element(d.subspaces()[i].dim(), 1.0);
                    let before = a.norm(&w).unwrap();
                    let after = a.norm(&(&w - &ops.t * &w)).unwrap();
                    prop_assert!(after < before);
                }
                tbar_sum += a.inner(&(&ops.t_bar * &v), &v).unwrap();
            }
            let ba = psc_operator(&d, true);
            let lhs = a.inner(&(&ba * a.matrix() * &v), &v).unwrap();
            prop_assert!((lhs - tbar_sum).abs() <= 1e-12 * lhs.abs().max(1e-300));
        }
    }
}
