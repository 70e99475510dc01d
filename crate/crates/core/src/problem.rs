//! Dense SPD model problems: operators, energy inner products and exact solves.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Pivots of the Cholesky factor must exceed this fraction of the largest diagonal entry.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Dense symmetric positive definite operator together with its Cholesky factor.
///
/// Symmetry is checked exactly and positive definiteness through the factorization
/// pivots, both at construction. The factor is immutable afterwards, so the operator can
/// be shared read-only between threads.
#[derive(Debug, Clone)]
pub struct SpdOperator {
    matrix: Matrix,
    factor: Cholesky<f64, Dyn>,
}

impl SpdOperator {
    pub fn new(matrix: Matrix) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 {
            return Err(Error::InvalidDimension { what: "operator", value: 0 });
        }
        if matrix.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: matrix.ncols() });
        }
        for j in 0..n {
            for i in (j + 1)..n {
                if matrix[(i, j)] != matrix[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        let factor = cholesky_checked(&matrix)?;
        Ok(Self { matrix, factor })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(Matrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Lower-triangular factor `L` with `A = L Lᵀ`.
    pub fn lower_factor(&self) -> Matrix {
        self.factor.l()
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.factor
    }

    pub fn apply(&self, v: &Vector) -> Result<Vector> {
        self.check_len(v.len())?;
        Ok(&self.matrix * v)
    }

    pub fn solve(&self, rhs: &Vector) -> Result<Vector> {
        self.check_len(rhs.len())?;
        Ok(self.factor.solve(rhs))
    }

    pub fn solve_matrix(&self, rhs: &Matrix) -> Result<Matrix> {
        self.check_len(rhs.nrows())?;
        Ok(self.factor.solve(rhs))
    }

    /// Energy inner product `(Au, v)`.
    pub fn inner(&self, u: &Vector, v: &Vector) -> Result<f64> {
        self.check_len(u.len())?;
        self.check_len(v.len())?;
        Ok(v.dot(&(&self.matrix * u)))
    }

    pub fn norm(&self, v: &Vector) -> Result<f64> {
        let value = self.inner(v, v)?;
        let norm_sq = v.norm_squared();
        if value < -1e-10 * norm_sq {
            return Err(Error::LossOfDefiniteness { value, norm_sq });
        }
        Ok(value.max(0.0).sqrt())
    }

    /// `‖v‖²_A` without the square root round trip.
    pub(crate) fn energy(&self, v: &Vector) -> f64 {
        v.dot(&(&self.matrix * v)).max(0.0)
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: len });
        }
        Ok(())
    }
}

/// Cholesky factorization with the relative pivot check used throughout the crate.
pub(crate) fn cholesky_checked(matrix: &Matrix) -> Result<Cholesky<f64, Dyn>> {
    let max_diag = matrix.diagonal().iter().fold(0.0_f64, |m, &d| m.max(d));
    let threshold = PIVOT_TOLERANCE * max_diag;
    if max_diag <= 0.0 {
        return Err(Error::NotPositiveDefinite { index: 0, pivot: max_diag });
    }
    let factor = Cholesky::new(matrix.clone()).ok_or_else(|| {
        // nalgebra does not report where it failed; find the first non-positive pivot
        // with a plain recomputation for the diagnostic.
        let (index, pivot) = first_bad_pivot(matrix, threshold);
        Error::NotPositiveDefinite { index, pivot }
    })?;
    let l = factor.l_dirty();
    for i in 0..matrix.nrows() {
        let pivot = l[(i, i)] * l[(i, i)];
        if !(pivot > threshold) {
            return Err(Error::NotPositiveDefinite { index: i, pivot });
        }
    }
    Ok(factor)
}

fn first_bad_pivot(matrix: &Matrix, threshold: f64) -> (usize, f64) {
    let n = matrix.nrows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = matrix[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > threshold) {
            return (j, d);
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = matrix[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    (n, f64::NAN)
}

#[derive(Debug, Clone)]
pub struct LinearSystem {
    operator: SpdOperator,
    rhs: Vector,
    exact: OnceLock<Vector>,
}

impl LinearSystem {
    pub fn new(operator: SpdOperator, rhs: Vector) -> Result<Self> {
        operator.check_len(rhs.len())?;
        Ok(Self { operator, rhs, exact: OnceLock::new() })
    }

    /// System whose exact solution is the given vector, `f = A u`.
    pub fn with_solution(operator: SpdOperator, solution: Vector) -> Result<Self> {
        let rhs = operator.apply(&solution)?;
        Ok(Self { operator, rhs, exact: OnceLock::new() })
    }

    pub fn operator(&self) -> &SpdOperator {
        &self.operator
    }

    pub fn rhs(&self) -> &Vector {
        &self.rhs
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn residual(&self, u: &Vector) -> Result<Vector> {
        Ok(&self.rhs - self.operator.apply(u)?)
    }

    /// Exact solution, computed once from the cached factorization.
    pub fn exact_solution(&self) -> &Vector {
        self.exact.get_or_init(|| solve_with_refinement(&self.operator, &self.rhs))
    }
}

fn solve_with_refinement(a: &SpdOperator, f: &Vector) -> Vector {
    let mut u = a.cholesky().solve(f);
    let r = f - a.matrix() * &u;
    u += a.cholesky().solve(&r);
    u
}

pub fn solve_exact(sys: &LinearSystem) -> Vector {
    sys.exact_solution().clone()
}

pub fn a_inner(a: &SpdOperator, u: &Vector, v: &Vector) -> Result<f64> {
    a.inner(u, v)
}

pub fn a_norm(a: &SpdOperator, v: &Vector) -> Result<f64> {
    a.norm(v)
}

/// Tridiagonal `[-1, 2, -1]` operator of order `n`.
pub fn build_laplacian_1d(n: usize) -> Result<SpdOperator> {
    if n == 0 {
        return Err(Error::InvalidDimension { what: "laplacian_1d", value: n });
    }
    let m = Matrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.0,
        1 => -1.0,
        _ => 0.0,
    });
    SpdOperator::new(m)
}

/// Five-point Laplacian on an `m × m` grid, lexicographic ordering.
pub fn build_laplacian_2d(m: usize) -> Result<SpdOperator> {
    if m == 0 {
        return Err(Error::InvalidDimension { what: "laplacian_2d", value: m });
    }
    let n = m * m;
    let mut a = Matrix::zeros(n, n);
    for r in 0..m {
        for c in 0..m {
            let p = r * m + c;
            a[(p, p)] = 4.0;
            if c + 1 < m {
                a[(p, p + 1)] = -1.0;
                a[(p + 1, p)] = -1.0;
            }
            if r + 1 < m {
                a[(p, p + m)] = -1.0;
                a[(p + m, p)] = -1.0;
            }
        }
    }
    SpdOperator::new(a)
}

/// `Q D Qᵀ` with a seeded Haar-distributed orthogonal `Q` and eigenvalues spaced
/// geometrically from 1 to `condition_target`.
pub fn build_random_spd(n: usize, seed: u64, condition_target: f64) -> Result<SpdOperator> {
    if n == 0 {
        return Err(Error::InvalidDimension { what: "random_spd", value: n });
    }
    if !(condition_target > 1.0) || !condition_target.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "condition_target must be a finite real > 1, got {condition_target}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let eigenvalues = Vector::from_fn(n, |k, _| {
        if n == 1 {
            1.0
        } else if k == n - 1 {
            condition_target
        } else {
            condition_target.powf(k as f64 / (n - 1) as f64)
        }
    });
    let a = &q * Matrix::from_diagonal(&eigenvalues) * q.transpose();
    let sym = Matrix::from_fn(n, n, |i, j| {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        a[(lo, hi)]
    });
    SpdOperator::new(sym)
}
