//! Dense symmetric positive-definite solves for small systems.

use crate::num::Real;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        SquareMatrix { dim, data: vec![T::zero(); dim * dim] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] += v;
    }

    /// Adds `w * x xᵀ` to the upper triangle; call [`Self::mirror_upper`] when done.
    pub fn rank_one_upper(&mut self, w: T, x: &[T]) {
        let n = self.dim;
        for i in 0..n {
            let wi = w * x[i];
            if wi == T::zero() {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for j in i..n {
                row[j] += wi * x[j];
            }
        }
    }

    pub fn mirror_upper(&mut self) {
        let n = self.dim;
        for i in 0..n {
            for j in 0..i {
                self.data[i * n + j] = self.data[j * n + i];
            }
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    dim: usize,
    lower: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factorizes `a`; `None` when a pivot falls below a relative tolerance,
    /// i.e. the matrix is singular or not positive definite.
    pub fn factor(a: &SquareMatrix<T>) -> Option<Self> {
        let n = a.dim;
        let scale = (0..n).map(|i| a.get(i, i).abs()).fold(T::zero(), T::max);
        if n == 0 || !(scale > T::zero()) || !scale.is_finite() {
            return None;
        }
        let tol = scale * T::epsilon() * T::from_count(n) * T::lit(16.0);
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > tol) {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Some(Cholesky { dim: n, lower: l })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim;
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }

    /// Diagonal of `A⁻¹`, column by column.
    pub fn inverse_diagonal(&self) -> Vec<T> {
        let n = self.dim;
        (0..n)
            .map(|j| {
                let mut e = vec![T::zero(); n];
                e[j] = T::one();
                self.solve(&e)[j]
            })
            .collect()
    }
}

/// Ordinary least squares with an intercept: residuals of `y` regressed on
/// the columns in `predictors` (each of length `y.len()`). `None` when the
/// design is rank deficient.
pub fn ols_residuals<T: Real>(predictors: &[&[T]], y: &[T]) -> Option<Vec<T>> {
    let n = y.len();
    let p = predictors.len() + 1;
    let mut gram = SquareMatrix::zeros(p);
    let mut rhs = vec![T::zero(); p];
    let mut row = vec![T::zero(); p];
    for i in 0..n {
        row[0] = T::one();
        for (k, col) in predictors.iter().enumerate() {
            row[k + 1] = col[i];
        }
        gram.rank_one_upper(T::one(), &row);
        for k in 0..p {
            rhs[k] += row[k] * y[i];
        }
    }
    gram.mirror_upper();
    let beta = Cholesky::factor(&gram)?.solve(&rhs);
    Some(
        (0..n)
            .map(|i| {
                let fitted =
                    beta[0] + predictors.iter().enumerate().fold(T::zero(), |acc, (k, col)| acc + beta[k + 1] * col[i]);
                y[i] - fitted
            })
            .collect(),
    )
}
