//! Dense matrices over a [`Field`] and the elimination routines the rest of
//! the crate builds on.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, DVector};

use crate::field::{Field, RealField};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for r in 0..self.rows {
            list.entry(&&self.data[r * self.cols..(r + 1) * self.cols]);
        }
        list.finish()
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl<T> Matrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from rows; `None` if the rows are ragged.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Option<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        let n = rows.len();
        Some(Matrix {
            rows: n,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>>
    where
        T: Clone,
    {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }
}

impl<T: Clone> Matrix<T> {
    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].clone())
    }

    /// The submatrix with the given row and column indices, in that order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Matrix::from_fn(rows.len(), cols.len(), |r, c| self[(rows[r], cols[c])].clone())
    }

    /// `out[perm[i], perm[j]] = self[i, j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert!(self.is_square() && perm.len() == self.rows);
        let mut inv = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        Matrix::from_fn(self.rows, self.cols, |r, c| self[(inv[r], inv[c])].clone())
    }
}

impl<F: Field> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::from_fn(rows, cols, |_, _| F::zero())
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |r, c| if r == c { F::one() } else { F::zero() })
    }

    pub fn diagonal(diag: &[F]) -> Self {
        let n = diag.len();
        Matrix::from_fn(n, n, |r, c| if r == c { diag[r].clone() } else { F::zero() })
    }

    pub fn matmul(&self, other: &Matrix<F>) -> Matrix<F> {
        assert_eq!(self.cols, other.rows, "dimension mismatch in matmul");
        let mut out: Matrix<F> = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(r, k)];
                if a.is_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let b = &other[(k, c)];
                    if b.is_zero() {
                        continue;
                    }
                    let prod = a.clone() * b.clone();
                    let cell = &mut out[(r, c)];
                    *cell = cell.clone() + prod;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(self.cols, v.len(), "dimension mismatch in matvec");
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v)
                    .filter(|(a, b)| !a.is_zero() && !b.is_zero())
                    .fold(F::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect()
    }

    pub fn sub(&self, other: &Matrix<F>) -> Matrix<F> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix::from_fn(self.rows, self.cols, |r, c| {
            self[(r, c)].clone() - other[(r, c)].clone()
        })
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(F::is_zero)
    }

    /// `I - self`.
    pub fn identity_minus(&self) -> Matrix<F> {
        Matrix::identity(self.rows).sub(self)
    }
}

impl<F: RealField> Matrix<F> {
    pub fn to_f64(&self) -> Matrix<f64> {
        self.map(F::to_f64)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.to_f64().abs()).fold(0.0, f64::max)
    }

    /// Entrywise max-norm distance, evaluated in `f64`.
    pub fn max_abs_diff(&self, other: &Matrix<F>) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.clone() - b.clone()).to_f64().abs())
            .fold(0.0, f64::max)
    }

    /// Averages with the transpose.
    pub fn symmetrized(&self) -> Matrix<F> {
        let half = F::one() / F::from_i64(2);
        Matrix::from_fn(self.rows, self.cols, |r, c| {
            if F::EXACT {
                self[(r, c)].clone()
            } else {
                (self[(r, c)].clone() + self[(c, r)].clone()) * half.clone()
            }
        })
    }

    pub fn is_symmetric(&self, rel: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|r| (0..r).all(|c| self[(r, c)].approx_eq(&self[(c, r)], rel)))
    }

    /// Positive definiteness via symmetric elimination without pivoting:
    /// every pivot (ratio of consecutive leading principal minors) must be
    /// strictly positive.
    pub fn is_positive_definite(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        let n = self.rows;
        let mut a = self.clone();
        for k in 0..n {
            let pivot = a[(k, k)].clone();
            if !pivot.is_positive() {
                return false;
            }
            for r in k + 1..n {
                if a[(r, k)].is_zero() {
                    continue;
                }
                let factor = a[(r, k)].clone() / pivot.clone();
                for c in k..n {
                    let v = a[(r, c)].clone() - factor.clone() * a[(k, c)].clone();
                    a[(r, c)] = v;
                }
            }
        }
        true
    }
}

/// Row-reduced echelon form together with the pivot columns.
pub struct Rref<F> {
    pub reduced: Matrix<F>,
    pub pivots: Vec<usize>,
}

fn pivot_row<F: Field>(a: &Matrix<F>, col: usize, start: usize) -> Option<usize> {
    (start..a.rows()).find(|&r| !a[(r, col)].is_zero())
}

/// Gauss-Jordan elimination with exact zero tests.
pub fn rref<F: Field>(m: &Matrix<F>) -> Rref<F> {
    rref_leading(m, m.cols())
}

/// Like [`rref`], but only the first `pivot_cols` columns may hold pivots;
/// the remaining columns are carried along as right-hand sides.
pub fn rref_leading<F: Field>(m: &Matrix<F>, pivot_cols: usize) -> Rref<F> {
    let mut a = m.clone();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..pivot_cols.min(a.cols()) {
        if row == a.rows() {
            break;
        }
        let Some(p) = pivot_row(&a, col, row) else {
            continue;
        };
        swap_rows(&mut a, row, p);
        let inv = F::one() / a[(row, col)].clone();
        for c in col..a.cols() {
            let v = a[(row, c)].clone() * inv.clone();
            a[(row, c)] = v;
        }
        for r in 0..a.rows() {
            if r == row || a[(r, col)].is_zero() {
                continue;
            }
            let factor = a[(r, col)].clone();
            for c in col..a.cols() {
                let v = a[(r, c)].clone() - factor.clone() * a[(row, c)].clone();
                a[(r, c)] = v;
            }
        }
        pivots.push(col);
        row += 1;
    }
    Rref { reduced: a, pivots }
}

fn swap_rows<T>(a: &mut Matrix<T>, i: usize, j: usize) {
    if i == j {
        return;
    }
    let cols = a.cols;
    for c in 0..cols {
        a.data.swap(i * cols + c, j * cols + c);
    }
}

/// Solves `m x = b` by reducing `[m | b]`; free variables are set to zero,
/// so for `m` of full column rank this is the unique solution whenever one
/// exists.
pub fn solve_on_pivot_rows<F: Field>(m: &Matrix<F>, b: &[F]) -> Vec<F> {
    let (rows, cols) = (m.rows(), m.cols());
    assert_eq!(rows, b.len());
    let aug = Matrix::from_fn(rows, cols + 1, |r, c| {
        if c < cols {
            m[(r, c)].clone()
        } else {
            b[r].clone()
        }
    });
    let Rref { reduced, pivots } = rref_leading(&aug, cols);
    let mut x = vec![F::zero(); cols];
    for (r, &p) in pivots.iter().enumerate() {
        x[p] = reduced[(r, cols)].clone();
    }
    x
}

/// Null-space basis from the reduced echelon form; one vector per free column.
pub fn kernel_exact<F: Field>(m: &Matrix<F>) -> Vec<Vec<F>> {
    let Rref { reduced, pivots } = rref(m);
    let cols = m.cols();
    (0..cols)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut v = vec![F::zero(); cols];
            v[free] = F::one();
            for (r, &p) in pivots.iter().enumerate() {
                v[p] = -reduced[(r, free)].clone();
            }
            v
        })
        .collect()
}

/// Determinant by elimination; exact backends pick the first nonzero pivot,
/// floats pivot on the largest magnitude.
pub fn determinant<F: Field + PivotScore>(m: &Matrix<F>) -> F {
    assert!(m.is_square());
    let n = m.rows();
    let mut a = m.clone();
    let mut det = F::one();
    for k in 0..n {
        let Some(p) = best_pivot(&a, k) else {
            return F::zero();
        };
        if p != k {
            swap_rows(&mut a, k, p);
            det = -det;
        }
        let pivot = a[(k, k)].clone();
        det = det * pivot.clone();
        for r in k + 1..n {
            if a[(r, k)].is_zero() {
                continue;
            }
            let factor = a[(r, k)].clone() / pivot.clone();
            for c in k..n {
                let v = a[(r, c)].clone() - factor.clone() * a[(k, c)].clone();
                a[(r, c)] = v;
            }
        }
    }
    det
}

/// General inverse by Gauss-Jordan; `None` when singular.
pub fn inverse<F: Field + PivotScore>(m: &Matrix<F>) -> Option<Matrix<F>> {
    assert!(m.is_square());
    let n = m.rows();
    let scale = m.iter().map(PivotScore::score).fold(0.0, f64::max);
    let mut a = Matrix::from_fn(n, 2 * n, |r, c| {
        if c < n {
            m[(r, c)].clone()
        } else if c - n == r {
            F::one()
        } else {
            F::zero()
        }
    });
    for k in 0..n {
        let p = best_pivot(&a, k)?;
        if !F::EXACT && a[(p, k)].score() <= 1e-14 * scale {
            return None;
        }
        swap_rows(&mut a, k, p);
        let inv = F::one() / a[(k, k)].clone();
        for c in 0..2 * n {
            let v = a[(k, c)].clone() * inv.clone();
            a[(k, c)] = v;
        }
        for r in 0..n {
            if r == k || a[(r, k)].is_zero() {
                continue;
            }
            let factor = a[(r, k)].clone();
            for c in 0..2 * n {
                let v = a[(r, c)].clone() - factor.clone() * a[(k, c)].clone();
                a[(r, c)] = v;
            }
        }
    }
    Some(Matrix::from_fn(n, n, |r, c| a[(r, c + n)].clone()))
}

/// Inverse of a unit upper-triangular matrix by back substitution.
pub fn unit_upper_inverse<F: Field>(u: &Matrix<F>) -> Matrix<F> {
    assert!(u.is_square());
    let n = u.rows();
    let mut x = Matrix::<F>::identity(n);
    for r in (0..n).rev() {
        for k in r + 1..n {
            if u[(r, k)].is_zero() {
                continue;
            }
            let coef = u[(r, k)].clone();
            for c in k..n {
                if x[(k, c)].is_zero() {
                    continue;
                }
                let v = x[(r, c)].clone() - coef.clone() * x[(k, c)].clone();
                x[(r, c)] = v;
            }
        }
    }
    x
}

/// Pivot preference used by [`determinant`] and [`inverse`].
pub trait PivotScore {
    fn score(&self) -> f64;
}

impl PivotScore for f64 {
    fn score(&self) -> f64 {
        self.abs()
    }
}

impl PivotScore for crate::field::Rational {
    fn score(&self) -> f64 {
        if num_traits::Zero::is_zero(self) {
            0.0
        } else {
            1.0
        }
    }
}

fn best_pivot<F: Field + PivotScore>(a: &Matrix<F>, k: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in k..a.rows() {
        let s = a[(r, k)].score();
        if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
            best = Some((r, s));
        }
    }
    best.map(|(r, _)| r)
}

fn to_nalgebra(m: &Matrix<f64>, min_rows: usize) -> DMatrix<f64> {
    let rows = m.rows().max(min_rows);
    DMatrix::from_fn(rows, m.cols(), |r, c| if r < m.rows() { m[(r, c)] } else { 0.0 })
}

/// Number of singular values above `rtol` times the largest one.
pub fn svd_rank(m: &Matrix<f64>, rtol: f64) -> usize {
    svd_rank_scaled(m, rtol, 0.0)
}

/// Like [`svd_rank`], with the threshold measured against
/// `max(largest singular value, scale)`. A positive `scale` keeps round-off
/// in a matrix that should vanish from counting as rank.
pub fn svd_rank_scaled(m: &Matrix<f64>, rtol: f64, scale: f64) -> usize {
    if m.rows() == 0 || m.cols() == 0 {
        return 0;
    }
    let sv = to_nalgebra(m, 0).singular_values();
    let reference = sv.iter().copied().fold(scale, f64::max);
    if reference == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * reference).count()
}

/// Least-squares solution through the SVD.
pub fn svd_least_squares(m: &Matrix<f64>, b: &[f64]) -> Vec<f64> {
    if m.cols() == 0 {
        return Vec::new();
    }
    let svd = to_nalgebra(m, 0).svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let rhs = DVector::from_column_slice(b);
    svd.solve(&rhs, crate::field::RANK_RTOL * smax)
        .map(|x| x.iter().copied().collect())
        .unwrap_or_else(|_| vec![0.0; m.cols()])
}

/// Right singular vectors for the numerically zero singular values.
pub fn svd_kernel(m: &Matrix<f64>, rtol: f64) -> Vec<Vec<f64>> {
    let cols = m.cols();
    if cols == 0 {
        return Vec::new();
    }
    if m.rows() == 0 {
        return (0..cols)
            .map(|c| (0..cols).map(|k| if k == c { 1.0 } else { 0.0 }).collect())
            .collect();
    }
    let svd = to_nalgebra(m, cols).svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| smax == 0.0 || s <= rtol * smax)
        .map(|(k, _)| v_t.row(k).iter().copied().collect())
        .collect()
}

/// 2-norm condition number of a square `f64` matrix.
pub fn condition_number(m: &Matrix<f64>) -> f64 {
    let sv = to_nalgebra(m, 0).singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ratio, Rational};

    fn q(rows: &[&[i64]]) -> Matrix<Rational> {
        Matrix::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&v| ratio(v, 1)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn exact_rank_and_kernel() {
        let m = q(&[&[1, 2, 3], &[2, 4, 6], &[1, 0, 1]]);
        assert_eq!(Rational::rank(&m), 2);
        let ker = Rational::kernel(&m);
        assert_eq!(ker.len(), 1);
        assert!(m.matvec(&ker[0]).iter().all(Field::is_zero));
    }

    #[test]
    fn float_rank_uses_relative_tolerance() {
        let m = Matrix::from_rows(vec![vec![1e8, 0.0], vec![0.0, 1e-3]]).unwrap();
        assert_eq!(f64::rank(&m), 1);
        let m = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1e-3]]).unwrap();
        assert_eq!(f64::rank(&m), 2);
        assert_eq!(f64::rank(&Matrix::<f64>::zeros(2, 1)), 0);
        assert_eq!(f64::rank(&Matrix::<f64>::zeros(0, 1)), 0);
    }

    #[test]
    fn float_kernel_of_wide_matrix() {
        let m = Matrix::from_rows(vec![vec![1.0, -1.0]]).unwrap();
        let ker = f64::kernel(&m);
        assert_eq!(ker.len(), 1);
        assert!((ker[0][0] - ker[0][1]).abs() < 1e-12);
    }

    #[test]
    fn inverse_determinant_and_pd() {
        let m = q(&[&[2, -1, 0], &[-1, 2, -1], &[0, -1, 2]]);
        assert_eq!(determinant(&m), ratio(4, 1));
        let inv = inverse(&m).unwrap();
        assert_eq!(m.matmul(&inv), Matrix::identity(3));
        assert!(m.is_positive_definite());
        assert!(!q(&[&[1, 2], &[2, 1]]).is_positive_definite());
        assert!(inverse(&q(&[&[1, 2], &[2, 4]])).is_none());
        let f = m.to_f64();
        assert!((determinant(&f) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn unit_upper_inverse_matches_gauss_jordan() {
        let u = q(&[&[1, -2, 3], &[0, 1, -5], &[0, 0, 1]]);
        assert_eq!(unit_upper_inverse(&u), inverse(&u).unwrap());
    }

    #[test]
    fn solve_reads_pivot_rows() {
        let m = q(&[&[1, 0], &[0, 2], &[1, 1]]);
        let x = solve_on_pivot_rows(&m, &[ratio(1, 1), ratio(4, 1), ratio(3, 1)]);
        assert_eq!(x, vec![ratio(1, 1), ratio(2, 1)]);
    }
}
