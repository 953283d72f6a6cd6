use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix<T>")]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

#[derive(Deserialize)]
struct RawMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

// JSON cannot carry non-finite numbers, so only the shape is checked here.
impl<T> TryFrom<RawMatrix<T>> for Matrix<T> {
    type Error = Error;

    fn try_from(raw: RawMatrix<T>) -> Result<Self> {
        if raw.values.len() != raw.rows * raw.cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} needs {} values, got {}",
                raw.rows,
                raw.cols,
                raw.rows * raw.cols,
                raw.values.len()
            )));
        }
        Ok(Self {
            rows: raw.rows,
            cols: raw.cols,
            values: raw.values,
        })
    }
}

impl<T: Scalar> Matrix<T> {
    /// Builds a matrix, rejecting a wrong value count or non-finite entries.
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "ragged rows: {} vs {cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.values.chunks(self.cols.max(1)).take(self.rows)
    }

    /// New matrix holding the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self::from_raw(indices.len(), self.cols, values)
    }

    /// New matrix holding the given columns, in order.
    pub fn select_cols(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.rows * indices.len());
        for r in 0..self.rows {
            let row = self.row(r);
            values.extend(indices.iter().map(|&c| row[c]));
        }
        Self::from_raw(self.rows, indices.len(), values)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.values[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.values[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.values[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok(self.row_iter().map(|row| super::dot(row, v)).collect())
    }

    /// Solves `A x = b` for symmetric positive-definite `A` by Cholesky.
    ///
    /// When factorization fails a ridge `εI` is added, starting at 1e-8 and
    /// doubling up to 1e-2.
    pub fn solve_spd(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.rows;
        if self.cols != n {
            return Err(Error::ShapeMismatch(format!(
                "solve_spd needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        let max_ridge = 1e-2;
        let mut ridge = 0.0;
        loop {
            if let Some(l) = cholesky(self, T::of(ridge)) {
                return Ok(cholesky_solve(&l, n, rhs));
            }
            ridge = if ridge == 0.0 { 1e-8 } else { ridge * 2.0 };
            if ridge > max_ridge {
                return Err(Error::Singular { ridge: max_ridge });
            }
        }
    }
}

/// Lower Cholesky factor of `a + ridge·I`, or `None` when not positive definite.
fn cholesky<T: Scalar>(a: &Matrix<T>, ridge: T) -> Option<Vec<T>> {
    let n = a.rows;
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut d = a.get(j, j) + ridge;
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}

fn cholesky_solve<T: Scalar>(l: &[T], n: usize, rhs: &[T]) -> Vec<T> {
    let mut y = rhs.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use proptest::prelude::*;

    fn random(rng: &mut RngStream, r: usize, c: usize) -> Matrix<f64> {
        Matrix::new(r, c, (0..r * c).map(|_| rng.next_f64() * 2.0 - 1.0).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_shapes_and_non_finite() {
        assert!(Matrix::<f64>::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        let a = Matrix::<f64>::zeros(2, 3);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = RngStream::new(3);
        let m = random(&mut rng, 4, 3);
        assert_eq!(Matrix::identity(4).matmul(&m).unwrap(), m);
        assert_eq!(m.matmul(&Matrix::identity(3)).unwrap(), m);
    }

    #[test]
    fn transpose_swaps_indices() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let t = m.transpose();
        assert_eq!((t.rows(), t.cols()), (3, 2));
        assert_eq!(t.get(2, 1), 6.0);
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let b = vec![1.5, -2.0, 3.25];
        assert_eq!(Matrix::<f64>::identity(3).solve_spd(&b).unwrap(), b);
    }

    #[test]
    fn solve_random_spd_has_small_residual() {
        let mut rng = RngStream::new(17);
        for _ in 0..20 {
            let a = random(&mut rng, 5, 5);
            let spd = a.transpose().matmul(&a).unwrap();
            let mut spd_vals = spd.into_values();
            for i in 0..5 {
                spd_vals[i * 5 + i] += 0.5;
            }
            let spd = Matrix::new(5, 5, spd_vals).unwrap();
            let b: Vec<f64> = (0..5).map(|_| rng.next_f64()).collect();
            let x = spd.solve_spd(&b).unwrap();
            let back = spd.matvec(&x).unwrap();
            let resid: f64 = back.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            assert!(resid < 1e-8, "residual {resid}");
        }
    }

    #[test]
    fn singular_system_gets_ridge() {
        // Rank-one PSD matrix: plain Cholesky fails, ridge rescues it.
        let m = Matrix::<f64>::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let x = m.solve_spd(&[2.0, 2.0]).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
        let neg = Matrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(matches!(neg.solve_spd(&[1.0, 1.0]), Err(Error::Singular { .. })));
    }

    proptest! {
        #[test]
        fn matmul_is_associative(seed in 0u64..10_000, n in 1usize..6, m in 1usize..6, p in 1usize..6, q in 1usize..6) {
            let mut rng = RngStream::new(seed);
            let a = random(&mut rng, n, m);
            let b = random(&mut rng, m, p);
            let c = random(&mut rng, p, q);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.values().iter().map(|v| v.abs()).fold(1.0, f64::max);
            for (x, y) in left.values().iter().zip(right.values()) {
                prop_assert!((x - y).abs() <= 1e-9 * scale);
            }
        }
    }
}
