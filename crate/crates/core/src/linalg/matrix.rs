use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    /// Builds a matrix from user data. Rejects empty shapes, a length
    /// mismatch, and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                name: "matrix data".into(),
                expected: vec![rows, cols],
                actual: vec![data.len()],
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix input".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Wraps a buffer without the finiteness scan. Length must match.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidConfig("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_raw(rows, cols, data)
    }

    pub fn diag(values: &[T]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self.data[i * self.cols + j]);
            }
        }
        Self::from_raw(self.cols, self.rows, out)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(self.mismatch(other, op));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_raw(self.rows, self.cols, data))
    }

    pub(crate) fn mismatch(&self, other: &Self, op: &'static str) -> Error {
        Error::DimensionMismatch {
            op,
            left_rows: self.rows,
            left_cols: self.cols,
            right_rows: other.rows,
            right_cols: other.cols,
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        matmul(self, other)
    }

    pub fn frobenius_norm(&self) -> T {
        frobenius_norm(self)
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Standard matrix product `a · b`.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(a.mismatch(b, "matmul"));
    }
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let out_row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a.data[i * k + p];
            if aip.is_zero() {
                continue;
            }
            let b_row = &b.data[p * m..(p + 1) * m];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
    Ok(Matrix::from_raw(n, m, out))
}

pub fn frobenius_norm<T: Scalar>(m: &Matrix<T>) -> T {
    m.data.iter().map(|&x| x * x).sum::<T>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| {
            let mut s = 0.0;
            for p in 0..a.cols() {
                s += a[(i, p)] * b[(p, j)];
            }
            s
        })
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, 3, 4);
        assert_eq!(Matrix::identity(3).matmul(&a).unwrap(), a);
    }

    #[test]
    fn two_by_two_product() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), (2, 1));
        assert_eq!(c.as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&mut rng, 7, 5);
        let b = random(&mut rng, 5, 3);
        let got = a.matmul(&b).unwrap();
        let want = naive(&a, &b);
        for (x, y) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn associativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, 4, 6);
        let b = random(&mut rng, 6, 2);
        let c = random(&mut rng, 2, 5);
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        assert!(left.sub(&right).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_names_shapes() {
        let a = Matrix::<f64>::zeros(2, 3);
        let b = Matrix::<f64>::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("2x3"), "{err}");
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(Matrix::<f64>::zeros(3, 2).frobenius_norm(), 0.0);
        assert_eq!(Matrix::<f64>::identity(4).frobenius_norm(), 2.0);
        let m = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.frobenius_norm(), 5.0);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::<f64>::new(0, 2, vec![]).is_err());
    }
}
