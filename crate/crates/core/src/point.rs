//! Dense real-valued points.
//!
//! A [`DensePoint`] is the single representation used for iterates, vertices,
//! gradients and problem data. Vectors carry a one-dimensional shape, matrices
//! a two-dimensional `[rows, cols]` shape with row-major storage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensePoint {
    data: Vec<f64>,
    shape: Vec<usize>,
}

impl DensePoint {
    pub fn new(data: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 || shape.contains(&0) {
            return Err(Error::InvalidPoint(format!("bad shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::InvalidPoint(format!(
                "shape {shape:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPoint(format!(
                "non-finite entry at index {i}"
            )));
        }
        Ok(Self { data, shape })
    }

    /// Panics on an empty slice or non-finite input.
    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(data, vec![n]).expect("invalid vector")
    }

    /// Panics if `data.len() != rows * cols` or an entry is non-finite.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self::new(data, vec![rows, cols]).expect("invalid matrix")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            data: vec![0.0; len],
            shape: shape.to_vec(),
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            data: vec![value; len],
            shape: shape.to_vec(),
        }
    }

    /// Unit vector `e_index` with the given shape.
    pub fn basis(shape: &[usize], index: usize) -> Self {
        let mut p = Self::zeros(shape);
        p.data[index] = 1.0;
        p
    }

    /// Builds a point without the finiteness scan. Internal hot paths only.
    pub(crate) fn from_parts(data: Vec<f64>, shape: Vec<usize>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { data, shape }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.data[row * c..(row + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &DensePoint) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                got: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &DensePoint) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        dot(&self.data, &other.data)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &DensePoint) {
        debug_assert_eq!(self.data.len(), x.data.len());
        for (s, xi) in self.data.iter_mut().zip(&x.data) {
            *s += alpha * xi;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for s in &mut self.data {
            *s *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> DensePoint {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// `self - other`
    pub fn sub(&self, other: &DensePoint) -> DensePoint {
        debug_assert_eq!(self.data.len(), other.data.len());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        DensePoint::from_parts(data, self.shape.clone())
    }

    /// `self + other`
    pub fn add(&self, other: &DensePoint) -> DensePoint {
        debug_assert_eq!(self.data.len(), other.data.len());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        DensePoint::from_parts(data, self.shape.clone())
    }

    /// Convex-combination step `(1 - gamma) * self + gamma * target`.
    pub fn toward(&self, target: &DensePoint, gamma: f64) -> DensePoint {
        let data = self
            .data
            .iter()
            .zip(&target.data)
            .map(|(x, v)| (1.0 - gamma) * x + gamma * v)
            .collect();
        DensePoint::from_parts(data, self.shape.clone())
    }

    /// `self - gamma * d`
    pub fn step_along(&self, direction: &DensePoint, gamma: f64) -> DensePoint {
        let data = self
            .data
            .iter()
            .zip(&direction.data)
            .map(|(x, d)| x - gamma * d)
            .collect();
        DensePoint::from_parts(data, self.shape.clone())
    }

    pub fn max_abs_diff(&self, other: &DensePoint) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Bit-pattern equality, used for vertex identity in active sets.
    pub fn bit_eq(&self, other: &DensePoint) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Matrix-vector product `A x` for a 2-D `self`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let (m, n) = (self.rows(), self.cols());
        debug_assert_eq!(n, x.len());
        (0..m)
            .map(|i| dot(&self.data[i * n..(i + 1) * n], x))
            .collect()
    }

    /// Transposed product `A^T y` for a 2-D `self`.
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        let (m, n) = (self.rows(), self.cols());
        debug_assert_eq!(m, y.len());
        let mut out = vec![0.0; n];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(&self.data[i * n..(i + 1) * n]) {
                *o += yi * a;
            }
        }
        out
    }

    pub fn transpose(&self) -> DensePoint {
        let (m, n) = (self.rows(), self.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        DensePoint::from_parts(out, vec![n, m])
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows(), self.cols(), &self.data)
    }

    pub fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> DensePoint {
        let (r, c) = m.shape();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(m[(i, j)]);
            }
        }
        DensePoint::from_parts(data, vec![r, c])
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major product of an `m x k` and a `k x n` slice.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for l in 0..k {
            let ail = a[i * k + l];
            if ail == 0.0 {
                continue;
            }
            for (o, blj) in row.iter_mut().zip(&b[l * n..(l + 1) * n]) {
                *o += ail * blj;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_bad_shapes_and_nonfinite() {
        assert!(DensePoint::new(vec![1.0, 2.0], vec![3]).is_err());
        assert!(DensePoint::new(vec![1.0], vec![0]).is_err());
        assert!(DensePoint::new(vec![f64::NAN], vec![1]).is_err());
        assert!(DensePoint::new(vec![1.0; 6], vec![2, 3]).is_ok());
    }

    #[test]
    fn arithmetic_matches_scalar_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(1..40);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let alpha = rng.random_range(-3.0..3.0);
            let pa = DensePoint::vector(a.clone());
            let pb = DensePoint::vector(b.clone());

            let mut reference = 0.0;
            for i in 0..n {
                reference += a[i] * b[i];
            }
            let got = pa.dot(&pb);
            assert!((got - reference).abs() <= 1e-12 * (1.0 + reference.abs()));

            let mut y = pa.clone();
            y.axpy(alpha, &pb);
            for i in 0..n {
                let r = a[i] + alpha * b[i];
                assert!((y.data()[i] - r).abs() <= 1e-12 * (1.0 + r.abs()));
            }
        }
    }

    #[test]
    fn matrix_products() {
        let a = DensePoint::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(a.matvec_t(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
        let at = a.transpose();
        assert_eq!(at.shape(), &[3, 2]);
        assert_eq!(at.get(2, 1), 6.0);
        let p = matmul(a.data(), at.data(), 2, 3, 2);
        assert_eq!(p, vec![14.0, 32.0, 32.0, 77.0]);
    }

    #[test]
    fn toward_and_bit_identity() {
        let x = DensePoint::vector(vec![1.0, 0.0]);
        let v = DensePoint::vector(vec![-1.0, 2.0]);
        assert_eq!(x.toward(&v, 0.5).data(), &[0.0, 1.0]);
        assert!(x.bit_eq(&x.clone()));
        assert!(!DensePoint::vector(vec![0.0]).bit_eq(&DensePoint::vector(vec![-0.0])));
    }
}
