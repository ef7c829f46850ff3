//! Row-major dense `f64` arrays.
//!
//! Shapes are `[]` (scalar), `[n]` (vector, treated as a column in products)
//! or `[rows, cols]` (matrix).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() || shape.len() > 2 {
            return Err(Error::ShapeMismatch {
                op: "DenseArray::new",
                detail: format!("shape {:?} vs {} values", shape, data.len()),
            });
        }
        Ok(DenseArray { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        DenseArray { shape: Vec::new(), data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        DenseArray { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        DenseArray { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        DenseArray { shape: shape.to_vec(), data: vec![value; len] }
    }

    pub fn zeros_like(other: &DenseArray) -> Self {
        Self::zeros(&other.shape)
    }

    /// Builds an `rows x cols` matrix from `cols` column vectors.
    pub fn from_columns(columns: &[&[f64]]) -> Result<Self> {
        let cols = columns.len();
        if cols == 0 {
            return Err(Error::EmptyInput { op: "from_columns" });
        }
        let rows = columns[0].len();
        let mut data = vec![0.0; rows * cols];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::ShapeMismatch {
                    op: "from_columns",
                    detail: format!("column {j} has {} rows, expected {rows}", col.len()),
                });
            }
            for (i, &v) in col.iter().enumerate() {
                data[i * cols + j] = v;
            }
        }
        Ok(DenseArray { shape: vec![rows, cols], data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        DenseArray { shape: vec![n, n], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    pub fn is_vector(&self) -> bool {
        self.shape.len() == 1
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    /// Rows when viewed as a matrix; a vector is an `n x 1` column.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[1],
            _ => 1,
        }
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let cols = self.cols();
        self.data[row * cols + col] = value;
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        let cols = self.cols();
        (0..self.rows()).map(|r| self.data[r * cols + col]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseArray {
        DenseArray { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &DenseArray, f: impl Fn(f64, f64) -> f64) -> DenseArray {
        debug_assert_eq!(self.data.len(), other.data.len());
        DenseArray {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &DenseArray) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &DenseArray) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }

    pub fn transpose(&self) -> DenseArray {
        let (r, c) = (self.rows(), self.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        DenseArray { shape: vec![c, r], data }
    }

    /// Same data, new shape of equal size.
    pub fn reshaped(&self, shape: &[usize]) -> Result<DenseArray> {
        DenseArray::new(shape.to_vec(), self.data.clone())
    }
}

/// `a (r x k) * b (k x c)`; a vector right operand is a `k x 1` column and
/// yields a vector.
pub fn matmul(a: &DenseArray, b: &DenseArray) -> Result<DenseArray> {
    if !a.is_matrix() || b.shape().is_empty() {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            detail: format!("{:?} x {:?}", a.shape(), b.shape()),
        });
    }
    let (r, k) = (a.rows(), a.cols());
    if b.rows() != k {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            detail: format!("{:?} x {:?}", a.shape(), b.shape()),
        });
    }
    let c = b.cols();
    let (ad, bd) = (a.data(), b.data());
    if c == 1 {
        let out = ad.chunks_exact(k).map(|row| row.iter().zip(bd).map(|(x, y)| x * y).sum()).collect();
        let shape = if b.is_vector() { vec![r] } else { vec![r, 1] };
        return DenseArray::new(shape, out);
    }
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &ad[i * k..(i + 1) * k];
        let dst = &mut out[i * c..(i + 1) * c];
        for (p, &av) in row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let src = &bd[p * c..(p + 1) * c];
            for (d, &bv) in dst.iter_mut().zip(src) {
                *d += av * bv;
            }
        }
    }
    let shape = if b.is_vector() { vec![r] } else { vec![r, c] };
    DenseArray::new(shape, out)
}

/// `a^T b` without materialising the transpose.
pub fn matmul_tn(a: &DenseArray, b: &DenseArray) -> Result<DenseArray> {
    if !a.is_matrix() || a.rows() != b.rows() {
        return Err(Error::ShapeMismatch {
            op: "matmul_tn",
            detail: format!("{:?}^T x {:?}", a.shape(), b.shape()),
        });
    }
    let (k, r) = (a.rows(), a.cols());
    let c = b.cols();
    let mut out = vec![0.0; r * c];
    let (ad, bd) = (a.data(), b.data());
    for p in 0..k {
        let arow = &ad[p * r..(p + 1) * r];
        let brow = &bd[p * c..(p + 1) * c];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let dst = &mut out[i * c..(i + 1) * c];
            for (d, &bv) in dst.iter_mut().zip(brow) {
                *d += av * bv;
            }
        }
    }
    let shape = if b.is_vector() { vec![r] } else { vec![r, c] };
    DenseArray::new(shape, out)
}

/// `a b^T`; vectors are columns, so two vectors give their outer product.
pub fn matmul_nt(a: &DenseArray, b: &DenseArray) -> Result<DenseArray> {
    if a.cols() != b.cols() {
        return Err(Error::ShapeMismatch {
            op: "matmul_nt",
            detail: format!("{:?} x {:?}^T", a.shape(), b.shape()),
        });
    }
    let (r, k, c) = (a.rows(), a.cols(), b.rows());
    let mut out = vec![0.0; r * c];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..r {
        let arow = &ad[i * k..(i + 1) * k];
        for j in 0..c {
            let brow = &bd[j * k..(j + 1) * k];
            out[i * c + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    DenseArray::new(vec![r, c], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matrix_vector() {
        let a = DenseArray::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = DenseArray::vector(vec![1.0, 1.0]);
        assert_eq!(matmul(&a, &x).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn transposed_products_agree() {
        let a = DenseArray::matrix(2, 3, vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]).unwrap();
        let b = DenseArray::matrix(2, 2, vec![0.3, 1.0, -2.0, 0.5]).unwrap();
        let via_t = matmul(&a.transpose(), &b).unwrap();
        assert_eq!(matmul_tn(&a, &b).unwrap(), via_t);
        let c = DenseArray::matrix(4, 3, (0..12).map(|v| v as f64 * 0.1).collect()).unwrap();
        assert_eq!(matmul_nt(&a, &c).unwrap(), matmul(&a, &c.transpose()).unwrap());
    }

    #[test]
    fn new_rejects_bad_shape() {
        assert!(DenseArray::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn columns_roundtrip() {
        let m = DenseArray::from_columns(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]).unwrap();
        assert_eq!(m.shape(), &[2, 3]);
        assert_eq!(m.column(1), vec![3.0, 4.0]);
    }
}
