//! Dense row-major f64 matrix, sized for desk-scale models.

use crate::error::{Error, Result};
use crate::numeric::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::usage(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::usage("ragged rows in matrix literal"));
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    /// Gaussian(0, stddev^2) entries drawn from the given stream.
    pub fn gaussian(rows: usize, cols: usize, stddev: f64, rng: &mut Rng) -> Result<Self> {
        if stddev <= 0.0 {
            return Err(Error::usage("gaussian init requires stddev > 0"));
        }
        let data = (0..rows * cols)
            .map(|_| stddev * rng.standard_normal())
            .collect();
        Ok(Matrix { rows, cols, data })
    }

    /// Each column j gets a single 1 at row (j mod rows).
    pub fn one_hot_columns(rows: usize, cols: usize) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for j in 0..cols {
            m.data[(j % rows) * cols + j] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Copies column `c` into `out` (length = rows).
    pub fn col_into(&self, c: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.rows);
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = self.data[r * self.cols + c];
        }
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.col_into(c, &mut out);
        out
    }

    /// column c += v
    pub fn add_to_col(&mut self, c: usize, v: &[f64]) {
        debug_assert_eq!(v.len(), self.rows);
        for (r, &x) in v.iter().enumerate() {
            self.data[r * self.cols + c] += x;
        }
    }

    /// self += scale * a * b^T
    pub fn add_outer(&mut self, a: &[f64], b: &[f64], scale: f64) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (slot, &bc) in row.iter_mut().zip(b) {
                *slot += scale * ar * bc;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// Standard matrix-vector product.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::usage(format!(
                "matvec: matrix is {}x{} but vector has length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for (r, slot) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *slot = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        Ok(out)
    }

    /// Transposed product M^T v.
    pub fn matvec_t(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::usage(format!(
                "matvec_t: matrix is {}x{} but vector has length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (slot, &m) in out.iter_mut().zip(row) {
                *slot += m * vr;
            }
        }
        Ok(out)
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|x| !x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matvec_is_id() {
        let m = Matrix::identity(4);
        let v = vec![1.5, -2.0, 0.25, 7.0];
        assert_eq!(m.matvec(&v).unwrap(), v);
    }

    #[test]
    fn zero_matvec_is_zero() {
        let m = Matrix::zeros(3, 2);
        assert_eq!(m.matvec(&[4.0, 5.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn matvec_hand_example() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(m.matvec(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn matvec_dimension_mismatch_is_usage_error() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(m.matvec(&[1.0, 2.0]), Err(Error::Usage(_))));
        assert!(matches!(m.matvec_t(&[1.0, 2.0, 3.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn gaussian_is_deterministic_per_stream() {
        let a = Matrix::gaussian(4, 5, 1.0, &mut Rng::stream(9, "w")).unwrap();
        let b = Matrix::gaussian(4, 5, 1.0, &mut Rng::stream(9, "w")).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert_eq!((a.rows(), a.cols()), (4, 5));
    }

    #[test]
    fn gaussian_sample_statistics() {
        let m = Matrix::gaussian(100, 100, 1.0, &mut Rng::stream(1, "stats")).unwrap();
        let n = m.len() as f64;
        let mean: f64 = m.as_slice().iter().sum::<f64>() / n;
        let var: f64 = m.as_slice().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.05, "std {}", var.sqrt());
    }

    #[test]
    fn one_hot_columns_square_is_identity() {
        assert_eq!(Matrix::one_hot_columns(3, 3), Matrix::identity(3));
        let m = Matrix::one_hot_columns(2, 5);
        for j in 0..5 {
            let col = m.col(j);
            assert_eq!(col.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(col[j % 2], 1.0);
        }
    }

    #[test]
    fn add_outer_matches_definition() {
        let mut g = Matrix::zeros(2, 3);
        g.add_outer(&[1.0, 2.0], &[3.0, 4.0, 5.0], 0.5);
        assert_eq!(g.row(0), &[1.5, 2.0, 2.5]);
        assert_eq!(g.row(1), &[3.0, 4.0, 5.0]);
    }
}
