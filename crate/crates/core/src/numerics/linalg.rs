use std::ops::{Deref, Index};

use crate::{Result, SalError};

/// Fixed-length vector of reals. Finiteness is checked where values enter
/// or leave the crate (training steps, parsers), not on every construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(entries: Vec<f64>) -> Self {
        DenseVector(entries)
    }

    pub fn zeros(len: usize) -> Self {
        DenseVector(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &[f64]) {
        assert_eq!(self.0.len(), other.len(), "axpy length mismatch");
        for (a, b) in self.0.iter_mut().zip(other) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.0 {
            *a *= alpha;
        }
    }

    pub fn sub(&self, other: &DenseVector) -> Result<DenseVector> {
        check_len(self.len(), other.len())?;
        Ok(DenseVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn normalized(&self) -> Option<DenseVector> {
        let n = l2_norm(self);
        if n > 0.0 {
            Some(DenseVector(self.0.iter().map(|v| v / n).collect()))
        } else {
            None
        }
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        DenseVector::new(v)
    }
}

impl FromIterator<f64> for DenseVector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        DenseVector::new(iter.into_iter().collect())
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(SalError::DimensionMismatch { expected, actual })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(dot_unchecked(a, b))
}

pub(crate) fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len(rows * cols, data.len())?;
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Stacks equal-length rows. An empty list yields a `0 x cols` matrix.
    pub fn from_rows(rows: &[DenseVector], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_len(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// `self * x`
    pub fn matvec(&self, x: &[f64]) -> Result<DenseVector> {
        check_len(self.cols, x.len())?;
        Ok(self.iter_rows().map(|r| dot_unchecked(r, x)).collect())
    }

    /// `selfᵀ * y`
    pub fn transpose_matvec(&self, y: &[f64]) -> Result<DenseVector> {
        check_len(self.rows, y.len())?;
        let mut out = vec![0.0; self.cols];
        for (r, &w) in self.iter_rows().zip(y) {
            for (o, v) in out.iter_mut().zip(r) {
                *o += w * v;
            }
        }
        Ok(DenseVector::new(out))
    }

    /// `selfᵀ * self`, a symmetric `cols x cols` matrix.
    pub fn gram(&self) -> DenseMatrix {
        let n = self.cols;
        let mut g = DenseMatrix::zeros(n, n);
        for r in self.iter_rows() {
            for i in 0..n {
                let ri = r[i];
                if ri == 0.0 {
                    continue;
                }
                let out = &mut g.data[i * n..(i + 1) * n];
                for j in i..n {
                    out[j] += ri * r[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i];
            }
        }
        g
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&[3.0, 4.0], &[0.6, 0.8]).unwrap(), 5.0);
        assert_eq!(dot(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            dot(&[1.0], &[1.0, 2.0]),
            Err(SalError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn norm_examples() {
        assert_eq!(l2_norm(&[3.0, 4.0]), 5.0);
        assert_eq!(l2_norm(&[0.0; 5]), 0.0);
        assert_eq!(l2_norm(&[0.0, 1.0, 0.0]), 1.0);
    }

    #[test]
    fn dot_self_is_squared_norm() {
        let mut rng = crate::numerics::SeededRng::new(3);
        for _ in 0..50 {
            let a: Vec<f64> = (0..17).map(|_| rng.standard_normal()).collect();
            let n = l2_norm(&a);
            let d = dot(&a, &a).unwrap();
            assert!((d - n * n).abs() <= 1e-12 * d.max(1.0));
        }
    }

    #[test]
    fn gram_matches_explicit_product() {
        let m = DenseMatrix::from_row_major(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let g = m.gram();
        assert_eq!(g.as_slice(), &[35.0, 44.0, 44.0, 56.0]);
    }

    #[test]
    fn matvec_and_transpose() {
        let m = DenseMatrix::from_row_major(2, 3, vec![1.0, 0.0, 2.0, 0.0, 1.0, -1.0]).unwrap();
        assert_eq!(m.matvec(&[1.0, 2.0, 3.0]).unwrap().as_slice(), &[7.0, -1.0]);
        assert_eq!(
            m.transpose_matvec(&[1.0, 2.0]).unwrap().as_slice(),
            &[1.0, 2.0, 0.0]
        );
        assert!(m.matvec(&[1.0]).is_err());
    }
}
