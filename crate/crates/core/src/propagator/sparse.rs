use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Compressed sparse rows over the exact nonzeros of a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let (nrows, ncols) = m.shape();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = m[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// `(col, value)` pairs of row `i`, in column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn mul_vec(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        debug_assert_eq!(x.len(), self.ncols);
        DVector::from_iterator(
            self.nrows,
            (0..self.nrows).map(|i| self.row(i).fold(Complex64::new(0.0, 0.0), |acc, (j, v)| acc + v * x[j])),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_product() {
        let m = DMatrix::from_fn(4, 4, |i, j| {
            if (i + j) % 3 == 0 { Complex64::new(i as f64 - j as f64, 0.5 * j as f64) } else { Complex64::new(0.0, 0.0) }
        });
        let x = DVector::from_fn(4, |i, _| Complex64::new(1.0 + i as f64, -(i as f64)));
        let csr = CsrMatrix::from_dense(&m);
        let diff = (csr.mul_vec(&x) - &m * &x).norm();
        assert!(diff < 1e-14);
        assert_eq!(csr.nnz(), m.iter().filter(|z| z.norm() != 0.0).count());
    }
}
