//! Dense and compressed-row matrices, plus the small operator trait the GCN
//! engine uses so the same forward/backward code runs over either storage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `self · rhs`, skipping zero entries of `self` (features and
    /// adjacency rows are mostly zero).
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(out_row, a, rhs.row(k));
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn t_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows {
            return Err(Error::Dimension(format!(
                "t_matmul {}x{} by {}x{}",
                self.cols, self.rows, rhs.rows, rhs.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let rhs_row = rhs.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a != 0.0 {
                    axpy(&mut out.data[i * rhs.cols..(i + 1) * rhs.cols], a, rhs_row);
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compressed sparse row matrix. Entries are kept in row order with column
/// indices ascending inside each row; explicit zeros are allowed and keep
/// their slot (gradients are reported per stored entry).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= rows || *c >= cols) {
            return Err(Error::Dimension(format!(
                "triplet ({r},{c}) outside {rows}x{cols}"
            )));
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Binary matrix from per-row active column lists.
    pub fn from_binary_rows(cols: usize, active: &[Vec<usize>]) -> Result<Self> {
        let triplets = active
            .iter()
            .enumerate()
            .flat_map(|(r, cs)| cs.iter().map(move |&c| (r, c, 1.0)))
            .collect();
        Self::from_triplets(active.len(), cols, triplets)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Stored entries of row `r` as `(col, value)` pairs.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Coordinates of every stored entry, in storage order.
    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |r| {
            self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
                .iter()
                .map(move |&c| (r, c))
        })
    }

    /// Storage slot of entry `(r, c)`, if stored.
    pub fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .binary_search(&c)
            .ok()
            .map(|k| span.start + k)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for (slot, (r, c)) in self.coords().enumerate() {
            let cur = d.get(r, c);
            d.set(r, c, cur + self.values[slot]);
        }
        d
    }
}

/// Linear operand of the GCN engine: either the propagation operator `Â` or
/// the feature matrix `X`. Gradients with respect to the operand are reported
/// per stored entry, in the operand's own storage order.
pub trait Operand {
    fn shape(&self) -> (usize, usize);

    /// `self · rhs`
    fn mul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix>;

    /// `selfᵀ · rhs`
    fn t_mul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix>;

    /// Number of stored entries (the length of an entry gradient).
    fn stored_len(&self) -> usize;

    /// For every stored entry `(i, j)` adds `left.row(i) · right.row(j)` into
    /// `out[slot]`. This is the gradient of `tr(Gᵀ · self · right)` when
    /// `left = G`.
    fn accumulate_entry_grad(&self, left: &DenseMatrix, right: &DenseMatrix, out: &mut [f64]);
}

impl Operand for DenseMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn mul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.matmul(rhs)
    }

    fn t_mul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.t_matmul(rhs)
    }

    fn stored_len(&self) -> usize {
        self.data.len()
    }

    fn accumulate_entry_grad(&self, left: &DenseMatrix, right: &DenseMatrix, out: &mut [f64]) {
        for i in 0..self.rows {
            let l = left.row(i);
            if l.iter().all(|&v| v == 0.0) {
                continue;
            }
            for j in 0..self.cols {
                out[i * self.cols + j] += dot(l, right.row(j));
            }
        }
    }
}

impl Operand for CsrMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn mul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows() {
            return Err(Error::Dimension(format!(
                "sparse mul {}x{} by {}x{}",
                self.rows,
                self.cols,
                rhs.rows(),
                rhs.cols()
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols());
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                if v != 0.0 {
                    axpy(out.row_mut(r), v, rhs.row(c));
                }
            }
        }
        Ok(out)
    }

    fn t_mul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows() {
            return Err(Error::Dimension(format!(
                "sparse t_mul {}x{} by {}x{}",
                self.cols,
                self.rows,
                rhs.rows(),
                rhs.cols()
            )));
        }
        let mut out = DenseMatrix::zeros(self.cols, rhs.cols());
        for r in 0..self.rows {
            let rhs_row = rhs.row(r);
            for (c, v) in self.row_entries(r) {
                if v != 0.0 {
                    axpy(out.row_mut(c), v, rhs_row);
                }
            }
        }
        Ok(out)
    }

    fn stored_len(&self) -> usize {
        self.values.len()
    }

    fn accumulate_entry_grad(&self, left: &DenseMatrix, right: &DenseMatrix, out: &mut [f64]) {
        for r in 0..self.rows {
            let l = left.row(r);
            if l.iter().all(|&v| v == 0.0) {
                continue;
            }
            for slot in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[slot] += dot(l, right.row(self.col_idx[slot]));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_hand_product() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 3.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![4.0, 5.0], vec![6.0, 7.0]]).unwrap();
        let p = a.matmul(&b).unwrap();
        assert_eq!(p.as_slice(), &[16.0, 19.0, 18.0, 21.0]);
        let t = a.t_matmul(&b).unwrap();
        assert_eq!(t, a.transpose().matmul(&b).unwrap());
    }

    #[test]
    fn sparse_and_dense_agree() {
        let s = CsrMatrix::from_triplets(3, 2, vec![(2, 1, 2.0), (0, 0, 1.0), (0, 0, 0.5), (1, 1, -1.0)])
            .unwrap();
        assert_eq!(s.nnz(), 3);
        let d = s.to_dense();
        let rhs = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(s.mul(&rhs).unwrap(), d.matmul(&rhs).unwrap());
        let rhs3 = DenseMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert_eq!(s.t_mul(&rhs3).unwrap(), d.t_matmul(&rhs3).unwrap());
        assert_eq!(s.slot(2, 1), Some(2));
        assert_eq!(s.slot(2, 0), None);
    }

    #[test]
    fn dimension_errors() {
        assert!(DenseMatrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::from_vec(1, 1, vec![f64::NAN]).is_err());
        let a = DenseMatrix::zeros(2, 3);
        assert!(a.matmul(&DenseMatrix::zeros(2, 3)).is_err());
        assert!(CsrMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
    }
}
