//! Compressed sparse column storage with the handful of kernels the solver needs.

/// Column-compressed sparse matrix. Row indices are sorted within each column
/// and contain no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CscMatrix { nrows, ncols, col_ptr: vec![0; ncols + 1], row_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        CscMatrix { nrows: n, ncols: n, col_ptr: (0..=n).collect(), row_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut t = Vec::with_capacity(n);
        for (i, &v) in diag.iter().enumerate() {
            if v != 0.0 {
                t.push((i, i, v));
            }
        }
        Self::from_triplets(n, n, t)
    }

    /// Duplicate entries are summed; explicit zeros are kept so patterns stay stable.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.1, t.0));
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
            last = Some((r, c));
        }
        for c in 0..ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        CscMatrix { nrows, ncols, col_ptr, row_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.col_ptr[c]..self.col_ptr[c + 1];
        self.row_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |c| self.col(c).map(move |(r, v)| (r, c, v)))
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for (r, v) in self.col(c) {
                y[r] += v * xc;
            }
        }
    }

    /// `y = A^T x`
    pub fn tr_mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for (c, yc) in y.iter_mut().enumerate() {
            *yc = self.col(c).map(|(r, v)| v * x[r]).sum();
        }
    }

    /// `y = P x` where only the upper triangle of symmetric `P` is stored.
    pub fn sym_upper_mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.ncols {
            for (r, v) in self.col(c) {
                y[r] += v * x[c];
                if r != c {
                    y[c] += v * x[r];
                }
            }
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(r, c, v)| (c, r, v)).collect())
    }

    /// Keeps entries with `row <= col`.
    pub fn upper_triangle(&self) -> Self {
        Self::from_triplets(self.nrows, self.ncols, self.triplets().filter(|&(r, c, _)| r <= c).collect())
    }

    /// `diag(left) * A * diag(right)`
    pub fn scale(&mut self, left: &[f64], right: &[f64]) {
        for c in 0..self.ncols {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                self.values[k] *= left[self.row_idx[k]] * right[c];
            }
        }
    }

    pub fn scale_all(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn col_inf_norms(&self) -> Vec<f64> {
        (0..self.ncols).map(|c| self.col(c).fold(0.0f64, |m, (_, v)| m.max(v.abs()))).collect()
    }

    pub fn row_inf_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.nrows];
        for (r, _, v) in self.triplets() {
            out[r] = out[r].max(v.abs());
        }
        out
    }

    /// Column infinity norms of a symmetric matrix stored as its upper triangle.
    pub fn sym_upper_col_inf_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.ncols];
        for (r, c, v) in self.triplets() {
            out[c] = out[c].max(v.abs());
            out[r] = out[r].max(v.abs());
        }
        out
    }

    /// Sub-matrix made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.nrows];
        for (k, &r) in rows.iter().enumerate() {
            pos[r] = k;
        }
        let t = self.triplets().filter(|&(r, _, _)| pos[r] != usize::MAX).map(|(r, c, v)| (pos[r], c, v)).collect();
        Self::from_triplets(rows.len(), self.ncols, t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] += v;
        }
        d
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
