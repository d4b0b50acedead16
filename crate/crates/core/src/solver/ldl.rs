//! Sparse `L D L^T` factorization for symmetric quasi-definite matrices.
//!
//! The matrix is supplied as its upper triangle. A minimum-degree ordering is
//! computed once from the sparsity pattern; numeric refactorization with new
//! values (same pattern) reuses the ordering and elimination tree. No pivoting
//! is performed, which is sound for quasi-definite KKT systems.

use std::collections::BTreeSet;

use super::csc::CscMatrix;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorError {
    NotUpperTriangular,
    ZeroPivot(usize),
}

/// Minimum-degree elimination order on the graph of a symmetric pattern.
/// Ties go to the lowest index so the ordering is deterministic.
pub fn minimum_degree_order(upper: &CscMatrix) -> Vec<usize> {
    let n = upper.ncols;
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (r, c, _) in upper.triplets() {
        if r != c {
            adj[r].insert(c);
            adj[c].insert(r);
        }
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, v)) = queue.pop_first() {
        order.push(v);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
        }
        for (k, &u) in nbrs.iter().enumerate() {
            for &w in &nbrs[k + 1..] {
                adj[u].insert(w);
                adj[w].insert(u);
            }
        }
        for &u in &nbrs {
            queue.insert((adj[u].len(), u));
        }
    }
    order
}

/// Symmetric permutation `P A P^T` of an upper-triangular matrix, returned as
/// an upper triangle together with the index of each original entry in the
/// permuted value array.
fn permute_upper(upper: &CscMatrix, inv_perm: &[usize]) -> (CscMatrix, Vec<usize>) {
    let n = upper.ncols;
    let mut entries: Vec<(usize, usize, usize)> = Vec::with_capacity(upper.nnz());
    for c in 0..n {
        for k in upper.col_ptr[c]..upper.col_ptr[c + 1] {
            let r = upper.row_idx[k];
            let (pr, pc) = (inv_perm[r], inv_perm[c]);
            let (i, j) = if pr <= pc { (pr, pc) } else { (pc, pr) };
            entries.push((i, j, k));
        }
    }
    entries.sort_by_key(|t| (t.1, t.0));
    let mut col_ptr = vec![0usize; n + 1];
    let mut row_idx = Vec::with_capacity(entries.len());
    let mut values = Vec::with_capacity(entries.len());
    let mut map = vec![0usize; upper.nnz()];
    for (pos, &(i, j, k)) in entries.iter().enumerate() {
        row_idx.push(i);
        values.push(upper.values[k]);
        col_ptr[j + 1] += 1;
        map[k] = pos;
    }
    for c in 0..n {
        col_ptr[c + 1] += col_ptr[c];
    }
    (CscMatrix { nrows: n, ncols: n, col_ptr, row_idx, values }, map)
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    /// position of each original upper-triangle entry in `permuted.values`
    value_map: Vec<usize>,
    permuted: CscMatrix,
    etree: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    d_inv: Vec<f64>,
    positive_pivots: usize,
}

impl LdlFactor {
    /// Orders, analyses and factors `upper` (the upper triangle of a symmetric matrix).
    pub fn new(upper: &CscMatrix) -> Result<Self, FactorError> {
        let n = upper.ncols;
        if upper.triplets().any(|(r, c, _)| r > c) {
            return Err(FactorError::NotUpperTriangular);
        }
        let perm = minimum_degree_order(upper);
        let mut inv_perm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv_perm[p] = k;
        }
        let (permuted, value_map) = permute_upper(upper, &inv_perm);

        // elimination tree and column counts
        let mut etree = vec![NONE; n];
        let mut l_nz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for k in permuted.col_ptr[j]..permuted.col_ptr[j + 1] {
                let mut i = permuted.row_idx[k];
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    l_nz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut l_ptr = vec![0usize; n + 1];
        for i in 0..n {
            l_ptr[i + 1] = l_ptr[i] + l_nz[i];
        }
        let total = l_ptr[n];
        let mut f = LdlFactor {
            n,
            perm,
            value_map,
            permuted,
            etree,
            l_ptr,
            l_idx: vec![0; total],
            l_val: vec![0.0; total],
            d_inv: vec![0.0; n],
            positive_pivots: 0,
        };
        f.numeric()?;
        Ok(f)
    }

    /// Refactors with new values for the same pattern as the matrix given to [`new`](Self::new).
    pub fn refactor(&mut self, upper_values: &[f64]) -> Result<(), FactorError> {
        for (k, &v) in upper_values.iter().enumerate() {
            self.permuted.values[self.value_map[k]] = v;
        }
        self.numeric()
    }

    /// Overwrites a single entry (indexed in the original upper-triangle value array) and
    /// leaves refactoring to the caller.
    pub fn set_value(&mut self, original_index: usize, value: f64) {
        self.permuted.values[self.value_map[original_index]] = value;
    }

    pub fn refactor_in_place(&mut self) -> Result<(), FactorError> {
        self.numeric()
    }

    pub fn nnz_l(&self) -> usize {
        self.l_idx.len()
    }

    /// Number of positive entries of `D`; equals the size of the positive-definite
    /// block for a quasi-definite matrix.
    pub fn positive_pivots(&self) -> usize {
        self.positive_pivots
    }

    fn numeric(&mut self) -> Result<(), FactorError> {
        let n = self.n;
        let a = &self.permuted;
        let mut d = vec![0.0f64; n];
        let mut y_vals = vec![0.0f64; n];
        let mut y_used = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.l_ptr[..n].to_vec();

        for k in 0..n {
            let mut nnz_y = 0;
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let b = a.row_idx[p];
                if b == k {
                    d[k] = a.values[p];
                    continue;
                }
                y_vals[b] = a.values[p];
                if !y_used[b] {
                    y_used[b] = true;
                    elim[0] = b;
                    let mut n_elim = 1;
                    let mut next = self.etree[b];
                    while next != NONE && next < k {
                        if y_used[next] {
                            break;
                        }
                        y_used[next] = true;
                        elim[n_elim] = next;
                        n_elim += 1;
                        next = self.etree[next];
                    }
                    while n_elim > 0 {
                        n_elim -= 1;
                        y_idx[nnz_y] = elim[n_elim];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let end = next_space[c];
                let yc = y_vals[c];
                for j in self.l_ptr[c]..end {
                    y_vals[self.l_idx[j]] -= self.l_val[j] * yc;
                }
                self.l_idx[end] = k;
                let l = yc * self.d_inv[c];
                self.l_val[end] = l;
                d[k] -= yc * l;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(FactorError::ZeroPivot(self.perm[k]));
            }
            self.d_inv[k] = 1.0 / d[k];
        }
        self.positive_pivots = d.iter().filter(|&&v| v > 0.0).count();
        Ok(())
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.l_ptr[i]..self.l_ptr[i + 1] {
                    x[self.l_idx[j]] -= self.l_val[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.d_inv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.l_ptr[i]..self.l_ptr[i + 1] {
                xi -= self.l_val[j] * x[self.l_idx[j]];
            }
            x[i] = xi;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = x[k];
        }
    }
}
