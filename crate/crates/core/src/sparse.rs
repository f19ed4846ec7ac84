//! Compressed sparse row storage for node-by-node operators.

use std::sync::Arc;

/// Row pointers and sorted column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    ncols: usize,
}

impl Pattern {
    /// Builds a pattern from per-row column lists (duplicates are removed).
    pub fn from_rows(mut rows: Vec<Vec<usize>>, ncols: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            debug_assert!(row.last().is_none_or(|&c| c < ncols));
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        Self {
            row_ptr,
            col_idx,
            ncols,
        }
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Position of entry `(row, col)` in the value array.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let start = self.row_ptr[row];
        let cols = &self.col_idx[start..self.row_ptr[row + 1]];
        cols.binary_search(&col).ok().map(|k| start + k)
    }

    /// Lower and upper bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for r in 0..self.nrows() {
            for &c in &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]] {
                if c < r {
                    lower = lower.max(r - c);
                } else {
                    upper = upper.max(c - r);
                }
            }
        }
        (lower, upper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern.position(row, col).map_or(0.0, |p| self.values[p])
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.pattern.row_ptr[r], self.pattern.row_ptr[r + 1]);
        self.pattern.col_idx[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.pattern.ncols);
        assert_eq!(y.len(), self.nrows());
        let rp = &self.pattern.row_ptr;
        let ci = &self.pattern.col_idx;
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in rp[r]..rp[r + 1] {
                acc += self.values[p] * x[ci[p]];
            }
            *out = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.mul_vec(x, &mut y);
        y
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let ax = self.apply(x);
        ax.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Dense copy, for tests and small oracles.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.pattern.ncols]; self.nrows()];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        d
    }
}
