//! Sparse symmetric matrices, row-compressed observation operators and a
//! fill-reducing sparse Cholesky factorization.

mod cholesky;
mod ordering;

use std::io::Write;

use crate::error::{Error, Result};

pub use cholesky::{sparse_dot, Cholesky, SelectedInverse, SolveWork, Symbolic};
pub use ordering::minimum_degree;

/// Symmetric matrix stored as the upper triangle (row ≤ column) in
/// compressed columns with sorted row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Sums duplicate entries; (i, j) and (j, i) address the same slot.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("entry ({i}, {j}) outside {n}x{n} matrix")));
            }
            let (r, c) = if i <= j { (i, j) } else { (j, i) };
            entries.push((c, r, v));
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (c, r, v) in entries {
            if last == Some((c, r)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((c, r));
            }
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        Ok(Self { n, col_ptr, row_idx, values })
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self { n, col_ptr: (0..=n).collect(), row_idx: (0..n).collect(), values: d.to_vec() }
    }

    /// Same pattern, new values (in storage order).
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self { n: self.n, col_ptr: self.col_ptr.clone(), row_idx: self.row_idx.clone(), values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored (upper-triangle) entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Storage slot of (i, j), if structurally present.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let range = self.col_ptr[c]..self.col_ptr[c + 1];
        self.row_idx[range.clone()].binary_search(&r).ok().map(|k| range.start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.values[s])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Iterates stored upper-triangle entries as (row, col, value).
    pub fn iter_upper(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |p| (self.row_idx[p], c, self.values[p]))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (r, c, v) in self.iter_upper() {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }

    /// Symmetric neighbour lists of the off-diagonal pattern.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (r, c, _) in self.iter_upper() {
            if r != c {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.with_values(self.values.iter().map(|v| v * s).collect())
    }

    /// Sum of two matrices with the union pattern.
    pub fn add(&self, other: &SparseSymMatrix) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::InvalidArgument("dimension mismatch in matrix sum".into()));
        }
        let t: Vec<_> = self.iter_upper().chain(other.iter_upper()).collect();
        Self::from_triplets(self.n, &t)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.iter_upper() {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        m
    }

    /// Coordinate text export: one `i j value` line per upper-triangle entry.
    pub fn write_coordinates<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut s = String::new();
        for (r, c, v) in self.iter_upper() {
            s.push_str(&format!("{r} {c} {v:.17e}\n"));
        }
        out.write_all(s.as_bytes())
    }
}

/// Row-compressed rectangular matrix (observation operators).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRowMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRowMatrix {
    pub fn from_rows(n_cols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            let mut r = row.clone();
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                if c >= n_cols {
                    return Err(Error::InvalidArgument(format!("column {c} outside {n_cols} columns")));
                }
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { n_rows: rows.len(), n_cols, row_ptr, col_idx, values })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |p| (self.col_idx[p], self.values[p]))
    }

    pub fn row_entries(&self, r: usize) -> Vec<(usize, f64)> {
        self.row(r).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn transpose_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out[c] += v * y[r];
            }
        }
        out
    }

    /// Aᵀ diag(w) A as a symmetric matrix.
    pub fn weighted_gram(&self, w: &[f64]) -> SparseSymMatrix {
        let mut t = Vec::new();
        for r in 0..self.n_rows {
            let row: Vec<_> = self.row(r).collect();
            for &(a, va) in &row {
                for &(b, vb) in &row {
                    if a <= b {
                        t.push((a, b, w[r] * va * vb));
                    }
                }
            }
        }
        SparseSymMatrix::from_triplets(self.n_cols, &t).expect("indices checked at construction")
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}
