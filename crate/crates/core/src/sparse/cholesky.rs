//! Up-looking sparse Cholesky with a cached symbolic analysis. The matrix is
//! permuted as C = P A Pᵀ (C[i][j] = A[perm[i]][perm[j]]) and factored as
//! C = L Lᵀ.

use std::sync::Arc;

use crate::error::{Error, Result};

use super::{minimum_degree, SparseSymMatrix};

const NONE: usize = usize::MAX;

/// Ordering, elimination tree and the pattern of L for one sparsity pattern.
#[derive(Debug, Clone)]
pub struct Symbolic {
    n: usize,
    perm: Vec<usize>,
    pinv: Vec<usize>,
    parent: Vec<usize>,
    // Pattern of the permuted upper triangle C.
    c_ptr: Vec<usize>,
    c_idx: Vec<usize>,
    // Slot of each stored entry of A inside C.
    a_to_c: Vec<usize>,
    a_ptr: Vec<usize>,
    a_idx: Vec<usize>,
    l_ptr: Vec<usize>,
}

impl Symbolic {
    pub fn analyze(a: &SparseSymMatrix) -> Self {
        let perm = minimum_degree(&a.adjacency());
        Self::with_permutation(a, perm)
    }

    /// Analysis with a caller-supplied ordering (`perm[new] = old`).
    pub fn with_permutation(a: &SparseSymMatrix, perm: Vec<usize>) -> Self {
        let n = a.dim();
        assert_eq!(perm.len(), n, "permutation length");
        let mut pinv = vec![NONE; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }
        let mut entries: Vec<(usize, usize, usize)> = a
            .iter_upper()
            .enumerate()
            .map(|(slot, (r, c, _))| {
                let (pr, pc) = (pinv[r], pinv[c]);
                (pr.max(pc), pr.min(pc), slot)
            })
            .collect();
        entries.sort_unstable();
        let mut c_ptr = vec![0usize; n + 1];
        let mut c_idx = Vec::with_capacity(entries.len());
        let mut a_to_c = vec![0usize; entries.len()];
        for (k, &(col, row, slot)) in entries.iter().enumerate() {
            c_ptr[col + 1] += 1;
            c_idx.push(row);
            a_to_c[slot] = k;
        }
        for c in 0..n {
            c_ptr[c + 1] += c_ptr[c];
        }
        let parent = etree(n, &c_ptr, &c_idx);

        // Column counts of L via the row patterns.
        let mut counts = vec![1usize; n];
        let mut s = vec![0usize; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            let top = ereach(&c_ptr, &c_idx, k, &parent, &mut s, &mut mark);
            for &i in &s[top..] {
                counts[i] += 1;
            }
        }
        let mut l_ptr = vec![0usize; n + 1];
        for k in 0..n {
            l_ptr[k + 1] = l_ptr[k] + counts[k];
        }
        Self {
            n,
            perm,
            pinv,
            parent,
            c_ptr,
            c_idx,
            a_to_c,
            a_ptr: a.col_ptr().to_vec(),
            a_idx: a.row_idx().to_vec(),
            l_ptr,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.l_ptr[self.n]
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    fn matches(&self, a: &SparseSymMatrix) -> bool {
        a.dim() == self.n && a.col_ptr() == self.a_ptr.as_slice() && a.row_idx() == self.a_idx.as_slice()
    }
}

/// Elimination tree of the permuted matrix from its upper triangle.
fn etree(n: usize, c_ptr: &[usize], c_idx: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &row in &c_idx[c_ptr[k]..c_ptr[k + 1]] {
            let mut i = row;
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row k of L (without the diagonal) in topological
/// order, written to `s[top..]`.
fn ereach(c_ptr: &[usize], c_idx: &[usize], k: usize, parent: &[usize], s: &mut [usize], mark: &mut [usize]) -> usize {
    let n = s.len();
    let mut top = n;
    mark[k] = k;
    for &row in &c_idx[c_ptr[k]..c_ptr[k + 1]] {
        let mut i = row;
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            s[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            s[top] = s[len];
        }
    }
    top
}

/// Numeric factor sharing a symbolic analysis.
#[derive(Debug, Clone)]
pub struct Cholesky {
    sym: Arc<Symbolic>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Analysis plus factorization in one go.
    pub fn new(a: &SparseSymMatrix) -> Result<Self> {
        Self::factor(Arc::new(Symbolic::analyze(a)), a)
    }

    /// Factors `a`, retrying once with a small diagonal shift
    /// (1e-10 times the mean diagonal) if the first attempt fails.
    pub fn factor(sym: Arc<Symbolic>, a: &SparseSymMatrix) -> Result<Self> {
        if !sym.matches(a) {
            return Err(Error::InvalidArgument("matrix pattern differs from the symbolic analysis".into()));
        }
        match Self::numeric(&sym, a, 0.0) {
            Ok(f) => Ok(f),
            Err(Error::NotPositiveDefinite { .. }) => {
                let d = a.diagonal();
                let shift = 1e-10 * d.iter().sum::<f64>() / d.len().max(1) as f64;
                if !(shift > 0.0) {
                    return Self::numeric(&sym, a, 0.0);
                }
                Self::numeric(&sym, a, shift)
            }
            Err(e) => Err(e),
        }
    }

    /// Factorization without the jitter retry.
    pub fn factor_exact(sym: Arc<Symbolic>, a: &SparseSymMatrix) -> Result<Self> {
        if !sym.matches(a) {
            return Err(Error::InvalidArgument("matrix pattern differs from the symbolic analysis".into()));
        }
        Self::numeric(&sym, a, 0.0)
    }

    fn numeric(sym: &Arc<Symbolic>, a: &SparseSymMatrix, shift: f64) -> Result<Self> {
        let n = sym.n;
        let mut cx = vec![0.0; sym.c_idx.len()];
        for (slot, &v) in a.values().iter().enumerate() {
            cx[sym.a_to_c[slot]] = v;
        }
        let mut l_idx = vec![0usize; sym.nnz_l()];
        let mut l_val = vec![0.0; sym.nnz_l()];
        let mut next: Vec<usize> = sym.l_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        let mut s = vec![0usize; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            let top = ereach(&sym.c_ptr, &sym.c_idx, k, &sym.parent, &mut s, &mut mark);
            for p in sym.c_ptr[k]..sym.c_ptr[k + 1] {
                x[sym.c_idx[p]] = cx[p];
            }
            let mut d = x[k] + shift;
            x[k] = 0.0;
            for &i in &s[top..] {
                let lki = x[i] / l_val[sym.l_ptr[i]];
                x[i] = 0.0;
                for p in (sym.l_ptr[i] + 1)..next[i] {
                    x[l_idx[p]] -= l_val[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                l_idx[p] = k;
                l_val[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: sym.perm[k], value: d });
            }
            let p = next[k];
            next[k] += 1;
            l_idx[p] = k;
            l_val[p] = d.sqrt();
        }
        Ok(Self { sym: Arc::clone(sym), l_idx, l_val, jitter: shift })
    }

    pub fn symbolic(&self) -> &Arc<Symbolic> {
        &self.sym
    }

    pub fn dim(&self) -> usize {
        self.sym.n
    }

    /// Diagonal shift that was needed for the factorization (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.sym.n).map(|j| self.l_val[self.sym.l_ptr[j]].ln()).sum::<f64>()
    }

    fn lower_solve_in_place(&self, y: &mut [f64]) {
        let lp = &self.sym.l_ptr;
        for j in 0..self.sym.n {
            y[j] /= self.l_val[lp[j]];
            let yj = y[j];
            if yj != 0.0 {
                for p in (lp[j] + 1)..lp[j + 1] {
                    y[self.l_idx[p]] -= self.l_val[p] * yj;
                }
            }
        }
    }

    fn upper_solve_in_place(&self, y: &mut [f64]) {
        let lp = &self.sym.l_ptr;
        for j in (0..self.sym.n).rev() {
            let mut acc = y[j];
            for p in (lp[j] + 1)..lp[j + 1] {
                acc -= self.l_val[p] * y[self.l_idx[p]];
            }
            y[j] = acc / self.l_val[lp[j]];
        }
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.sym.n;
        let mut y: Vec<f64> = (0..n).map(|i| b[self.sym.perm[i]]).collect();
        self.lower_solve_in_place(&mut y);
        self.upper_solve_in_place(&mut y);
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.sym.perm[i]] = y[i];
        }
        x
    }

    /// Draw from N(0, A⁻¹) given a vector of independent standard normals.
    pub fn sample_with(&self, z: &[f64]) -> Vec<f64> {
        let n = self.sym.n;
        let mut w = z.to_vec();
        self.upper_solve_in_place(&mut w);
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.sym.perm[i]] = w[i];
        }
        x
    }

    pub fn workspace(&self) -> SolveWork {
        SolveWork { x: vec![0.0; self.sym.n], mark: vec![false; self.sym.n], reach: Vec::new() }
    }

    /// Sparse forward solve: returns L⁻¹ P b as (permuted index, value)
    /// pairs sorted by index. Only the elimination-tree ancestors of the
    /// nonzeros of b are touched.
    pub fn half_solve_sparse(&self, b: &[(usize, f64)], work: &mut SolveWork) -> Vec<(usize, f64)> {
        let SolveWork { x, mark, reach } = work;
        reach.clear();
        for &(old, v) in b {
            let mut i = self.sym.pinv[old];
            x[i] += v;
            while i != NONE && !mark[i] {
                mark[i] = true;
                reach.push(i);
                i = self.sym.parent[i];
            }
        }
        reach.sort_unstable();
        let lp = &self.sym.l_ptr;
        for &j in reach.iter() {
            x[j] /= self.l_val[lp[j]];
            let xj = x[j];
            if xj != 0.0 {
                for p in (lp[j] + 1)..lp[j + 1] {
                    x[self.l_idx[p]] -= self.l_val[p] * xj;
                }
            }
        }
        let out = reach.iter().map(|&j| (j, x[j])).collect();
        for &j in reach.iter() {
            x[j] = 0.0;
            mark[j] = false;
        }
        out
    }

    /// bᵀ A⁻¹ b for a sparse vector b.
    pub fn quad_form_sparse(&self, b: &[(usize, f64)], work: &mut SolveWork) -> f64 {
        self.half_solve_sparse(b, work).iter().map(|(_, v)| v * v).sum()
    }

    /// Entries of A⁻¹ on the pattern of L + Lᵀ (Takahashi recursions).
    pub fn selected_inverse(&self) -> SelectedInverse {
        let n = self.sym.n;
        let lp = &self.sym.l_ptr;
        let mut z = vec![0.0; self.l_val.len()];
        let mut pos = vec![NONE; n];
        let mut acc = Vec::new();
        for j in (0..n).rev() {
            let d = self.l_val[lp[j]];
            let below = (lp[j] + 1)..lp[j + 1];
            let rows = &self.l_idx[below.clone()];
            let l = &self.l_val[below.clone()];
            for (a, &r) in rows.iter().enumerate() {
                pos[r] = a;
            }
            acc.clear();
            acc.resize(rows.len(), 0.0);
            // acc[a] = Σ_b L[rows[b]][j] · Z[rows[b]][rows[a]], walking the
            // columns of Z below j; every pair lies in the filled pattern.
            for (a, &k) in rows.iter().enumerate() {
                acc[a] += l[a] * z[lp[k]];
                for p in (lp[k] + 1)..lp[k + 1] {
                    let b = pos[self.l_idx[p]];
                    if b != NONE {
                        acc[a] += l[b] * z[p];
                        acc[b] += l[a] * z[p];
                    }
                }
            }
            let mut diag = 0.0;
            for (a, p) in below.clone().enumerate() {
                z[p] = -acc[a] / d;
                diag += l[a] * z[p];
            }
            z[lp[j]] = 1.0 / (d * d) - diag / d;
            for &r in rows {
                pos[r] = NONE;
            }
        }
        SelectedInverse { sym: Arc::clone(&self.sym), l_idx: self.l_idx.clone(), values: z }
    }
}

/// A⁻¹ restricted to the filled pattern of a Cholesky factor.
#[derive(Debug, Clone)]
pub struct SelectedInverse {
    sym: Arc<Symbolic>,
    l_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SelectedInverse {
    /// (A⁻¹)[a][b] in original indices, or `None` outside the pattern.
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        let (pa, pb) = (self.sym.pinv[a], self.sym.pinv[b]);
        let (lo, hi) = (pa.min(pb), pa.max(pb));
        let start = self.sym.l_ptr[lo];
        let cols = &self.l_idx[start..self.sym.l_ptr[lo + 1]];
        cols.binary_search(&hi).ok().map(|k| self.values[start + k])
    }

    /// bᵀ A⁻¹ b when every pair of nonzeros of b is in the pattern.
    pub fn quad_form(&self, b: &[(usize, f64)]) -> Option<f64> {
        let mut acc = 0.0;
        for (i, &(a, wa)) in b.iter().enumerate() {
            acc += wa * wa * self.get(a, a)?;
            for &(c, wc) in &b[i + 1..] {
                acc += 2.0 * wa * wc * self.get(a, c)?;
            }
        }
        Some(acc)
    }
}

/// Reusable dense workspace for sparse solves.
#[derive(Debug, Clone)]
pub struct SolveWork {
    x: Vec<f64>,
    mark: Vec<bool>,
    reach: Vec<usize>,
}

/// Dot product of two index-sorted sparse vectors.
pub fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}
