//! Compressed-row symmetric sparse matrices and a simplicial LDL^T direct solver.
//!
//! The operators built here (cotangent Laplacians, their image-side variants,
//! the difference operator and the Hessian) all share explicit sparsity
//! patterns, so the pattern is an [`Arc`] with an identity tag: operators that
//! reference the same pattern object can be combined entrywise without any
//! structural checks at runtime.

use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Arc;

use crate::error::{Error, Result};

static PATTERN_IDS: AtomicU64 = AtomicU64::new(0);

/// Immutable sparsity pattern in compressed-row form. Column indices are
/// strictly increasing within every row.
#[derive(Debug)]
pub struct SparsityPattern {
    n_rows: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    id: u64,
}

impl SparsityPattern {
    pub fn new(n_rows: usize, rows: Vec<Vec<usize>>) -> Arc<Self> {
        assert_eq!(rows.len(), n_rows);
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for mut cols in rows {
            cols.sort_unstable();
            cols.dedup();
            debug_assert!(cols.iter().all(|&c| c < n_rows));
            col_indices.extend_from_slice(&cols);
            row_offsets.push(col_indices.len());
        }
        Arc::new(SparsityPattern {
            n_rows,
            row_offsets,
            col_indices,
            id: PATTERN_IDS.fetch_add(1, AtomicOrdering::Relaxed),
        })
    }

    /// Pattern with entry (i, j) iff i = j or the pair appears in `edges`.
    pub fn from_edges(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Arc<Self> {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (i, j) in edges {
            rows[i].push(j);
            rows[j].push(i);
        }
        Self::new(n, rows)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_offsets[i]..self.row_offsets[i + 1]
    }

    /// Value-array position of entry (i, j), if it is structural.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let range = self.row_range(i);
        let cols = &self.col_indices[range.clone()];
        cols.binary_search(&j).ok().map(|k| range.start + k)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.find(i, j).is_some()
    }

    /// Structural symmetry: (i, j) present iff (j, i) present.
    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.n_rows).all(|i| self.row(i).iter().all(|&j| self.contains(j, i)))
    }
}

/// Sparse matrix over an explicitly shared [`SparsityPattern`]. Despite the
/// name the stored values need not be symmetric (the mean value Laplacian is
/// not); the pattern, however, always is for the operators in this crate.
#[derive(Debug, Clone)]
pub struct SymSparseOperator {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SymSparseOperator {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let nnz = pattern.nnz();
        SymSparseOperator {
            pattern,
            values: vec![0.0; nnz],
        }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.pattern.id == other.pattern.id
    }

    /// Adds `v` to entry (i, j). Panics if the entry is not structural; the
    /// assembly routines only ever write inside the precomputed pattern.
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        match self.pattern.find(i, j) {
            Some(pos) => self.values[pos] += v,
            None => panic!("entry ({i}, {j}) outside sparsity pattern"),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.pattern.row_range(i);
        self.pattern.col_indices[range.clone()]
            .iter()
            .zip(&self.values[range])
            .map(|(&j, &v)| (j, v))
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_rows());
        assert_eq!(y.len(), self.n_rows());
        for i in 0..self.n_rows() {
            let mut acc = 0.0;
            for (j, v) in self.row_entries(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
    }

    pub fn mul_vec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows()];
        self.mul_vec(x, &mut y);
        y
    }

    /// x^T A x.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n_rows() {
            let mut row = 0.0;
            for (j, v) in self.row_entries(i) {
                row += v * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows())
            .map(|i| self.row_entries(i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Entrywise difference; both operands must share the pattern object.
    pub fn sub(&self, other: &Self) -> Self {
        assert!(self.same_pattern(other), "pattern mismatch in sub");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        SymSparseOperator {
            pattern: self.pattern.clone(),
            values,
        }
    }

    /// In-place A <- (A + A^T) / 2. Requires a structurally symmetric pattern.
    pub fn symmetrize(&mut self) {
        for i in 0..self.n_rows() {
            let range = self.pattern.row_range(i);
            for pos in range {
                let j = self.pattern.col_indices[pos];
                if j <= i {
                    continue;
                }
                let mirror = self
                    .pattern
                    .find(j, i)
                    .expect("symmetrize requires a structurally symmetric pattern");
                let avg = 0.5 * (self.values[pos] + self.values[mirror]);
                self.values[pos] = avg;
                self.values[mirror] = avg;
            }
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n_rows() {
            for (j, v) in self.row_entries(i) {
                worst = worst.max((v - self.entry(j, i)).abs());
            }
        }
        worst
    }

    /// Copy with row and column `k` removed.
    pub fn delete_row_col(&self, k: usize) -> SymSparseOperator {
        let n = self.n_rows();
        assert!(k < n);
        let mut rows = Vec::with_capacity(n - 1);
        let mut vals = Vec::with_capacity(self.values.len());
        for i in (0..n).filter(|&i| i != k) {
            let mut cols = Vec::with_capacity(self.pattern.row(i).len());
            for (j, v) in self.row_entries(i) {
                if j == k {
                    continue;
                }
                cols.push(if j > k { j - 1 } else { j });
                vals.push(v);
            }
            rows.push(cols);
        }
        let pattern = SparsityPattern::new(n - 1, rows);
        SymSparseOperator {
            pattern,
            values: vals,
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n_rows();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row_entries(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Reverse Cuthill-McKee fill-reducing ordering. Returns `perm` with
/// `perm[new] = old`.
pub fn rcm_ordering(pattern: &SparsityPattern) -> Vec<usize> {
    let n = pattern.n_rows();
    let degree = |i: usize| pattern.row(i).len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();

    while order.len() < n {
        // Min-degree start, pushed one BFS sweep toward the periphery.
        let mut start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| degree(i))
            .unwrap();
        let mut level = vec![usize::MAX; n];
        level[start] = 0;
        queue.clear();
        queue.push_back(start);
        let mut last_level: Vec<usize> = vec![start];
        let mut max_level = 0;
        while let Some(u) = queue.pop_front() {
            for &w in pattern.row(u) {
                if w != u && level[w] == usize::MAX && !visited[w] {
                    level[w] = level[u] + 1;
                    if level[w] > max_level {
                        max_level = level[w];
                        last_level.clear();
                    }
                    if level[w] == max_level {
                        last_level.push(w);
                    }
                    queue.push_back(w);
                }
            }
        }
        if let Some(&far) = last_level.iter().min_by_key(|&&i| degree(i)) {
            start = far;
        }

        visited[start] = true;
        order.push(start);
        queue.clear();
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            let mut nbrs: Vec<usize> = pattern
                .row(u)
                .iter()
                .copied()
                .filter(|&w| w != u && !visited[w])
                .collect();
            nbrs.sort_unstable_by_key(|&w| degree(w));
            for w in nbrs {
                if !visited[w] {
                    visited[w] = true;
                    order.push(w);
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Simplicial LDL^T factorization of a symmetric sparse matrix, up-looking,
/// with an RCM permutation for fill reduction. No pivoting is performed:
/// indefinite matrices factor fine as long as no pivot collapses, and a
/// collapsed pivot is reported as [`Error::SingularSystem`] so callers can
/// fall back to a gradient-only step.
pub struct LdltFactor {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    dinv: Vec<f64>,
}

impl LdltFactor {
    pub fn new(a: &SymSparseOperator) -> Result<Self> {
        let n = a.n_rows();
        let pattern = a.pattern();
        let perm = rcm_ordering(pattern);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // Upper triangle of P A P^T in compressed-column form.
        let mut col_counts = vec![0usize; n];
        for i in 0..n {
            for (j, _) in a.row_entries(i) {
                let (pi, pj) = (iperm[i], iperm[j]);
                if pi <= pj {
                    col_counts[pj] += 1;
                }
            }
        }
        let mut bp = vec![0usize; n + 1];
        for k in 0..n {
            bp[k + 1] = bp[k] + col_counts[k];
        }
        let mut bi = vec![0usize; bp[n]];
        let mut bx = vec![0f64; bp[n]];
        let mut fill = bp.clone();
        for i in 0..n {
            for (j, v) in a.row_entries(i) {
                let (pi, pj) = (iperm[i], iperm[j]);
                if pi <= pj {
                    bi[fill[pj]] = pi;
                    bx[fill[pj]] = v;
                    fill[pj] += 1;
                }
            }
        }

        let breakdown = 1e-13 * a.max_abs().max(f64::MIN_POSITIVE);

        // Symbolic pass: elimination tree and per-column fill counts.
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in bp[k]..bp[k + 1] {
                let mut i = bi[p];
                while i < k && flag[i] != k {
                    lnz[i] += 1;
                    flag[i] = k;
                    if parent[i] == usize::MAX {
                        parent[i] = k;
                    }
                    i = parent[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }

        // Numeric pass.
        let mut li = vec![0usize; lp[n]];
        let mut lx = vec![0f64; lp[n]];
        let mut d = vec![0f64; n];
        let mut y = vec![0f64; n];
        let mut row_pattern = vec![0usize; n];
        let mut stack = vec![0usize; n];
        let mut lfill = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        for k in 0..n {
            flag[k] = k;
            let mut top = n;
            for p in bp[k]..bp[k + 1] {
                let i = bi[p];
                y[i] += bx[p];
                let mut len = 0;
                let mut ii = i;
                while ii < k && flag[ii] != k {
                    stack[len] = ii;
                    len += 1;
                    flag[ii] = k;
                    ii = parent[ii];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    row_pattern[top] = stack[len];
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for &j in &row_pattern[top..n] {
                let yj = y[j];
                y[j] = 0.0;
                let p2 = lp[j] + lfill[j];
                for p in lp[j]..p2 {
                    y[li[p]] -= lx[p] * yj;
                }
                let ljk = yj / d[j];
                d[k] -= ljk * yj;
                li[p2] = k;
                lx[p2] = ljk;
                lfill[j] += 1;
            }
            if d[k].abs() <= breakdown || !d[k].is_finite() {
                return Err(Error::SingularSystem {
                    index: perm[k],
                    pivot: d[k],
                });
            }
        }

        let dinv = d.iter().map(|&v| 1.0 / v).collect();
        Ok(LdltFactor {
            n,
            perm,
            lp,
            li,
            lx,
            dinv,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut z: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..self.n {
            let zj = z[j];
            for p in self.lp[j]..self.lp[j + 1] {
                z[self.li[p]] -= self.lx[p] * zj;
            }
        }
        for j in 0..self.n {
            z[j] *= self.dinv[j];
        }
        for j in (0..self.n).rev() {
            let mut zj = z[j];
            for p in self.lp[j]..self.lp[j + 1] {
                zj -= self.lx[p] * z[self.li[p]];
            }
            z[j] = zj;
        }
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = z[new];
        }
        x
    }

    /// Solve with a couple of rounds of iterative refinement against `a`.
    pub fn solve_refined(&self, a: &SymSparseOperator, b: &[f64]) -> Vec<f64> {
        let mut x = self.solve(b);
        for _ in 0..2 {
            let ax = a.mul_vec_alloc(&x);
            let res: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
            let corr = self.solve(&res);
            for (xi, ci) in x.iter_mut().zip(&corr) {
                *xi += ci;
            }
        }
        x
    }
}
