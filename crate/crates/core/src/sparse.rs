//! Compressed sparse row matrices with complex entries.

use num_complex::Complex64 as C64;

use crate::operator::{Operator, ZERO};

/// Row-compressed sparse matrix. Column indices are sorted within a row and
/// unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<C64>,
}

impl Csr {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![C64::new(1.0, 0.0); n])
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let mut b = CsrBuilder::new(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            b.push(i, v);
            b.finish_row();
        }
        b.build()
    }

    /// Builds from unordered triplets; duplicates are summed and exact zeros
    /// dropped. Summation order is fixed by a stable sort.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, C64)>) -> Self {
        t.sort_by_key(|e| (e.0, e.1));
        let mut b = CsrBuilder::new(nrows, ncols);
        let mut row = 0;
        let mut it = t.into_iter().peekable();
        while let Some((r, c, v)) = it.next() {
            assert!(r < nrows && c < ncols, "triplet out of bounds");
            while row < r {
                b.finish_row();
                row += 1;
            }
            let mut acc = v;
            while let Some(&(r2, c2, v2)) = it.peek() {
                if r2 == r && c2 == c {
                    acc += v2;
                    it.next();
                } else {
                    break;
                }
            }
            b.push(c, acc);
        }
        while row < nrows {
            b.finish_row();
            row += 1;
        }
        b.build()
    }

    pub fn from_dense(op: &Operator) -> Self {
        let d = op.dim();
        let mut b = CsrBuilder::new(d, d);
        for i in 0..d {
            for j in 0..d {
                b.push(j, op.get(i, j));
            }
            b.finish_row();
        }
        b.build()
    }

    pub fn to_dense(&self) -> Operator {
        assert_eq!(self.nrows, self.ncols, "to_dense needs a square matrix");
        let mut m = faer::Mat::<C64>::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        Operator::wrap(m)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[s..e]
            .iter()
            .zip(&self.values[s..e])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        match self.indices[s..e].binary_search(&(j as u32)) {
            Ok(k) => self.values[s + k],
            Err(_) => ZERO,
        }
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (s, e) = (self.indptr[i], self.indptr[i + 1]);
            let mut acc = ZERO;
            for k in s..e {
                acc += self.values[k] * x[self.indices[k] as usize];
            }
            *yi = acc;
        }
    }

    /// `y += A x`.
    pub fn matvec_add(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (s, e) = (self.indptr[i], self.indptr[i + 1]);
            let mut acc = ZERO;
            for k in s..e {
                acc += self.values[k] * x[self.indices[k] as usize];
            }
            *yi += acc;
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn map_values(&self, f: impl Fn(C64) -> C64) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v = f(*v);
        }
        out
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map_values(|v| c * v)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push((j, i, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, t)
    }

    pub fn adjoint(&self) -> Self {
        self.transpose().map_values(|v| v.conj())
    }

    pub fn add(&self, other: &Csr) -> Self {
        assert_eq!(
            (self.nrows, self.ncols),
            (other.nrows, other.ncols),
            "add shape mismatch"
        );
        let mut b = CsrBuilder::new(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let mut a = self.row(i).peekable();
            let mut o = other.row(i).peekable();
            loop {
                match (a.peek().copied(), o.peek().copied()) {
                    (Some((ca, va)), Some((co, vo))) => {
                        if ca == co {
                            b.push(ca, va + vo);
                            a.next();
                            o.next();
                        } else if ca < co {
                            b.push(ca, va);
                            a.next();
                        } else {
                            b.push(co, vo);
                            o.next();
                        }
                    }
                    (Some((ca, va)), None) => {
                        b.push(ca, va);
                        a.next();
                    }
                    (None, Some((co, vo))) => {
                        b.push(co, vo);
                        o.next();
                    }
                    (None, None) => break,
                }
            }
            b.finish_row();
        }
        b.build()
    }

    pub fn matmul(&self, other: &Csr) -> Self {
        assert_eq!(self.ncols, other.nrows, "matmul shape mismatch");
        let mut b = CsrBuilder::new(self.nrows, other.ncols);
        let mut acc = vec![ZERO; other.ncols];
        let mut used = vec![false; other.ncols];
        let mut cols: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            for (k, va) in self.row(i) {
                for (j, vb) in other.row(k) {
                    if !used[j] {
                        used[j] = true;
                        cols.push(j);
                    }
                    acc[j] += va * vb;
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                b.push(j, acc[j]);
                acc[j] = ZERO;
                used[j] = false;
            }
            cols.clear();
            b.finish_row();
        }
        b.build()
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Csr) -> Self {
        let mut b = CsrBuilder::new(self.nrows * other.nrows, self.ncols * other.ncols);
        for i in 0..self.nrows {
            for k in 0..other.nrows {
                for (j, va) in self.row(i) {
                    for (l, vb) in other.row(k) {
                        b.push(j * other.ncols + l, va * vb);
                    }
                }
                b.finish_row();
            }
        }
        b.build()
    }

    /// Restriction to the listed rows and columns (in the given order).
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            pos[old] = new;
        }
        let mut b = CsrBuilder::new(keep.len(), keep.len());
        for &old in keep {
            let mut row: Vec<(usize, C64)> = self
                .row(old)
                .filter(|(j, _)| pos[*j] != usize::MAX)
                .map(|(j, v)| (pos[j], v))
                .collect();
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                b.push(j, v);
            }
            b.finish_row();
        }
        b.build()
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Incremental row-by-row builder. Columns pushed within a row must be
/// strictly increasing; exact zeros are skipped.
pub(crate) struct CsrBuilder {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<C64>,
    last: Option<usize>,
}

impl CsrBuilder {
    pub(crate) fn new(nrows: usize, ncols: usize) -> Self {
        assert!(
            ncols <= u32::MAX as usize,
            "column count exceeds u32 indexing"
        );
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        Self {
            nrows,
            ncols,
            indptr,
            indices: Vec::new(),
            values: Vec::new(),
            last: None,
        }
    }

    pub(crate) fn reserve(&mut self, nnz: usize) {
        self.indices.reserve(nnz);
        self.values.reserve(nnz);
    }

    pub(crate) fn push(&mut self, col: usize, v: C64) {
        debug_assert!(self.last.map_or(true, |l| col > l), "columns must increase");
        debug_assert!(col < self.ncols);
        self.last = Some(col);
        if v != ZERO {
            self.indices.push(col as u32);
            self.values.push(v);
        }
    }

    pub(crate) fn finish_row(&mut self) {
        self.indptr.push(self.values.len());
        self.last = None;
    }

    pub(crate) fn build(self) -> Csr {
        assert_eq!(self.indptr.len(), self.nrows + 1, "row count mismatch");
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Operator;

    fn sample(d: usize, seed: u64, density: f64) -> Operator {
        let mut s = seed;
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        Operator::from_fn(d, |_, _| {
            if next() < density {
                C64::new(next() - 0.5, next() - 0.5)
            } else {
                ZERO
            }
        })
    }

    #[test]
    fn dense_round_trip_and_products() {
        let (a, b) = (sample(5, 1, 0.4), sample(5, 2, 0.4));
        let (sa, sb) = (Csr::from_dense(&a), Csr::from_dense(&b));
        assert_eq!(sa.to_dense().hs_distance(&a), 0.0);
        assert!(sa.matmul(&sb).to_dense().hs_distance(&a.matmul(&b)) < 1e-14);
        assert!(sa.add(&sb).to_dense().hs_distance(&(&a + &b)) < 1e-14);
        assert!(sa.adjoint().to_dense().hs_distance(&a.dagger()) < 1e-15);
        let (c, sc) = (sample(3, 3, 0.6), Csr::from_dense(&sample(3, 3, 0.6)));
        assert!(sa.kron(&sc).to_dense().hs_distance(&a.kron(&c)) < 1e-14);
    }

    #[test]
    fn triplets_sum_duplicates() {
        let one = C64::new(1.0, 0.0);
        let m = Csr::from_triplets(2, 2, vec![(1, 0, one), (0, 1, one), (1, 0, one)]);
        assert_eq!(m.get(1, 0), C64::new(2.0, 0.0));
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = sample(6, 4, 0.5);
        let x: Vec<C64> = (0..6).map(|k| C64::new(k as f64, 1.0 - k as f64)).collect();
        let y = Csr::from_dense(&a).apply(&x);
        let want = a.apply(&x);
        for (p, q) in y.iter().zip(&want) {
            assert!((p - q).norm() < 1e-14);
        }
    }

    #[test]
    fn restrict_selects_submatrix() {
        let a = sample(4, 5, 1.0);
        let r = Csr::from_dense(&a).restrict(&[0, 2, 3]);
        assert_eq!(r.get(1, 2), a.get(2, 3));
        assert_eq!(r.get(2, 0), a.get(3, 0));
    }
}
