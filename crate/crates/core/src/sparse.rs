//! Compressed-row sparse matrices and the two symmetric positive-definite solvers
//! used by the time stepper: an envelope (skyline) Cholesky factorization and a
//! Jacobi-preconditioned conjugate gradient.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Error, Result};

/// Sparse matrix in compressed-row storage with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Assembles from `(row, col, value)` contributions.
    ///
    /// Duplicates are summed in the order given, then exact zeros are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        // Stable bucket sort by row keeps the caller's order within a row.
        let mut next = counts.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            bucket[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..nrows {
            let row = &mut bucket[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == c {
                    sum += row[k].1;
                    k += 1;
                }
                if sum != 0.0 {
                    col_idx.push(c);
                    values.push(sum);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Diagonal matrix.
    pub fn diagonal(d: &[f64]) -> Self {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), d.len(), &t)
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            t.extend(cols.iter().zip(vals).map(|(&c, &v)| (i, c, v)));
        }
        t
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y = A x`, writing into `y`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut s = 0.0;
            for p in a..b {
                s += self.values[p] * x[self.col_idx[p]];
            }
            *yi = s;
        }
    }

    /// `y += alpha A x`.
    pub fn mul_vec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut s = 0.0;
            for p in a..b {
                s += self.values[p] * x[self.col_idx[p]];
            }
            *yi += alpha * s;
        }
    }

    /// `y = A^T x`.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    /// `self * s` entrywise.
    pub fn scaled(&self, s: f64) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (i, j, v * s)).collect();
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    /// `sum_k alpha_k A_k` on the union of the patterns.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> Result<Self> {
        let (nrows, ncols) = match terms.first() {
            Some((_, m)) => (m.nrows, m.ncols),
            None => return Err(invalid("empty linear combination")),
        };
        let mut t = Vec::new();
        for (alpha, m) in terms {
            check_len(nrows, m.nrows)?;
            check_len(ncols, m.ncols)?;
            t.extend(m.triplets().into_iter().map(|(i, j, v)| (i, j, alpha * v)));
        }
        Ok(Self::from_triplets(nrows, ncols, &t))
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<Self> {
        check_len(self.ncols, other.nrows)?;
        let mut t = Vec::new();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                t.extend(ocols.iter().zip(ovals).map(|(&j, &b)| (i, j, a * b)));
            }
        }
        Ok(Self::from_triplets(self.nrows, other.ncols, &t))
    }

    /// `D A` with `D = diag(d)`.
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.nrows);
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (i, j, d[i] * v)).collect();
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols
            && (0..self.nrows).all(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).all(|(&j, &v)| self.get(j, i) == v)
            })
    }

    /// Same row pointer and column index arrays.
    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    /// Builds a matrix on this pattern with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        check_len(self.values.len(), values.len())?;
        Ok(CsrMatrix { values, ..self.clone() })
    }

    /// Rewrites `other`'s entries onto this (superset) pattern.
    pub fn values_on_pattern(&self, other: &CsrMatrix) -> Result<Vec<f64>> {
        check_len(self.nrows, other.nrows)?;
        check_len(self.ncols, other.ncols)?;
        let mut out = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (cols, _) = self.row(i);
            let (ocols, ovals) = other.row(i);
            for (&c, &v) in ocols.iter().zip(ovals) {
                let p = cols
                    .binary_search(&c)
                    .map_err(|_| invalid("pattern is not a superset"))?;
                out[self.row_ptr[i] + p] = v;
            }
        }
        Ok(out)
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }
}

/// Dot product with four interleaved partial sums (fixed order, so deterministic).
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Linear solver choice for the symmetric positive-definite step systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverPolicy {
    /// Envelope Cholesky factorization.
    Direct,
    /// Jacobi-preconditioned conjugate gradient.
    ConjugateGradient { rel_tol: f64, max_iter: usize },
    /// Direct up to refinement level 1, conjugate gradient beyond.
    Auto,
}

impl SolverPolicy {
    pub const DEFAULT_CG: SolverPolicy = SolverPolicy::ConjugateGradient {
        rel_tol: 1e-10,
        max_iter: 10_000,
    };

    /// Resolves [`SolverPolicy::Auto`] for a mesh at refinement level `rf`.
    pub fn resolve(self, rf: u32) -> SolverPolicy {
        match self {
            SolverPolicy::Auto if rf <= 1 => SolverPolicy::Direct,
            SolverPolicy::Auto => Self::DEFAULT_CG,
            other => other,
        }
    }
}

/// Cholesky factor `A = L L^T` stored by rows over the lower envelope of `A`.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        check_len(a.nrows, a.ncols)?;
        let n = a.nrows;
        let mut first = vec![0; n];
        let mut start = vec![0; n + 1];
        for i in 0..n {
            let (cols, _) = a.row(i);
            first[i] = cols.first().copied().unwrap_or(i).min(i);
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut f = SkylineCholesky {
            n,
            first,
            start,
            data: Vec::new(),
        };
        f.data = vec![0.0; f.start[n]];
        f.refactor(a)?;
        Ok(f)
    }

    /// Refactorizes a matrix whose lower envelope fits the stored one.
    pub fn refactor(&mut self, a: &CsrMatrix) -> Result<()> {
        check_len(self.n, a.nrows)?;
        self.data.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j > i {
                    break;
                }
                if j < self.first[i] {
                    return Err(invalid("matrix envelope changed since the first factorization"));
                }
                self.data[self.start[i] + j - self.first[i]] = v;
            }
        }
        for i in 0..self.n {
            let fi = self.first[i];
            let (head, tail) = self.data.split_at_mut(self.start[i]);
            let row_i = &mut tail[..i - fi + 1];
            for j in fi..i {
                let fj = self.first[j];
                let row_j = &head[self.start[j]..self.start[j] + j - fj + 1];
                let k0 = if fi > fj { fi } else { fj };
                let s = row_i[j - fi] - dot4(&row_i[k0 - fi..j - fi], &row_j[k0 - fj..j - fj]);
                row_i[j - fi] = s / row_j[j - fj];
            }
            let (off, diag) = row_i.split_at_mut(i - fi);
            let d = diag[0] - dot4(off, off);
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { row: i });
            }
            diag[0] = libm::sqrt(d);
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        check_len(self.n, x.len())?;
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let mut s = x[i];
            for k in fi..i {
                s -= row[k - fi] * x[k];
            }
            x[i] = s / row[i - fi];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for k in fi..i {
                x[k] -= row[k - fi] * xi;
            }
        }
        Ok(())
    }
}

/// Jacobi-preconditioned conjugate gradient; `x` holds the initial guess on entry.
///
/// Stops when `|b - A x| <= rel_tol |b|`. Returns the iteration count.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<usize> {
    let n = a.nrows;
    check_len(n, b.len())?;
    check_len(n, x.len())?;
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let inv_diag: Vec<f64> = a
        .diag()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = a.mul_vec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rnorm = norm2(&r);
    if rnorm <= rel_tol * bnorm {
        return Ok(0);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite { row: 0 });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = norm2(&r);
        if rnorm <= rel_tol * bnorm {
            return Ok(it);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged {
        iterations: max_iter,
        residual: rnorm / bnorm,
    })
}
