//! Dense and CSR matrix types plus the kernels shared by propagation and
//! masking.
//!
//! Every kernel writes each output row from exactly one worker and
//! accumulates in ascending column order, so results are bit-identical
//! regardless of how many threads rayon uses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
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

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &DenseMatrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// `self * a + other * b`, entrywise.
    pub fn lin_comb(&self, a: f64, other: &DenseMatrix, b: f64) -> Result<DenseMatrix> {
        if !self.same_shape(other) {
            return Err(Error::dims(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Numerically stable softmax of every row.
    pub fn softmax_rows(&self) -> DenseMatrix {
        let mut out = self.clone();
        if self.cols == 0 {
            return out;
        }
        out.data.par_chunks_mut(self.cols).for_each(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        });
        out
    }

    /// Index of the largest entry of every row; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        self.row_iter()
            .map(|row| {
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Square CSR matrix over a fixed sparsity pattern.
///
/// Column indices are strictly increasing within each row. When
/// `symmetric` is set the pattern is guaranteed symmetric, not the values.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseAdjacency {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseAdjacency {
    pub fn from_csr(
        n: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
        symmetric: bool,
    ) -> Result<Self> {
        if indptr.len() != n + 1 || indptr[0] != 0 || indptr[n] != indices.len() {
            return Err(Error::Invalid("malformed CSR row offsets".into()));
        }
        if values.len() != indices.len() {
            return Err(Error::Invalid("CSR value/index length mismatch".into()));
        }
        for i in 0..n {
            if indptr[i] > indptr[i + 1] {
                return Err(Error::Invalid("CSR row offsets decrease".into()));
            }
            let cols = &indices[indptr[i]..indptr[i + 1]];
            if cols.iter().any(|&j| j >= n) || cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Invalid(format!(
                    "row {i}: column indices out of range or not strictly increasing"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite sparse weight".into()));
        }
        let a = Self {
            n,
            indptr,
            indices,
            values,
            symmetric: false,
        };
        if symmetric && !a.pattern_is_symmetric() {
            return Err(Error::Invalid("pattern flagged symmetric but is not".into()));
        }
        Ok(Self { symmetric, ..a })
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)], symmetric: bool) -> Result<Self> {
        let mut sorted: Vec<_> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &sorted {
            if i >= n || j >= n {
                return Err(Error::Invalid(format!("entry ({i},{j}) outside {n}x{n}")));
            }
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(j);
            values.push(v);
            indptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self::from_csr(n, indptr, indices, values, symmetric)
    }

    pub(crate) fn from_parts_unchecked(
        n: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
        symmetric: bool,
    ) -> Self {
        debug_assert_eq!(indptr.len(), n + 1);
        debug_assert_eq!(indices.len(), values.len());
        Self {
            n,
            indptr,
            indices,
            values,
            symmetric,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_symmetric_pattern(&self) -> bool {
        self.symmetric
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, weight)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| self.values[r.start + k])
    }

    pub fn same_pattern(&self, other: &SparseAdjacency) -> bool {
        self.n == other.n && self.indptr == other.indptr && self.indices == other.indices
    }

    /// Same pattern, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(Error::dims(format!(
                "{} values for a pattern with {} entries",
                values.len(),
                self.nnz()
            )));
        }
        Ok(Self { values, ..self.clone() })
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Largest `|a(i,j) - a(j,i)|` over the pattern; infinite when the
    /// pattern itself is not symmetric.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                match self.get(j, i) {
                    Some(w) => worst = worst.max((v - w).abs()),
                    None => return f64::INFINITY,
                }
            }
        }
        worst
    }

    fn pattern_is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, _)| self.get(j, i).is_some()))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d.set(i, j, v);
            }
        }
        d
    }
}

/// Exact sparse-times-dense product `a * m`.
pub fn spmm(a: &SparseAdjacency, m: &DenseMatrix) -> Result<DenseMatrix> {
    if a.n() != m.rows() {
        return Err(Error::dims(format!(
            "sparse {}x{} times dense {}x{}",
            a.n(),
            a.n(),
            m.rows(),
            m.cols()
        )));
    }
    let cols = m.cols();
    let mut out = DenseMatrix::zeros(a.n(), cols);
    if cols == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, dst)| {
            for (j, w) in a.row(i) {
                for (d, s) in dst.iter_mut().zip(m.row(j)) {
                    *d += w * s;
                }
            }
        });
    Ok(out)
}

/// Gram matrix `h hᵀ` evaluated only on the entries of `pattern`.
pub fn gram_on_pattern(pattern: &SparseAdjacency, h: &DenseMatrix) -> Result<SparseAdjacency> {
    if pattern.n() != h.rows() {
        return Err(Error::dims(format!(
            "pattern n={} vs representation rows={}",
            pattern.n(),
            h.rows()
        )));
    }
    let n = pattern.n();
    let mut values = vec![0.0; pattern.nnz()];
    let indptr = pattern.indptr();
    let indices = pattern.indices();
    // split the value buffer by row so each worker owns a disjoint slice
    let mut rows: Vec<(usize, &mut [f64])> = Vec::with_capacity(n);
    let mut rest = values.as_mut_slice();
    for i in 0..n {
        let (head, tail) = rest.split_at_mut(indptr[i + 1] - indptr[i]);
        rows.push((i, head));
        rest = tail;
    }
    rows.into_par_iter().for_each(|(i, dst)| {
        let hi = h.row(i);
        for (slot, &j) in dst.iter_mut().zip(&indices[indptr[i]..indptr[i + 1]]) {
            *slot = hi.iter().zip(h.row(j)).map(|(a, b)| a * b).sum();
        }
    });
    pattern.with_values(values)
}

/// Entrywise product of two matrices sharing one sparsity pattern.
pub fn hadamard(a: &SparseAdjacency, b: &SparseAdjacency) -> Result<SparseAdjacency> {
    if !a.same_pattern(b) {
        return Err(Error::PatternMismatch);
    }
    let values = a.values().iter().zip(b.values()).map(|(x, y)| x * y).collect();
    Ok(SparseAdjacency::from_parts_unchecked(
        a.n(),
        a.indptr().to_vec(),
        a.indices().to_vec(),
        values,
        a.is_symmetric_pattern() && b.is_symmetric_pattern(),
    ))
}

/// Rectangular CSR matrix used for node features.
///
/// Bag-of-words citation features are ~1% dense, so the classifier's
/// first layer runs over stored entries only.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseFeatures {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseFeatures {
    /// Exact zeros are dropped.
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut indptr = Vec::with_capacity(m.rows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in m.row_iter() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            indptr,
            indices,
            values,
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are rejected
    /// and zero values dropped.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        for (k, &(i, j, v)) in sorted.iter().enumerate() {
            if i >= rows || j >= cols {
                return Err(Error::Invalid(format!("feature entry ({i},{j}) outside {rows}x{cols}")));
            }
            if !v.is_finite() {
                return Err(Error::Invalid(format!("non-finite feature at ({i},{j})")));
            }
            if k > 0 && (sorted[k - 1].0, sorted[k - 1].1) == (i, j) {
                return Err(Error::Invalid(format!("duplicate feature entry ({i},{j})")));
            }
            if v == 0.0 {
                continue;
            }
            indices.push(j);
            values.push(v);
            indptr[i + 1] += 1;
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
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

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                d.set(i, j, v);
            }
        }
        d
    }

    /// Scales every row to unit L1 norm; all-zero rows stay zero.
    pub fn row_l1_normalized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            let r = self.indptr[i]..self.indptr[i + 1];
            let norm: f64 = self.values[r.clone()].iter().map(|v| v.abs()).sum();
            if norm > 0.0 {
                for v in &mut out.values[r] {
                    *v /= norm;
                }
            }
        }
        out
    }

    /// `(x ⊙ s) * w`, where `s` optionally rescales each stored entry
    /// (dropout masks live here).
    pub fn matmul(&self, w: &DenseMatrix, scale: Option<&[f64]>) -> Result<DenseMatrix> {
        if self.cols != w.rows() {
            return Err(Error::dims(format!(
                "features {}x{} times weights {}x{}",
                self.rows,
                self.cols,
                w.rows(),
                w.cols()
            )));
        }
        if let Some(s) = scale {
            assert_eq!(s.len(), self.nnz());
        }
        let out_cols = w.cols();
        let mut out = DenseMatrix::zeros(self.rows, out_cols);
        if out_cols == 0 {
            return Ok(out);
        }
        out.as_mut_slice()
            .par_chunks_mut(out_cols)
            .enumerate()
            .for_each(|(i, dst)| {
                for k in self.indptr[i]..self.indptr[i + 1] {
                    let x = match scale {
                        Some(s) => self.values[k] * s[k],
                        None => self.values[k],
                    };
                    if x == 0.0 {
                        continue;
                    }
                    for (d, wv) in dst.iter_mut().zip(w.row(self.indices[k])) {
                        *d += x * wv;
                    }
                }
            });
        Ok(out)
    }

    /// `(x ⊙ s)ᵀ * g`.
    pub fn transpose_matmul(&self, g: &DenseMatrix, scale: Option<&[f64]>) -> Result<DenseMatrix> {
        if self.rows != g.rows() {
            return Err(Error::dims(format!(
                "features {}x{} transposed times {}x{}",
                self.rows,
                self.cols,
                g.rows(),
                g.cols()
            )));
        }
        let mut out = DenseMatrix::zeros(self.cols, g.cols());
        for i in 0..self.rows {
            let gi = g.row(i);
            for k in self.indptr[i]..self.indptr[i + 1] {
                let x = match scale {
                    Some(s) => self.values[k] * s[k],
                    None => self.values[k],
                };
                if x == 0.0 {
                    continue;
                }
                for (d, gv) in out.row_mut(self.indices[k]).iter_mut().zip(gi) {
                    *d += x * gv;
                }
            }
        }
        Ok(out)
    }
}
