use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dimensions of an `m x n` problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProblemShape {
    rows: usize,
    cols: usize,
}

impl ProblemShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `max(m, n) / min(m, n)`, always at least 1.
    pub fn aspect_ratio(&self) -> f64 {
        self.rows.max(self.cols) as f64 / self.rows.min(self.cols) as f64
    }

    pub fn min_dim(&self) -> usize {
        self.rows.min(self.cols)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub(crate) fn check(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: dims,
            });
        }
        Ok(())
    }
}

/// Revealed entries of an `m x n` matrix, everything else implicitly zero.
///
/// Entries are kept in row-major order together with a per-column index, so
/// row and column degrees, products with vectors, and restrictions to the
/// pattern all cost `O(|E|)`. Values are immutable; derived matrices on the
/// same pattern are built with [`ObservedMatrix::with_values`].
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix {
    shape: ProblemShape,
    rows: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
    // entry indices grouped by column, ascending row within a column
    col_entries: Vec<usize>,
}

impl ObservedMatrix {
    /// Builds the matrix from `(row, col, value)` triples in any order.
    ///
    /// Out-of-range indices and repeated `(row, col)` pairs are rejected.
    pub fn new<I>(shape: ProblemShape, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut triples: Vec<(usize, usize, f64)> = entries.into_iter().collect();
        for &(row, col, _) in &triples {
            if row >= shape.rows || col >= shape.cols {
                return Err(Error::IndexOutOfRange {
                    row,
                    col,
                    rows: shape.rows,
                    cols: shape.cols,
                });
            }
        }
        triples.sort_unstable_by_key(|&(i, j, _)| (i, j));
        if let Some(w) = triples.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::DuplicateEntry {
                row: w[0].0,
                col: w[0].1,
            });
        }
        let mut rows = Vec::with_capacity(triples.len());
        let mut cols = Vec::with_capacity(triples.len());
        let mut values = Vec::with_capacity(triples.len());
        for (i, j, v) in triples {
            rows.push(i);
            cols.push(j);
            values.push(v);
        }
        Ok(Self::from_sorted(shape, rows, cols, values))
    }

    /// Pattern-only constructor; every value is zero.
    pub fn pattern<I>(shape: ProblemShape, positions: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::new(shape, positions.into_iter().map(|(i, j)| (i, j, 0.0)))
    }

    // Caller guarantees row-major order without duplicates.
    fn from_sorted(shape: ProblemShape, rows: Vec<usize>, cols: Vec<usize>, values: Vec<f64>) -> Self {
        let mut row_offsets = vec![0usize; shape.rows + 1];
        let mut col_offsets = vec![0usize; shape.cols + 1];
        for (&i, &j) in rows.iter().zip(&cols) {
            row_offsets[i + 1] += 1;
            col_offsets[j + 1] += 1;
        }
        for i in 0..shape.rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        for j in 0..shape.cols {
            col_offsets[j + 1] += col_offsets[j];
        }
        let mut next = col_offsets.clone();
        let mut col_entries = vec![0usize; cols.len()];
        for (e, &j) in cols.iter().enumerate() {
            col_entries[next[j]] = e;
            next[j] += 1;
        }
        Self {
            shape,
            rows,
            cols,
            values,
            row_offsets,
            col_offsets,
            col_entries,
        }
    }

    pub fn shape(&self) -> ProblemShape {
        self.shape
    }

    pub fn nrows(&self) -> usize {
        self.shape.rows
    }

    pub fn ncols(&self) -> usize {
        self.shape.cols
    }

    /// Number of observed entries `|E|`.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `|E| / sqrt(m n)`: the average number of revealed entries per row or
    /// column of a square matrix.
    pub fn epsilon(&self) -> f64 {
        self.nnz() as f64 / ((self.shape.rows as f64) * (self.shape.cols as f64)).sqrt()
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.rows
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.values)
            .map(|((&i, &j), &v)| (i, j, v))
    }

    /// Entry positions (into [`values`](Self::values)) of row `i`.
    pub fn row_range(&self, i: usize) -> Range<usize> {
        self.row_offsets[i]..self.row_offsets[i + 1]
    }

    /// Entry positions of column `j`, ascending by row.
    pub fn col_entries(&self, j: usize) -> &[usize] {
        &self.col_entries[self.col_offsets[j]..self.col_offsets[j + 1]]
    }

    pub fn row_degree(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    pub fn col_degree(&self, j: usize) -> usize {
        self.col_offsets[j + 1] - self.col_offsets[j]
    }

    pub fn row_degrees(&self) -> Vec<usize> {
        (0..self.shape.rows).map(|i| self.row_degree(i)).collect()
    }

    pub fn col_degrees(&self) -> Vec<usize> {
        (0..self.shape.cols).map(|j| self.col_degree(j)).collect()
    }

    /// Value at `(i, j)` if it is observed.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let range = self.row_range(i);
        let start = range.start;
        self.cols[range]
            .binary_search(&j)
            .ok()
            .map(|p| self.values[start + p])
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.shape.rows && self.get(i, j).is_some()
    }

    /// Same pattern, new values (one per entry, row-major order).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::DimensionMismatch {
                expected: (self.values.len(), 1),
                found: (values.len(), 1),
            });
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub fn map_values<F: FnMut(usize, usize, f64) -> f64>(&self, mut f: F) -> Self {
        let values = self.iter().map(|(i, j, v)| f(i, j, v)).collect();
        Self {
            values,
            ..self.clone()
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map_values(|_, _, v| v * factor)
    }

    /// Keeps the entries for which `keep` returns true.
    pub fn retain<F: FnMut(usize, usize, f64) -> bool>(&self, mut keep: F) -> Self {
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut values = Vec::new();
        for (i, j, v) in self.iter() {
            if keep(i, j, v) {
                rows.push(i);
                cols.push(j);
                values.push(v);
            }
        }
        Self::from_sorted(self.shape, rows, cols, values)
    }

    pub fn same_pattern(&self, other: &ObservedMatrix) -> bool {
        self.shape == other.shape && self.rows == other.rows && self.cols == other.cols
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.shape.rows, self.shape.cols);
        for (i, j, v) in self.iter() {
            out[(i, j)] = v;
        }
        out
    }
}

/// Anything whose entries can be read at arbitrary positions.
pub trait MatrixLike {
    fn dims(&self) -> (usize, usize);

    fn entry(&self, row: usize, col: usize) -> f64;

    /// Values at every position of `pattern`, in its entry order.
    fn values_on(&self, pattern: &ObservedMatrix) -> Vec<f64> {
        pattern.iter().map(|(i, j, _)| self.entry(i, j)).collect()
    }
}

impl MatrixLike for DMatrix<f64> {
    fn dims(&self) -> (usize, usize) {
        self.shape()
    }

    fn entry(&self, row: usize, col: usize) -> f64 {
        self[(row, col)]
    }
}

impl MatrixLike for ObservedMatrix {
    fn dims(&self) -> (usize, usize) {
        self.shape.dims()
    }

    fn entry(&self, row: usize, col: usize) -> f64 {
        self.get(row, col).unwrap_or(0.0)
    }

    fn values_on(&self, pattern: &ObservedMatrix) -> Vec<f64> {
        if self.same_pattern(pattern) {
            return self.values.clone();
        }
        pattern.iter().map(|(i, j, _)| self.entry(i, j)).collect()
    }
}

impl<T: MatrixLike + ?Sized> MatrixLike for &T {
    fn dims(&self) -> (usize, usize) {
        (**self).dims()
    }

    fn entry(&self, row: usize, col: usize) -> f64 {
        (**self).entry(row, col)
    }

    fn values_on(&self, pattern: &ObservedMatrix) -> Vec<f64> {
        (**self).values_on(pattern)
    }
}

/// `P_E(A)`: the entries of `operand` at the positions of `pattern`.
pub fn project_observed<A: MatrixLike + ?Sized>(operand: &A, pattern: &ObservedMatrix) -> Result<ObservedMatrix> {
    pattern.shape.check(operand.dims())?;
    pattern.with_values(operand.values_on(pattern))
}

/// `||P_E(A - B)||_F` where `E` is the pattern of `a`.
pub fn observed_frobenius<B: MatrixLike + ?Sized>(a: &ObservedMatrix, b: &B) -> Result<f64> {
    a.shape.check(b.dims())?;
    let other = b.values_on(a);
    Ok(a
        .values
        .iter()
        .zip(&other)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}
