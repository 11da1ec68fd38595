//! Compressed sparse row matrices with sorted, duplicate-free rows.

use super::AssemblyError;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates in input
    /// order so the result is reproducible bit for bit.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self, AssemblyError> {
        if let Some(&(r, c, _)) = triplets.iter().find(|t| t.0 >= n_rows || t.1 >= n_cols) {
            return Err(AssemblyError::IndexOutOfRange { row: r, col: c, n_rows, n_cols });
        }
        if triplets.iter().any(|t| !t.2.is_finite()) {
            return Err(AssemblyError::NonFiniteEntry);
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { n_rows, n_cols, row_ptr, col_idx, values, symmetric: false })
    }

    /// Wraps raw CSR arrays after checking that every row is strictly sorted.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, AssemblyError> {
        let ok = row_ptr.len() == n_rows + 1
            && row_ptr[0] == 0
            && row_ptr[n_rows] == col_idx.len()
            && col_idx.len() == values.len()
            && row_ptr.windows(2).all(|w| w[0] <= w[1])
            && (0..n_rows).all(|i| {
                let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
                row.windows(2).all(|w| w[0] < w[1]) && row.iter().all(|&c| c < n_cols)
            });
        if !ok {
            return Err(AssemblyError::MalformedPattern);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AssemblyError::NonFiniteEntry);
        }
        Ok(Self { n_rows, n_cols, row_ptr, col_idx, values, symmetric: false })
    }

    pub(crate) fn from_parts_unchecked(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
        symmetric: bool,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), n_rows + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        Self { n_rows, n_cols, row_ptr, col_idx, values, symmetric }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
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

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Whether the matrix was assembled from a symmetric bilinear form.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub(crate) fn set_symmetric(&mut self, symmetric: bool) {
        self.symmetric = symmetric;
    }

    /// Column indices and values of one row.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Stored value at `(i, j)`, zero if the entry is structurally absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_rows);
        assert_eq!(y.len(), self.n_cols);
        (0..self.n_rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                x[i] * cols.iter().zip(vals).map(|(&c, &v)| v * y[c]).sum::<f64>()
            })
            .sum()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                col_idx[next[c]] = i;
                values[next[c]] = v;
                next[c] += 1;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
            symmetric: self.symmetric,
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s · other` for matrices sharing one sparsity pattern.
    pub fn add_scaled_same_pattern(&mut self, s: f64, other: &Self) -> Result<(), AssemblyError> {
        if self.row_ptr != other.row_ptr || self.col_idx != other.col_idx {
            return Err(AssemblyError::PatternMismatch);
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
        self.symmetric &= other.symmetric;
        Ok(())
    }

    /// Largest `|A_ij − A_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - t.get(i, c)).abs());
            }
            let (cols, vals) = t.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(i, c)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        d
    }
}
