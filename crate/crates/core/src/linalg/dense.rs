use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Column-major dense real matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            values: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from column-major storage.
    pub fn from_col_major(nrows: usize, ncols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nrows * ncols {
            return Err(Error::dim(
                "DenseMatrix::from_col_major",
                nrows * ncols,
                values.len(),
            ));
        }
        Ok(Self {
            nrows,
            ncols,
            values,
        })
    }

    /// Builds a matrix from a slice of equally long rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "ragged row {i}");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let ncols = cols.len();
        let nrows = cols.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(nrows * ncols);
        for c in cols {
            if c.len() != nrows {
                return Err(Error::dim("DenseMatrix::from_columns", nrows, c.len()));
            }
            values.extend_from_slice(c);
        }
        Ok(Self {
            nrows,
            ncols,
            values,
        })
    }

    pub fn column_vector(v: &[f64]) -> Self {
        Self {
            nrows: v.len(),
            ncols: 1,
            values: v.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.values[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.ncols).map(|j| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.ncols, self.nrows);
        for j in 0..self.ncols {
            for i in 0..self.nrows {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.ncols != rhs.nrows {
            return Err(Error::dim("matmul", self.ncols, rhs.nrows));
        }
        let mut out = Self::zeros(self.nrows, rhs.ncols);
        for j in 0..rhs.ncols {
            let rc = rhs.col(j);
            let oc = out.col_mut(j);
            for (k, &b) in rc.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                let ac = &self.values[k * self.nrows..(k + 1) * self.nrows];
                for (o, &a) in oc.iter_mut().zip(ac) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * rhs` without forming the transpose.
    pub fn t_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.nrows != rhs.nrows {
            return Err(Error::dim("t_matmul", self.nrows, rhs.nrows));
        }
        let mut out = Self::zeros(self.ncols, rhs.ncols);
        for j in 0..rhs.ncols {
            let rc = rhs.col(j);
            for i in 0..self.ncols {
                out[(i, j)] = dot(self.col(i), rc);
            }
        }
        Ok(out)
    }

    /// `self * x` for a vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::dim("matvec", self.ncols, x.len()));
        }
        let mut y = vec![0.0; self.nrows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (yi, &a) in y.iter_mut().zip(self.col(j)) {
                *yi += a * xj;
            }
        }
        Ok(y)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// `a·self + b·other`.
    pub fn add_scaled(&self, other: &DenseMatrix, a: f64, b: f64) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "DenseMatrix::add_scaled",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(Self {
            nrows: self.nrows,
            ncols: self.ncols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.add_scaled(other, 1.0, -1.0)
    }

    /// `self += a·other`, in place.
    pub fn axpy(&mut self, a: f64, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "DenseMatrix::axpy",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    /// Sum of squares in storage order; `frob_norm` is its square root.
    pub fn sum_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.sum_squares().sqrt()
    }

    /// `trace(selfᵀ other)`, the Frobenius inner product.
    pub fn trace_inner(&self, other: &DenseMatrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "DenseMatrix::trace_inner",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(dot(&self.values, &other.values))
    }

    pub fn trace(&self) -> f64 {
        (0..self.nrows.min(self.ncols)).map(|i| self[(i, i)]).sum()
    }

    /// Horizontal concatenation `[A₁, A₂, …]`.
    pub fn hstack(blocks: &[&DenseMatrix]) -> Result<DenseMatrix> {
        let nrows = blocks.first().map_or(0, |b| b.nrows);
        let mut values = Vec::new();
        let mut ncols = 0;
        for b in blocks {
            if b.nrows != nrows {
                return Err(Error::dim("hstack", nrows, b.nrows));
            }
            values.extend_from_slice(&b.values);
            ncols += b.ncols;
        }
        Ok(Self {
            nrows,
            ncols,
            values,
        })
    }

    /// Keeps the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> DenseMatrix {
        let mut values = Vec::with_capacity(cols.len() * self.nrows);
        for &c in cols {
            values.extend_from_slice(self.col(c));
        }
        Self {
            nrows: self.nrows,
            ncols: cols.len(),
            values,
        }
    }

    /// Copies the `rows × cols` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> DenseMatrix {
        let mut out = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &DenseMatrix) {
        for j in 0..b.ncols {
            for i in 0..b.nrows {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest absolute deviation from symmetry.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.ncols {
            for i in 0..j {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// `(A + Aᵀ)/2`.
    pub fn symmetrized(&self) -> DenseMatrix {
        let mut out = self.clone();
        for j in 0..self.ncols {
            for i in 0..j {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &self.values[j * self.nrows + i]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &mut self.values[j * self.nrows + i]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.nrows, self.ncols)?;
        for i in 0..self.nrows.min(12) {
            let row: Vec<String> = (0..self.ncols.min(12))
                .map(|j| format!("{:>11.4e}", self[(i, j)]))
                .collect();
            writeln!(f, "  {}", row.join(" "))?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += a·x`.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
