use crate::error::{Error, Result};
use crate::linalg::dense::DenseMatrix;

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row and no exact zeros are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::Argument(format!(
                    "triplet ({i}, {j}) outside {nrows}x{ncols}"
                )));
            }
            sorted.push((i, j, v));
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut k = 0;
        while k < sorted.len() {
            let (i, j, mut v) = sorted[k];
            k += 1;
            while k < sorted.len() && sorted[k].0 == i && sorted[k].1 == j {
                v += sorted[k].2;
                k += 1;
            }
            if v != 0.0 {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds from raw CSR arrays, validating every structural invariant.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1 || row_ptr[0] != 0 {
            return Err(Error::Argument("row_ptr has wrong length or start".into()));
        }
        if col_idx.len() != values.len() || row_ptr[nrows] != values.len() {
            return Err(Error::Argument("row_ptr end does not match nnz".into()));
        }
        for i in 0..nrows {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::Argument(format!("row_ptr decreases at row {i}")));
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= ncols) {
                return Err(Error::Argument(format!("bad column indices in row {i}")));
            }
        }
        if values.iter().any(|&v| v == 0.0) {
            return Err(Error::Argument("explicit zero stored".into()));
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, &v) in d.iter().enumerate() {
            if v != 0.0 {
                col_idx.push(i);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: n,
            ncols: n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sparse copy of a dense matrix, keeping nonzero entries only.
    pub fn from_dense(a: &DenseMatrix) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: a.nrows(),
            ncols: a.ncols(),
            row_ptr,
            col_idx,
            values,
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
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// `A·x`, accumulated row by row.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::dim("spmv", self.ncols, x.len()));
        }
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// Unchecked `y = A·x`; lengths are the caller's responsibility.
    pub(crate) fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    /// `A·B` for a dense block `B`.
    pub fn mul_dense(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if b.nrows() != self.ncols {
            return Err(Error::dim("mul_dense", self.ncols, b.nrows()));
        }
        let mut out = DenseMatrix::zeros(self.nrows, b.ncols());
        for j in 0..b.ncols() {
            let (src, dst) = (b.col(j).to_vec(), out.col_mut(j));
            self.spmv_into(&src, dst);
        }
        Ok(out)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let dst = next[j];
                col_idx[dst] = i;
                values[dst] = self.values[k];
                next[j] += 1;
            }
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `a·A + b·B` over the union pattern. Entries that cancel to exact zero are dropped.
    pub fn add_scaled(&self, other: &SparseMatrix, a: f64, b: f64) -> Result<SparseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "sp_add_scaled",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        row_ptr.push(0);
        fn push(col_idx: &mut Vec<usize>, values: &mut Vec<f64>, j: usize, v: f64) {
            if v != 0.0 {
                col_idx.push(j);
                values.push(v);
            }
        }
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                if q == cb.len() || (p < ca.len() && ca[p] < cb[q]) {
                    push(&mut col_idx, &mut values, ca[p], a * va[p]);
                    p += 1;
                } else if p == ca.len() || cb[q] < ca[p] {
                    push(&mut col_idx, &mut values, cb[q], b * vb[q]);
                    q += 1;
                } else {
                    push(&mut col_idx, &mut values, ca[p], a * va[p] + b * vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn scaled(&self, a: f64) -> SparseMatrix {
        if a == 0.0 {
            return SparseMatrix::zeros(self.nrows, self.ncols);
        }
        SparseMatrix {
            values: self.values.iter().map(|v| a * v).collect(),
            ..self.clone()
        }
    }

    /// Sum of squared stored values, in storage order.
    pub fn sum_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.sum_squares().sqrt()
    }

    /// `trace(AᵀB) = Σ Aᵢⱼ Bᵢⱼ` over the pattern intersection.
    pub fn trace_inner(&self, other: &SparseMatrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "trace_inner",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        if std::ptr::eq(self, other) {
            return Ok(self.sum_squares());
        }
        let mut acc = 0.0;
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() && q < cb.len() {
                match ca[p].cmp(&cb[q]) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => {
                        acc += va[p] * vb[q];
                        p += 1;
                        q += 1;
                    }
                }
            }
        }
        Ok(acc)
    }

    pub fn trace(&self) -> f64 {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).sum()
    }

    /// Sparse product `A·B`.
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.ncols != other.nrows {
            return Err(Error::dim("sparse matmul", self.ncols, other.nrows));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            touched.clear();
            let (ca, va) = self.row(i);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(k);
                for (&j, &b) in cb.iter().zip(vb) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                if acc[j] != 0.0 {
                    col_idx.push(j);
                    values.push(acc[j]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: other.ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Half-bandwidths `(lower, upper)` of the stored pattern.
    pub fn bandwidth(&self) -> (usize, usize) {
        let (mut lo, mut hi) = (0, 0);
        for i in 0..self.nrows {
            for &j in self.row(i).0 {
                if j < i {
                    lo = lo.max(i - j);
                } else {
                    hi = hi.max(j - i);
                }
            }
        }
        (lo, hi)
    }

    /// Largest `|Aᵢⱼ − Aⱼᵢ|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        match self.add_scaled(&t, 1.0, -1.0) {
            Ok(d) => d.values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Densified column `j`.
    pub fn column_dense(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m22(a: f64, b: f64, c: f64, d: f64) -> SparseMatrix {
        SparseMatrix::from_triplets(2, 2, &[(0, 0, a), (0, 1, b), (1, 0, c), (1, 1, d)]).unwrap()
    }

    #[test]
    fn spmv_examples() {
        let i3 = SparseMatrix::identity(3);
        assert_eq!(i3.spmv(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let d = SparseMatrix::diag(&[2.0, 3.0]);
        assert_eq!(d.spmv(&[1.0, 1.0]).unwrap(), vec![2.0, 3.0]);
        assert_eq!(m22(1.0, 2.0, 3.0, 4.0).spmv(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        assert!(matches!(
            i3.spmv(&[1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn add_scaled_examples() {
        let a = SparseMatrix::identity(2);
        let b = m22(0.0, 1.0, 1.0, 0.0);
        assert_eq!(a.add_scaled(&b, 1.0, 0.0).unwrap(), a);
        let five = a.add_scaled(&a, 2.0, 3.0).unwrap();
        assert_eq!(five, SparseMatrix::diag(&[5.0, 5.0]));
        let u = a.add_scaled(&b, 1.0, 1.0).unwrap();
        assert_eq!(u, m22(1.0, 1.0, 1.0, 1.0));
        assert!(a.add_scaled(&SparseMatrix::identity(3), 1.0, 1.0).is_err());
        let cancel = a.add_scaled(&a, 1.0, -1.0).unwrap();
        assert_eq!(cancel.nnz(), 0);
    }

    #[test]
    fn norms_and_traces() {
        assert_eq!(SparseMatrix::zeros(3, 3).frob_norm(), 0.0);
        assert_eq!(SparseMatrix::identity(4).frob_norm(), 2.0);
        assert_eq!(m22(3.0, 4.0, 0.0, 0.0).frob_norm(), 5.0);
        let i3 = SparseMatrix::identity(3);
        assert_eq!(i3.trace_inner(&i3).unwrap(), 3.0);
        assert_eq!(i3.trace_inner(&SparseMatrix::zeros(3, 3)).unwrap(), 0.0);
        let a = m22(1.0, 2.0, 0.0, 1.0);
        let b = m22(2.0, 0.0, 1.0, 2.0);
        assert_eq!(a.trace_inner(&b).unwrap(), 4.0);
        assert_eq!(b.trace_inner(&a).unwrap(), 4.0);
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let a = SparseMatrix::from_triplets(2, 3, &[(1, 2, 1.0), (0, 0, 0.0), (1, 2, 2.0), (0, 1, 5.0)])
            .unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(1, 2), 3.0);
        assert_eq!(a.get(0, 0), 0.0);
        assert!(SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn transpose_and_matmul() {
        let a = SparseMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]).unwrap();
        let t = a.transpose();
        assert_eq!(t.shape(), (3, 2));
        assert_eq!(t.get(2, 0), 2.0);
        let p = a.matmul(&t).unwrap();
        assert_eq!(p.to_dense(), a.to_dense().matmul(&t.to_dense()).unwrap());
    }

    #[test]
    fn csr_validation() {
        assert!(SparseMatrix::from_csr(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 2, vec![0, 1], vec![0], vec![0.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 2, vec![0, 2], vec![0, 1], vec![1.0, 2.0]).is_ok());
    }
}
