use crate::error::{Error, Result};
use crate::linalg::dense::DenseMatrix;
use crate::linalg::scalar::Scalar;
use crate::linalg::sparse::SparseMatrix;

/// Pivots below this fraction of `‖A‖_F` count as zero.
pub const SINGULAR_RTOL: f64 = 1e-14;
/// Householder columns below this fraction of `‖A‖_F` count as dependent.
pub const RANK_RTOL: f64 = 1e-12;

/// Thin QR factorization `A = Q·R`.
#[derive(Clone, Debug)]
pub struct ThinQr {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    pub rank: usize,
    /// Columns whose R diagonal was zeroed as numerically dependent.
    pub deficient: Vec<usize>,
}

impl ThinQr {
    /// Q with the dependent columns removed.
    pub fn range_basis(&self) -> DenseMatrix {
        let keep: Vec<usize> = (0..self.q.ncols())
            .filter(|c| !self.deficient.contains(c))
            .collect();
        self.q.select_columns(&keep)
    }
}

/// Householder thin QR with nonnegative R diagonal.
pub fn thin_qr(a: &DenseMatrix) -> Result<ThinQr> {
    let (n, k) = a.shape();
    if n < k {
        return Err(Error::dim("thin_qr (rows >= cols)", k, n));
    }
    let scale = a.frob_norm();
    let cutoff = RANK_RTOL * scale;
    let mut w = a.clone();
    let mut r = DenseMatrix::zeros(k, k);
    // Householder vectors; `None` marks a skipped (dependent) column.
    let mut refl: Vec<Option<Vec<f64>>> = Vec::with_capacity(k);
    let mut deficient = Vec::new();

    for c in 0..k {
        let x = &w.col(c)[c..];
        let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..c {
            r[(i, c)] = w[(i, c)];
        }
        if xnorm <= cutoff || scale == 0.0 {
            deficient.push(c);
            r[(c, c)] = 0.0;
            refl.push(None);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        for t in &mut v {
            *t /= vnorm;
        }
        for cc in c..k {
            let col = &mut w.col_mut(cc)[c..];
            let d: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            for (ci, vi) in col.iter_mut().zip(&v) {
                *ci -= 2.0 * d * vi;
            }
        }
        r[(c, c)] = w[(c, c)];
        refl.push(Some(v));
    }

    // Q = H₀ H₁ … H_{k−1} applied to the first k identity columns.
    let mut q = DenseMatrix::zeros(n, k);
    for c in 0..k {
        q[(c, c)] = 1.0;
    }
    for c in (0..k).rev() {
        if let Some(v) = &refl[c] {
            for cc in 0..k {
                let col = &mut q.col_mut(cc)[c..];
                let d: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                if d != 0.0 {
                    for (ci, vi) in col.iter_mut().zip(v) {
                        *ci -= 2.0 * d * vi;
                    }
                }
            }
        }
    }

    for c in 0..k {
        if r[(c, c)] < 0.0 {
            for j in c..k {
                r[(c, j)] = -r[(c, j)];
            }
            for v in q.col_mut(c) {
                *v = -*v;
            }
        }
    }
    Ok(ThinQr {
        q,
        r,
        rank: k - deficient.len(),
        deficient,
    })
}

/// Solves `R x = b` for upper-triangular `R` in place.
pub fn solve_upper(r: &DenseMatrix, b: &mut [f64]) -> Result<()> {
    let k = r.ncols();
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in i + 1..k {
            s -= r[(i, j)] * b[j];
        }
        if r[(i, i)] == 0.0 {
            return Err(Error::Singular { pivot: i });
        }
        b[i] = s / r[(i, i)];
    }
    Ok(())
}

/// Dense LU with partial pivoting over a column-major square matrix.
#[derive(Clone, Debug)]
pub struct Lu<T: Scalar> {
    n: usize,
    lu: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    /// Factors the `n×n` column-major matrix `a`.
    pub fn new(n: usize, mut a: Vec<T>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::dim("Lu::new", n * n, a.len()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LU input"));
        }
        let norm = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let cutoff = SINGULAR_RTOL * norm;
        let mut piv = vec![0; n];
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].modulus();
            for i in k + 1..n {
                let m = a[k * n + i].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if best <= cutoff || best == 0.0 {
                return Err(Error::Singular { pivot: k });
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    a.swap(j * n + k, j * n + p);
                }
            }
            let d = a[k * n + k];
            for i in k + 1..n {
                a[k * n + i] = a[k * n + i] / d;
            }
            for j in k + 1..n {
                let akj = a[j * n + k];
                if akj == T::zero() {
                    continue;
                }
                for i in k + 1..n {
                    let l = a[k * n + i];
                    a[j * n + i] -= l * akj;
                }
            }
        }
        Ok(Self { n, lu: a, piv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for j in 0..n {
            let bj = b[j];
            if bj == T::zero() {
                continue;
            }
            for i in j + 1..n {
                b[i] -= self.lu[j * n + i] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] = b[j] / self.lu[j * n + j];
            let bj = b[j];
            for i in 0..j {
                b[i] -= self.lu[j * n + i] * bj;
            }
        }
    }

    /// Solves `Aᴴ x = b` in place (`Aᵀ` for real scalars).
    pub fn solve_adjoint_in_place(&self, b: &mut [T]) {
        let n = self.n;
        // Uᴴ y = b
        for j in 0..n {
            let mut s = b[j];
            for i in 0..j {
                s -= self.lu[j * n + i].conj() * b[i];
            }
            b[j] = s / self.lu[j * n + j].conj();
        }
        // Lᴴ z = y
        for j in (0..n).rev() {
            let mut s = b[j];
            for i in j + 1..n {
                s -= self.lu[j * n + i].conj() * b[i];
            }
            b[j] = s;
        }
        for k in (0..n).rev() {
            b.swap(k, self.piv[k]);
        }
    }
}

/// Factors a real dense matrix.
pub fn lu_dense(a: &DenseMatrix) -> Result<Lu<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim("lu (square)", a.nrows(), a.ncols()));
    }
    Lu::new(a.nrows(), a.values().to_vec())
}

/// `X = A⁻¹B` by LU with partial pivoting.
pub fn dense_solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if b.nrows() != a.nrows() {
        return Err(Error::dim("dense_solve", a.nrows(), b.nrows()));
    }
    let lu = lu_dense(a)?;
    let mut x = b.clone();
    for j in 0..x.ncols() {
        lu.solve_in_place(x.col_mut(j));
    }
    Ok(x)
}

/// Banded LU with partial pivoting. Row interchanges widen the upper band
/// to `lower + upper`.
#[derive(Clone, Debug)]
pub struct BandedLu<T: Scalar> {
    n: usize,
    lo: usize,
    up: usize,
    width: usize,
    ab: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    /// Factors `Σ coeffₖ · Aₖ` without assembling the sum as a sparse matrix.
    pub fn from_combination(terms: &[(T, &SparseMatrix)]) -> Result<Self> {
        let n = terms.first().map_or(0, |t| t.1.nrows());
        let (mut lo, mut hi) = (0, 0);
        for (_, a) in terms {
            if a.shape() != (n, n) {
                return Err(Error::dim(
                    "BandedLu::from_combination",
                    format!("({n}, {n})"),
                    format!("{:?}", a.shape()),
                ));
            }
            let (l, h) = a.bandwidth();
            lo = lo.max(l);
            hi = hi.max(h);
        }
        let up = lo + hi;
        let width = lo + up + 1;
        let mut ab = vec![T::zero(); n * width];
        let mut norm_sq = 0.0;
        for (c, a) in terms {
            for i in 0..n {
                let (cols, vals) = a.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    ab[i * width + j + lo - i] += c.scale(v);
                }
            }
        }
        for v in &ab {
            norm_sq += v.norm_sqr();
        }
        let mut f = Self {
            n,
            lo,
            up,
            width,
            ab,
            piv: vec![0; n],
        };
        f.factor(SINGULAR_RTOL * norm_sq.sqrt())?;
        Ok(f)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width + j + self.lo - i
    }

    fn factor(&mut self, cutoff: f64) -> Result<()> {
        let n = self.n;
        if self.ab.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("banded LU input"));
        }
        for k in 0..n {
            let last = (k + self.lo).min(n - 1);
            let mut p = k;
            let mut best = self.ab[self.at(k, k)].modulus();
            for i in k + 1..=last {
                let m = self.ab[self.at(i, k)].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if best <= cutoff || best == 0.0 {
                return Err(Error::Singular { pivot: k });
            }
            self.piv[k] = p;
            let jend = (k + self.up).min(n - 1);
            if p != k {
                for j in k..=jend {
                    let (a, b) = (self.at(k, j), self.at(p, j));
                    self.ab.swap(a, b);
                }
            }
            let d = self.ab[self.at(k, k)];
            for i in k + 1..=last {
                let ik = self.at(i, k);
                let l = self.ab[ik] / d;
                self.ab[ik] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..=jend {
                    let kj = self.ab[self.at(k, j)];
                    let ij = self.at(i, j);
                    self.ab[ij] -= l * kj;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            if bk != T::zero() {
                for i in k + 1..=(k + self.lo).min(n.saturating_sub(1)) {
                    b[i] -= self.ab[self.at(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + self.up).min(n - 1) {
                s -= self.ab[self.at(k, j)] * b[j];
            }
            b[k] = s / self.ab[self.at(k, k)];
        }
    }
}
