//! Sparse approximate inverses, their cheap update across shifts, and
//! preconditioner chains.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::krylov::LinearOperator;
use crate::linalg::SparseMatrix;

pub const DEFAULT_TOL: f64 = 0.01;
pub const DEFAULT_MAX_COL_ITERS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    Base,
    Update,
}

/// How the `d = P·r` step sees columns that are still being refined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ColumnMode {
    /// Columns `< j` already refined, the rest at their initial value.
    /// Each refined column inherits the support of the ones before it, so
    /// fill grows toward dense on long chains.
    Sequential,
    /// `P` frozen at `αI`; columns are independent and built in parallel.
    #[default]
    Parallel,
}

#[derive(Clone, Copy, Debug)]
pub struct SpaiOptions {
    pub tol: f64,
    pub max_col_iters: usize,
    pub mode: ColumnMode,
}

impl Default for SpaiOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_col_iters: DEFAULT_MAX_COL_ITERS,
            mode: ColumnMode::Parallel,
        }
    }
}

/// A computed `P` (base) or `Q` (update).
#[derive(Clone, Debug)]
pub struct SpaiFactor {
    pub matrix: SparseMatrix,
    /// Final `‖r‖` per column.
    pub column_residuals: Vec<f64>,
    pub column_iterations: Vec<usize>,
    /// The scalar of the initial guess `αI`.
    pub alpha: f64,
    pub build_seconds: f64,
    pub kind: FactorKind,
}

/// `α = tr(K)/tr(KKᵀ)`, the minimizer of `‖I − αK‖_F`.
pub fn build_alpha(k: &SparseMatrix) -> f64 {
    k.trace() / k.sum_squares()
}

/// `α = ½·tr(K_oldᵀK_new + K_newᵀK_old)/tr(K_newᵀK_new)`, the minimizer of
/// `‖K_old − αK_new‖_F`.
pub fn update_alpha(k_old: &SparseMatrix, k_new: &SparseMatrix) -> Result<f64> {
    let cross = k_old.trace_inner(k_new)?;
    let cross_t = k_new.trace_inner(k_old)?;
    Ok(0.5 * (cross + cross_t) / k_new.sum_squares())
}

/// Scatter/gather workspace for sparse vectors over `0..n`.
struct Work {
    acc: Vec<f64>,
    mark: Vec<bool>,
    touched: Vec<usize>,
}

impl Work {
    fn new(n: usize) -> Self {
        Self {
            acc: vec![0.0; n],
            mark: vec![false; n],
            touched: Vec::new(),
        }
    }

    fn add(&mut self, i: usize, v: f64) {
        if !self.mark[i] {
            self.mark[i] = true;
            self.touched.push(i);
        }
        self.acc[i] += v;
    }

    /// Drains the accumulator into a sorted sparse vector.
    fn take(&mut self) -> SpVec {
        self.touched.sort_unstable();
        let mut v = SpVec::default();
        for &i in &self.touched {
            let x = self.acc[i];
            if x != 0.0 {
                v.idx.push(i);
                v.val.push(x);
            }
            self.acc[i] = 0.0;
            self.mark[i] = false;
        }
        self.touched.clear();
        v
    }
}

#[derive(Clone, Debug, Default)]
struct SpVec {
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SpVec {
    fn norm_sq(&self) -> f64 {
        self.val.iter().map(|v| v * v).sum()
    }

    fn dot(&self, o: &SpVec) -> f64 {
        let (mut p, mut q, mut acc) = (0, 0, 0.0);
        while p < self.idx.len() && q < o.idx.len() {
            match self.idx[p].cmp(&o.idx[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.val[p] * o.val[q];
                    p += 1;
                    q += 1;
                }
            }
        }
        acc
    }

    /// `self + a·o`.
    fn axpy(&self, a: f64, o: &SpVec, w: &mut Work) -> SpVec {
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            w.add(i, v);
        }
        for (&i, &v) in o.idx.iter().zip(&o.val) {
            w.add(i, a * v);
        }
        w.take()
    }
}

/// Column `j` of `A`, read from row `j` of `Aᵀ`.
fn column(at: &SparseMatrix, j: usize, scale: f64) -> SpVec {
    let (c, v) = at.row(j);
    SpVec {
        idx: c.to_vec(),
        val: v.iter().map(|x| scale * x).collect(),
    }
}

/// `K·d` using the columns of `K` (rows of `Kᵀ`).
fn k_times(kt: &SparseMatrix, d: &SpVec, w: &mut Work) -> SpVec {
    for (&k, &dk) in d.idx.iter().zip(&d.val) {
        let (c, v) = kt.row(k);
        for (&i, &x) in c.iter().zip(v) {
            w.add(i, x * dk);
        }
    }
    w.take()
}

/// Shared column loop of both builds: starting from `p = α e_j` and
/// residual `r`, minimize `‖r‖` along `d = P·r` until `‖r‖ ≤ tol`.
fn refine_column(
    j: usize,
    mut r: SpVec,
    alpha0: f64,
    kt: &SparseMatrix,
    refined: Option<&[SpVec]>,
    opts: &SpaiOptions,
    w: &mut Work,
) -> Result<(SpVec, f64, usize)> {
    let mut p = SpVec {
        idx: vec![j],
        val: vec![alpha0],
    };
    let mut rn = r.norm_sq().sqrt();
    let mut it = 0;
    while rn > opts.tol {
        if it >= opts.max_col_iters {
            return Err(Error::Stagnation {
                column: j,
                residual: rn,
                iterations: it,
            });
        }
        // d = P·r with the current view of P.
        let d = match refined {
            Some(cols) => {
                for (&k, &rk) in r.idx.iter().zip(&r.val) {
                    if k < j {
                        for (&i, &v) in cols[k].idx.iter().zip(&cols[k].val) {
                            w.add(i, v * rk);
                        }
                    } else {
                        w.add(k, alpha0 * rk);
                    }
                }
                w.take()
            }
            None => SpVec {
                idx: r.idx.clone(),
                val: r.val.iter().map(|v| alpha0 * v).collect(),
            },
        };
        let kd = k_times(kt, &d, w);
        let ww = kd.norm_sq();
        if ww == 0.0 {
            return Err(Error::Stagnation {
                column: j,
                residual: rn,
                iterations: it,
            });
        }
        let a = r.dot(&kd) / ww;
        if !a.is_finite() {
            return Err(Error::NonFinite("SPAI step length"));
        }
        p = p.axpy(a, &d, w);
        r = r.axpy(-a, &kd, w);
        rn = r.norm_sq().sqrt();
        it += 1;
    }
    Ok((p, rn, it))
}

fn build_columns<F>(
    n: usize,
    kt: &SparseMatrix,
    alpha0: f64,
    opts: &SpaiOptions,
    initial_residual: F,
) -> Result<(SparseMatrix, Vec<f64>, Vec<usize>)>
where
    F: Fn(usize, &mut Work) -> SpVec + Sync,
{
    let results: Vec<(SpVec, f64, usize)> = match opts.mode {
        ColumnMode::Sequential => {
            let mut w = Work::new(n);
            let mut cols: Vec<SpVec> = Vec::with_capacity(n);
            let mut out = Vec::with_capacity(n);
            for j in 0..n {
                let r = initial_residual(j, &mut w);
                let (p, rn, it) = refine_column(j, r, alpha0, kt, Some(&cols), opts, &mut w)?;
                cols.push(p.clone());
                out.push((p, rn, it));
            }
            out
        }
        ColumnMode::Parallel => (0..n)
            .into_par_iter()
            .map_init(
                || Work::new(n),
                |w, j| {
                    let r = initial_residual(j, w);
                    refine_column(j, r, alpha0, kt, None, opts, w)
                },
            )
            .collect::<Result<Vec<_>>>()?,
    };
    let mut trip = Vec::new();
    let mut res = Vec::with_capacity(n);
    let mut its = Vec::with_capacity(n);
    for (j, (p, rn, it)) in results.into_iter().enumerate() {
        for (&i, &v) in p.idx.iter().zip(&p.val) {
            trip.push((i, j, v));
        }
        res.push(rn);
        its.push(it);
    }
    let m = SparseMatrix::from_triplets(n, n, &trip)?;
    if !m.is_finite() {
        return Err(Error::NonFinite("SPAI factor"));
    }
    Ok((m, res, its))
}

fn check_square(k: &SparseMatrix, opts: &SpaiOptions) -> Result<()> {
    if !k.is_square() {
        return Err(Error::dim("spai (square)", k.nrows(), k.ncols()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Argument(format!("SPAI tol must be positive, got {}", opts.tol)));
    }
    if !k.is_finite() {
        return Err(Error::NonFinite("SPAI input"));
    }
    Ok(())
}

/// Right approximate inverse `P ≈ K⁻¹` minimizing `‖I − KP‖_F` column-wise.
pub fn spai_build(k: &SparseMatrix, opts: &SpaiOptions) -> Result<SpaiFactor> {
    check_square(k, opts)?;
    let start = Instant::now();
    let n = k.nrows();
    let kt = k.transpose();
    let alpha = build_alpha(k);
    if !alpha.is_finite() {
        return Err(Error::NonFinite("SPAI initial alpha"));
    }
    let (matrix, column_residuals, column_iterations) =
        build_columns(n, &kt, alpha, opts, |j, w| {
            // r = e_j − α K e_j
            w.add(j, 1.0);
            let (c, v) = kt.row(j);
            for (&i, &x) in c.iter().zip(v) {
                w.add(i, -alpha * x);
            }
            w.take()
        })?;
    Ok(SpaiFactor {
        matrix,
        column_residuals,
        column_iterations,
        alpha,
        build_seconds: start.elapsed().as_secs_f64(),
        kind: FactorKind::Base,
    })
}

/// `Q` minimizing `‖K_old − K_new·Q‖_F`, so that `K_new·Q·P_old ≈ K_old·P_old ≈ I`.
pub fn spai_update(
    k_old: &SparseMatrix,
    k_new: &SparseMatrix,
    opts: &SpaiOptions,
) -> Result<SpaiFactor> {
    check_square(k_new, opts)?;
    if k_old.shape() != k_new.shape() {
        return Err(Error::dim(
            "spai_update",
            format!("{:?}", k_new.shape()),
            format!("{:?}", k_old.shape()),
        ));
    }
    let start = Instant::now();
    let n = k_new.nrows();
    let kt_new = k_new.transpose();
    let kt_old = k_old.transpose();
    let alpha = update_alpha(k_old, k_new)?;
    if !alpha.is_finite() {
        return Err(Error::NonFinite("SPAI update alpha"));
    }
    let (matrix, column_residuals, column_iterations) =
        build_columns(n, &kt_new, alpha, opts, |j, w| {
            // r = k_old_j − α K_new e_j
            let old = column(&kt_old, j, 1.0);
            let new = column(&kt_new, j, -alpha);
            old.axpy(1.0, &new, w)
        })?;
    Ok(SpaiFactor {
        matrix,
        column_residuals,
        column_iterations,
        alpha,
        build_seconds: start.elapsed().as_secs_f64(),
        kind: FactorKind::Update,
    })
}

/// Ordered product `[Q⁽ᶻ⁾, …, Q⁽²⁾, P⁽¹⁾]`, applied right to left without
/// ever forming the matrix product.
#[derive(Clone, Debug)]
pub struct PreconditionerChain {
    factors: Vec<Arc<SpaiFactor>>,
    dim: usize,
}

impl PreconditionerChain {
    /// The empty chain acts as the identity on `ℝⁿ`.
    pub fn identity(n: usize) -> Self {
        Self {
            factors: Vec::new(),
            dim: n,
        }
    }

    pub fn from_base(p: SpaiFactor) -> Self {
        let dim = p.matrix.nrows();
        Self {
            factors: vec![Arc::new(p)],
            dim,
        }
    }

    /// Factors in written order, leftmost (applied last) first.
    pub fn from_factors(factors: Vec<SpaiFactor>) -> Result<Self> {
        let dim = factors.first().map_or(0, |f| f.matrix.nrows());
        for f in &factors {
            if f.matrix.shape() != (dim, dim) {
                return Err(Error::dim(
                    "PreconditionerChain",
                    format!("({dim}, {dim})"),
                    format!("{:?}", f.matrix.shape()),
                ));
            }
        }
        Ok(Self {
            factors: factors.into_iter().map(Arc::new).collect(),
            dim,
        })
    }

    /// New chain `[Q, …self]`.
    pub fn prepend(&self, q: SpaiFactor) -> Result<Self> {
        if q.matrix.shape() != (self.dim, self.dim) {
            return Err(Error::dim(
                "PreconditionerChain::prepend",
                self.dim,
                q.matrix.nrows(),
            ));
        }
        let mut factors = Vec::with_capacity(self.factors.len() + 1);
        factors.push(Arc::new(q));
        factors.extend(self.factors.iter().cloned());
        Ok(Self {
            factors,
            dim: self.dim,
        })
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factors(&self) -> impl Iterator<Item = &SpaiFactor> {
        self.factors.iter().map(|f| f.as_ref())
    }

    /// Applies the chain to `v`.
    pub fn chain_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::dim("chain_apply", self.dim, v.len()));
        }
        let mut out = vec![0.0; self.dim];
        self.apply(v, &mut out);
        Ok(out)
    }
}

impl LinearOperator for PreconditionerChain {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if self.factors.is_empty() {
            y.copy_from_slice(x);
            return;
        }
        let mut cur = x.to_vec();
        for f in self.factors.iter().rev() {
            f.matrix.spmv_into(&cur, y);
            cur.copy_from_slice(y);
        }
    }
}

/// Stochastic estimate of `‖I − K·chain‖_F` from `samples` unit probes.
pub fn chain_quality(
    chain: &PreconditionerChain,
    k: &SparseMatrix,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let n = k.nrows();
    if samples == 0 {
        return Err(Error::Argument("chain_quality needs at least one sample".into()));
    }
    if chain.dim() != n || !k.is_square() {
        return Err(Error::dim("chain_quality", n, chain.dim()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut pg = vec![0.0; n];
    let mut kpg = vec![0.0; n];
    for _ in 0..samples {
        let mut g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nrm = crate::linalg::norm2(&g);
        for x in &mut g {
            *x /= nrm;
        }
        chain.apply(&g, &mut pg);
        k.spmv_into(&pg, &mut kpg);
        total += g
            .iter()
            .zip(&kpg)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok((n as f64 / samples as f64 * total).sqrt())
}

/// Exact `‖I − K·chain‖_F` by probing every unit vector.
pub fn chain_residual_exact(chain: &PreconditionerChain, k: &SparseMatrix) -> Result<f64> {
    let n = k.nrows();
    if chain.dim() != n {
        return Err(Error::dim("chain_residual_exact", n, chain.dim()));
    }
    let mut e = vec![0.0; n];
    let mut pe = vec![0.0; n];
    let mut kpe = vec![0.0; n];
    let mut total = 0.0;
    for j in 0..n {
        e[j] = 1.0;
        chain.apply(&e, &mut pe);
        k.spmv_into(&pe, &mut kpe);
        kpe[j] -= 1.0;
        total += kpe.iter().map(|v| v * v).sum::<f64>();
        e[j] = 0.0;
    }
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_input() {
        let f = spai_build(&SparseMatrix::identity(5), &SpaiOptions::default()).unwrap();
        assert_eq!(f.alpha, 1.0);
        assert_eq!(f.matrix, SparseMatrix::identity(5));
        assert!(f.column_iterations.iter().all(|&i| i == 0));
    }

    #[test]
    fn diagonal_input() {
        let k = SparseMatrix::diag(&[2.0, 4.0]);
        assert!((build_alpha(&k) - 0.3).abs() < 1e-15);
        let f = spai_build(&k, &SpaiOptions::default()).unwrap();
        assert!((f.matrix.get(0, 0) - 0.5).abs() <= 0.01 / 2.0);
        assert!((f.matrix.get(1, 1) - 0.25).abs() <= 0.01 / 4.0);
        assert!(f.column_residuals.iter().all(|&r| r <= 0.01));
    }

    #[test]
    fn update_examples() {
        let k = SparseMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (2, 2, 3.0)]).unwrap();
        let q = spai_update(&k, &k, &SpaiOptions::default()).unwrap();
        assert_eq!(q.alpha, 1.0);
        assert_eq!(q.matrix, SparseMatrix::identity(3));
        assert!(q.column_iterations.iter().all(|&i| i == 0));

        let i2 = SparseMatrix::identity(2);
        let two = i2.scaled(2.0);
        let q = spai_update(&i2, &two, &SpaiOptions::default()).unwrap();
        assert_eq!(q.alpha, 0.5);
        assert_eq!(q.matrix, SparseMatrix::diag(&[0.5, 0.5]));
        assert_eq!(q.kind, FactorKind::Update);
    }

    #[test]
    fn chain_examples() {
        let empty = PreconditionerChain::identity(3);
        assert_eq!(empty.chain_apply(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let mk = |s: f64| SpaiFactor {
            matrix: SparseMatrix::identity(2).scaled(s),
            column_residuals: vec![],
            column_iterations: vec![],
            alpha: s,
            build_seconds: 0.0,
            kind: FactorKind::Base,
        };
        let c = PreconditionerChain::from_base(mk(3.0)).prepend(mk(2.0)).unwrap();
        assert_eq!(c.chain_apply(&[1.0, -1.0]).unwrap(), vec![6.0, -6.0]);
        assert!(c.chain_apply(&[1.0]).is_err());
    }

    #[test]
    fn stagnation_is_reported() {
        let k = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let opts = SpaiOptions {
            max_col_iters: 3,
            ..SpaiOptions::default()
        };
        // tr(K) = 0 gives α = 0, so P·r vanishes forever.
        match spai_build(&k, &opts) {
            Err(Error::Stagnation { column, .. }) => assert_eq!(column, 0),
            other => panic!("expected stagnation, got {other:?}"),
        }
    }

    #[test]
    fn exact_quality_of_exact_inverse() {
        let k = SparseMatrix::diag(&[2.0, 4.0, 8.0]);
        let p = SpaiFactor {
            matrix: SparseMatrix::diag(&[0.5, 0.25, 0.125]),
            column_residuals: vec![],
            column_iterations: vec![],
            alpha: 0.0,
            build_seconds: 0.0,
            kind: FactorKind::Base,
        };
        let c = PreconditionerChain::from_base(p);
        assert_eq!(chain_residual_exact(&c, &k).unwrap(), 0.0);
        assert_eq!(chain_quality(&c, &k, 5, 42).unwrap(), 0.0);
    }
}
