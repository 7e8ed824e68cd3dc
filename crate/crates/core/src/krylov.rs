//! Right-preconditioned conjugate gradients with residual capture.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix, SparseMatrix};

/// Curvature `dᵀ·A·P·d` at or below this fraction of `‖d‖²` is a breakdown.
pub const BREAKDOWN_RTOL: f64 = 1e-30;
pub const DEFAULT_RTOL: f64 = 1e-10;

/// A square linear map applied to vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A·x`; both slices have length `dim()`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y);
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                crate::linalg::axpy(xj, self.col(j), y);
            }
        }
    }
}

/// The identity on `ℝⁿ`.
#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// `A∘P` for two operators of equal dimension.
pub struct Composed<'a> {
    pub outer: &'a dyn LinearOperator,
    pub inner: &'a dyn LinearOperator,
}

impl LinearOperator for Composed<'_> {
    fn dim(&self) -> usize {
        self.outer.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut t = vec![0.0; self.inner.dim()];
        self.inner.apply(x, &mut t);
        self.outer.apply(&t, y);
    }
}

/// Outcome of one CG solve.
#[derive(Clone, Debug)]
pub struct SolveReport {
    /// `x = P·x̃`.
    pub solution: Vec<f64>,
    /// True residual `b − A·x`, recomputed from the returned solution.
    pub residual: Vec<f64>,
    /// Residual carried by the CG recurrence.
    pub recurrence_residual: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖r_k‖/‖b‖` of the recurrence, starting with `k = 0`.
    pub relres_history: Vec<f64>,
}

/// CG on `A∘P` from `x̃₀ = 0`, returning `x = P·x̃`.
///
/// Stops once both the recurrence residual and the true residual are below
/// `rtol·‖b‖`, or after `maxit` iterations with `converged = false`.
pub fn pcg_solve(
    a: &dyn LinearOperator,
    p: &dyn LinearOperator,
    b: &[f64],
    rtol: f64,
    maxit: usize,
) -> Result<SolveReport> {
    let n = b.len();
    if a.dim() != n || p.dim() != n {
        return Err(Error::dim(
            "pcg_solve",
            n,
            format!("A {} / P {}", a.dim(), p.dim()),
        ));
    }
    if !(rtol > 0.0) {
        return Err(Error::Argument(format!("rtol must be positive, got {rtol}")));
    }
    let bnorm = dot(b, b).sqrt();
    if !bnorm.is_finite() {
        return Err(Error::NonFinite("CG right-hand side"));
    }
    if bnorm == 0.0 {
        return Ok(SolveReport {
            solution: vec![0.0; n],
            residual: vec![0.0; n],
            recurrence_residual: vec![0.0; n],
            iterations: 0,
            converged: true,
            relres_history: vec![0.0],
        });
    }

    let target = rtol * bnorm;
    let mut xt = vec![0.0; n];
    let mut r = b.to_vec();
    let mut d = r.clone();
    let mut pd = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut history = vec![rr.sqrt() / bnorm];
    let mut iterations = 0;
    let mut verified: Option<(Vec<f64>, Vec<f64>)> = None;

    while iterations < maxit {
        p.apply(&d, &mut pd);
        a.apply(&pd, &mut q);
        let curv = dot(&d, &q);
        let dd = dot(&d, &d);
        if !curv.is_finite() {
            return Err(Error::NonFinite("CG curvature"));
        }
        if curv <= BREAKDOWN_RTOL * dd {
            return Err(Error::Breakdown {
                iteration: iterations,
                curvature: curv,
            });
        }
        let alpha = rr / curv;
        for i in 0..n {
            xt[i] += alpha * d[i];
            r[i] -= alpha * q[i];
        }
        iterations += 1;
        let rr_new = dot(&r, &r);
        history.push(rr_new.sqrt() / bnorm);
        if rr_new.sqrt() <= target {
            let (x, res) = true_residual(a, p, &xt, b);
            if dot(&res, &res).sqrt() <= target {
                verified = Some((x, res));
                break;
            }
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            d[i] = r[i] + beta * d[i];
        }
    }

    let converged = verified.is_some();
    let (solution, residual) = verified.unwrap_or_else(|| true_residual(a, p, &xt, b));
    Ok(SolveReport {
        solution,
        residual,
        recurrence_residual: r,
        iterations,
        converged,
        relres_history: history,
    })
}

fn true_residual(
    a: &dyn LinearOperator,
    p: &dyn LinearOperator,
    xt: &[f64],
    b: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = b.len();
    let mut x = vec![0.0; n];
    p.apply(xt, &mut x);
    let mut ax = vec![0.0; n];
    a.apply(&x, &mut ax);
    let res = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    (x, res)
}

/// Column-by-column CG over a block right-hand side.
#[derive(Clone, Debug)]
pub struct BlockSolve {
    pub x: DenseMatrix,
    /// True residuals `B − A·X`.
    pub residual: DenseMatrix,
    /// Recurrence residuals, one column per right-hand side.
    pub recurrence_residual: DenseMatrix,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

/// Solves every column of `B`; columns run in parallel with results
/// identical to sequential execution.
pub fn block_solve(
    a: &dyn LinearOperator,
    p: &dyn LinearOperator,
    b: &DenseMatrix,
    rtol: f64,
    maxit: usize,
) -> Result<BlockSolve> {
    if b.nrows() != a.dim() {
        return Err(Error::dim("block_solve", a.dim(), b.nrows()));
    }
    let reports: Vec<Result<SolveReport>> = (0..b.ncols())
        .into_par_iter()
        .map(|k| {
            pcg_solve(a, p, b.col(k), rtol, maxit)
                .map_err(|e| e.context(format!("column {k}")))
        })
        .collect();
    let n = b.nrows();
    let m = b.ncols();
    let mut out = BlockSolve {
        x: DenseMatrix::zeros(n, m),
        residual: DenseMatrix::zeros(n, m),
        recurrence_residual: DenseMatrix::zeros(n, m),
        iterations: Vec::with_capacity(m),
        converged: Vec::with_capacity(m),
    };
    for (k, rep) in reports.into_iter().enumerate() {
        let rep = rep?;
        out.x.col_mut(k).copy_from_slice(&rep.solution);
        out.residual.col_mut(k).copy_from_slice(&rep.residual);
        out.recurrence_residual
            .col_mut(k)
            .copy_from_slice(&rep.recurrence_residual);
        out.iterations.push(rep.iterations);
        out.converged.push(rep.converged);
    }
    Ok(out)
}
