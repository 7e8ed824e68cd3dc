//! Sparse and dense kernels shared by the rest of the crate.

pub mod dense;
pub mod factor;
pub mod scalar;
pub mod sparse;

pub use dense::{axpy, dot, norm2, DenseMatrix};
pub use factor::{dense_solve, lu_dense, thin_qr, BandedLu, Lu, ThinQr};
pub use scalar::Scalar;
pub use sparse::SparseMatrix;

use crate::error::Result;

/// `A·x`.
pub fn spmv(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    a.spmv(x)
}

/// `a·A + b·B`.
pub fn sp_add_scaled(a: &SparseMatrix, b: &SparseMatrix, ca: f64, cb: f64) -> Result<SparseMatrix> {
    a.add_scaled(b, ca, cb)
}

/// `trace(AᵀB)`.
pub fn trace_inner(a: &SparseMatrix, b: &SparseMatrix) -> Result<f64> {
    a.trace_inner(b)
}
