//! Per-point linear-solve strategies for `𝒦(s)·X = B`.

use std::time::Instant;

use crate::airga::SolverKind;
use crate::error::{Error, Result};
use crate::krylov::{block_solve, Identity};
use crate::linalg::{BandedLu, DenseMatrix, SparseMatrix};
use crate::spai::{spai_build, spai_update, FactorKind, PreconditionerChain, SpaiOptions};
use crate::system::SecondOrderSystem;

/// Knobs shared by every solve in a run.
#[derive(Clone, Copy, Debug)]
pub struct SolveSettings {
    pub kind: SolverKind,
    pub spai: SpaiOptions,
    pub cg_rtol: f64,
    /// `None` means `10·n`.
    pub cg_maxit: Option<usize>,
    /// First outer iteration (1-based) that updates instead of rebuilding.
    pub update_start_iteration: usize,
}

/// What was built for one point before any solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondKind {
    Lu,
    None,
    Spai,
    SpaiUpdate,
}

impl PrecondKind {
    pub fn name(self) -> &'static str {
        match self {
            PrecondKind::Lu => "lu",
            PrecondKind::None => "none",
            PrecondKind::Spai => "spai",
            PrecondKind::SpaiUpdate => "spai-update",
        }
    }
}

enum Backend {
    Direct(BandedLu<f64>),
    Cg(PreconditionerChain),
}

/// The shifted operator `𝒦(s)` at one point plus whatever factorization or
/// preconditioner the strategy needs.
pub struct ShiftSolver {
    pub point: f64,
    pub shifted: SparseMatrix,
    pub precond: PrecondKind,
    /// Seconds spent on the factorization or preconditioner.
    pub setup_seconds: f64,
    /// Length of the SPAI chain (0 for direct and plain CG).
    pub chain_len: usize,
    backend: Backend,
}

/// One solve with `m` right-hand sides.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub x: DenseMatrix,
    /// Ledger residual `η` with `𝒦·X = B + η`: minus the CG recurrence
    /// residual, or the explicit residual for direct solves.
    pub eta: DenseMatrix,
    /// `‖B‖_F`.
    pub rhs_norm: f64,
    pub cg_iterations: usize,
    pub unconverged: usize,
    pub seconds: f64,
}

impl ShiftSolver {
    /// Builds the strategy at `point`. `previous` is the solver for the same
    /// point index in the previous outer iteration, `outer` is 1-based.
    pub fn prepare(
        sys: &SecondOrderSystem,
        point: f64,
        settings: &SolveSettings,
        previous: Option<&ShiftSolver>,
        outer: usize,
    ) -> Result<Self> {
        let shifted = sys.shifted(point)?;
        let start = Instant::now();
        let (backend, precond) = match settings.kind {
            SolverKind::Direct => (
                Backend::Direct(BandedLu::from_combination(&[(1.0, &shifted)])?),
                PrecondKind::Lu,
            ),
            SolverKind::Cg => (Backend::Cg(PreconditionerChain::identity(sys.n())), PrecondKind::None),
            SolverKind::CgSpai => (
                Backend::Cg(PreconditionerChain::from_base(spai_build(&shifted, &settings.spai)?)),
                PrecondKind::Spai,
            ),
            SolverKind::CgSpaiUpdate => {
                let prior = previous.filter(|_| outer >= settings.update_start_iteration);
                match prior {
                    Some(prev) => {
                        let Backend::Cg(chain) = &prev.backend else {
                            return Err(Error::Argument(
                                "previous solver has no preconditioner chain".into(),
                            ));
                        };
                        let q = spai_update(&prev.shifted, &shifted, &settings.spai)?;
                        debug_assert_eq!(q.kind, FactorKind::Update);
                        (Backend::Cg(chain.prepend(q)?), PrecondKind::SpaiUpdate)
                    }
                    None => (
                        Backend::Cg(PreconditionerChain::from_base(spai_build(
                            &shifted,
                            &settings.spai,
                        )?)),
                        PrecondKind::Spai,
                    ),
                }
            }
        };
        let setup_seconds = start.elapsed().as_secs_f64();
        let chain_len = match &backend {
            Backend::Cg(c) => c.len(),
            Backend::Direct(_) => 0,
        };
        Ok(Self {
            point,
            shifted,
            precond,
            setup_seconds,
            chain_len,
            backend,
        })
    }

    pub fn chain(&self) -> Option<&PreconditionerChain> {
        match &self.backend {
            Backend::Cg(c) => Some(c),
            Backend::Direct(_) => None,
        }
    }

    /// Solves `𝒦·X = B`.
    pub fn solve(&self, b: &DenseMatrix, settings: &SolveSettings) -> Result<SolveOutcome> {
        let n = self.shifted.nrows();
        if b.nrows() != n {
            return Err(Error::dim("ShiftSolver::solve", n, b.nrows()));
        }
        let start = Instant::now();
        match &self.backend {
            Backend::Direct(lu) => {
                let mut x = b.clone();
                for c in 0..x.ncols() {
                    lu.solve_in_place(x.col_mut(c));
                }
                let mut eta = self.shifted.mul_dense(&x)?;
                eta.axpy(-1.0, b)?;
                if !x.is_finite() {
                    return Err(Error::NonFinite("direct solve"));
                }
                Ok(SolveOutcome {
                    x,
                    eta,
                    rhs_norm: b.frob_norm(),
                    cg_iterations: 0,
                    unconverged: 0,
                    seconds: start.elapsed().as_secs_f64(),
                })
            }
            Backend::Cg(chain) => {
                let maxit = settings.cg_maxit.unwrap_or(10 * n);
                let bs = if chain.is_empty() {
                    block_solve(&self.shifted, &Identity(n), b, settings.cg_rtol, maxit)?
                } else {
                    block_solve(&self.shifted, chain, b, settings.cg_rtol, maxit)?
                };
                Ok(SolveOutcome {
                    x: bs.x,
                    eta: bs.recurrence_residual.scaled(-1.0),
                    rhs_norm: b.frob_norm(),
                    cg_iterations: bs.iterations.iter().sum(),
                    unconverged: bs.converged.iter().filter(|c| !**c).count(),
                    seconds: start.elapsed().as_secs_f64(),
                })
            }
        }
    }
}
