//! Adaptive iterative rational global Arnoldi reduction with pluggable
//! linear-solve strategies.

mod reduced;
mod solver;
mod trace;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

pub use reduced::{
    full_error_h2, h2_distance, h2_norm, project_reduce, refresh_points, relative_h2_distance,
    H2Value, ReducedSystem, POINT_DEDUP_RTOL,
};
pub use solver::{PrecondKind, ShiftSolver, SolveOutcome, SolveSettings};
pub use trace::{InnerStep, LedgerEntry, OuterRecord, RunTrace, SolveCell};

use crate::error::{Error, Result};
use crate::linalg::{thin_qr, DenseMatrix};
use crate::spai::SpaiOptions;
use crate::system::SecondOrderSystem;

/// A block counts as fully deflated once its norm drops below this fraction
/// of the norm it had when its solve returned.
pub const DEFLATION_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolverKind {
    /// Banded LU of each shifted operator.
    Direct,
    /// Unpreconditioned CG.
    Cg,
    /// CG with a fresh SPAI factor per point and outer iteration.
    CgSpai,
    /// CG with SPAI chains extended by updates from `update_start_iteration` on.
    CgSpaiUpdate,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Direct => "direct",
            SolverKind::Cg => "cg",
            SolverKind::CgSpai => "cg-spai",
            SolverKind::CgSpaiUpdate => "cg-spai-update",
        }
    }

    pub fn is_iterative(self) -> bool {
        self != SolverKind::Direct
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "direct" => Ok(SolverKind::Direct),
            "cg" => Ok(SolverKind::Cg),
            "cg-spai" => Ok(SolverKind::CgSpai),
            "cg-spai-update" => Ok(SolverKind::CgSpaiUpdate),
            other => Err(Error::Argument(format!(
                "unknown solver '{other}' (direct, cg, cg-spai, cg-spai-update)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum H2Method {
    Lyapunov,
    Quadrature,
}

impl H2Method {
    pub fn name(self) -> &'static str {
        match self {
            H2Method::Lyapunov => "lyapunov",
            H2Method::Quadrature => "quadrature",
        }
    }
}

impl FromStr for H2Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lyapunov" => Ok(H2Method::Lyapunov),
            "quadrature" => Ok(H2Method::Quadrature),
            other => Err(Error::Argument(format!(
                "unknown H2 method '{other}' (lyapunov, quadrature)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointOrigin {
    Initial,
    QuadEig,
}

impl PointOrigin {
    pub fn name(self) -> &'static str {
        match self {
            PointOrigin::Initial => "initial",
            PointOrigin::QuadEig => "quad_eig",
        }
    }
}

/// Real expansion points, sorted ascending and distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionPointSet {
    points: Vec<f64>,
    origin: PointOrigin,
    pub(crate) padded: bool,
}

impl ExpansionPointSet {
    pub fn new(mut points: Vec<f64>, origin: PointOrigin) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Argument("expansion point set is empty".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Argument("expansion points must be finite".into()));
        }
        points.sort_by(f64::total_cmp);
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Argument(format!("duplicate expansion points in {points:?}")));
        }
        Ok(Self {
            points,
            origin,
            padded: false,
        })
    }

    /// `l` points linearly spaced on `[a, b]`.
    pub fn linspace(a: f64, b: f64, l: usize) -> Result<Self> {
        let pts = match l {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..l)
                .map(|i| a + (b - a) * i as f64 / (l - 1) as f64)
                .collect(),
        };
        Self::new(pts, PointOrigin::Initial)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn origin(&self) -> PointOrigin {
        self.origin
    }

    /// Some slots were refilled from the previous set.
    pub fn padded(&self) -> bool {
        self.padded
    }
}

/// `X⁽ʲ⁾(sᵢ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentBlock {
    pub point_index: usize,
    pub order: usize,
    pub data: DenseMatrix,
}

/// Unit-norm blocks `V₁ … V_J` and the orthonormal basis of their span.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthonormalBasis {
    pub blocks: Vec<DenseMatrix>,
    pub assembled: DenseMatrix,
}

impl OrthonormalBasis {
    /// Thin QR of `[V₁ … V_J]`; dependent columns are dropped.
    pub fn from_blocks(blocks: Vec<DenseMatrix>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Argument("basis needs at least one block".into()));
        }
        let refs: Vec<&DenseMatrix> = blocks.iter().collect();
        let assembled = thin_qr(&DenseMatrix::hstack(&refs)?)?.range_basis();
        Ok(Self { blocks, assembled })
    }

    pub fn r(&self) -> usize {
        self.assembled.ncols()
    }

    /// `‖VᵀV − I‖_F`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self
            .assembled
            .t_matmul(&self.assembled)
            .expect("basis is square-compatible with itself");
        g.sub(&DenseMatrix::identity(self.r()))
            .expect("same shape")
            .frob_norm()
    }
}

#[derive(Clone, Debug)]
pub struct AirgaConfig {
    pub r_max: usize,
    pub initial_points: ExpansionPointSet,
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub solver: SolverKind,
    pub spai: SpaiOptions,
    pub cg_rtol: f64,
    /// `None` means `10·n`.
    pub cg_maxit: Option<usize>,
    /// 1-based outer iteration from which SPAI factors are updated.
    pub update_start_iteration: usize,
    pub max_outer: usize,
    pub h2_method: H2Method,
    /// Run exactly this many basis blocks per outer iteration, skipping the
    /// intermediate convergence test.
    pub fixed_blocks: Option<usize>,
}

impl Default for AirgaConfig {
    fn default() -> Self {
        Self {
            r_max: 30,
            initial_points: ExpansionPointSet::linspace(1.0, 100.0, 3).expect("valid default points"),
            outer_tol: 1e-6,
            inner_tol: 1e-6,
            solver: SolverKind::CgSpai,
            spai: SpaiOptions::default(),
            cg_rtol: crate::krylov::DEFAULT_RTOL,
            cg_maxit: None,
            update_start_iteration: 3,
            max_outer: 20,
            h2_method: H2Method::Lyapunov,
            fixed_blocks: None,
        }
    }
}

impl AirgaConfig {
    pub fn validate(&self, inputs: usize) -> Result<()> {
        if !(self.outer_tol > 0.0 && self.inner_tol > 0.0) {
            return Err(Error::Argument("outer and inner tolerances must be positive".into()));
        }
        if self.r_max < inputs.max(1) {
            return Err(Error::Argument(format!(
                "r_max = {} is below the input count {inputs}",
                self.r_max
            )));
        }
        if !(self.cg_rtol > 0.0) {
            return Err(Error::Argument("cg_rtol must be positive".into()));
        }
        if !(self.spai.tol > 0.0) {
            return Err(Error::Argument("spai tol must be positive".into()));
        }
        if self.max_outer == 0 {
            return Err(Error::Argument("max_outer must be at least 1".into()));
        }
        if self.update_start_iteration == 0 {
            return Err(Error::Argument("update_start_iteration is 1-based".into()));
        }
        if let Some(b) = self.fixed_blocks {
            if b == 0 || b * inputs > self.r_max {
                return Err(Error::Argument(format!(
                    "fixed_blocks = {b} needs 1 <= blocks·m <= r_max = {}",
                    self.r_max
                )));
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> SolveSettings {
        SolveSettings {
            kind: self.solver,
            spai: self.spai,
            cg_rtol: self.cg_rtol,
            cg_maxit: self.cg_maxit,
            update_start_iteration: self.update_start_iteration,
        }
    }

    /// Upper limit on basis blocks: `⌊r_max/m⌋`, so that `r ≤ r_max`.
    pub fn block_bound(&self, inputs: usize) -> usize {
        self.fixed_blocks
            .unwrap_or(self.r_max / inputs.max(1))
            .max(1)
    }
}

fn ledger_entry(point_index: usize, point: f64, order: usize, out: SolveOutcome) -> LedgerEntry {
    LedgerEntry {
        point_index,
        point,
        order,
        x: out.x,
        eta: out.eta,
        rhs_norm: out.rhs_norm,
        cg_iterations: out.cg_iterations,
        unconverged: out.unconverged,
    }
}

/// Solves `𝒦(sᵢ)·X = F` at every point and keeps the orthonormal factor of
/// each solution block. Also returns the raw solves for the ledger and their
/// wall-clock seconds.
pub fn zeroth_moments(
    sys: &SecondOrderSystem,
    solvers: &[ShiftSolver],
    settings: &SolveSettings,
) -> Result<(Vec<MomentBlock>, Vec<LedgerEntry>, Vec<f64>)> {
    if solvers.is_empty() {
        return Err(Error::Argument("no expansion points".into()));
    }
    let results: Vec<Result<(MomentBlock, LedgerEntry, f64)>> = solvers
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let out = s
                .solve(&sys.f, settings)
                .map_err(|e| e.context(format!("zeroth moment at point {} (s = {})", i + 1, s.point)))?;
            let seconds = out.seconds;
            // Dependent columns stay as zeros so every block keeps m columns.
            let qr = thin_qr(&out.x)?;
            let mut q = qr.q;
            for &c in &qr.deficient {
                q.col_mut(c).fill(0.0);
            }
            let block = MomentBlock {
                point_index: i,
                order: 0,
                data: q,
            };
            Ok((block, ledger_entry(i, s.point, 0, out), seconds))
        })
        .collect();
    let mut blocks = Vec::with_capacity(solvers.len());
    let mut entries = Vec::with_capacity(solvers.len());
    let mut seconds = Vec::with_capacity(solvers.len());
    for r in results {
        let (b, e, s) = r?;
        blocks.push(b);
        entries.push(e);
        seconds.push(s);
    }
    Ok((blocks, entries, seconds))
}

/// Estimates within this fraction of the maximum count as tied. Unit-norm
/// zeroth blocks tie exactly in theory and differ only by rounding.
pub const SELECT_TIE_RTOL: f64 = 1e-8;

/// Index of the largest estimate; ties (to [`SELECT_TIE_RTOL`]) go to the
/// smallest index.
pub fn select_point(moment_errors: &[f64]) -> usize {
    let max = moment_errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    moment_errors
        .iter()
        .position(|&e| e >= max - SELECT_TIE_RTOL * max.abs())
        .unwrap_or(0)
}

/// Solves `𝒦(s_sel)·X = −M·Vⱼ` for the selected point; every other block is
/// carried forward unchanged.
pub fn next_moment(
    sys: &SecondOrderSystem,
    blocks: &[MomentBlock],
    selected: usize,
    vj: &DenseMatrix,
    solver: &ShiftSolver,
    settings: &SolveSettings,
) -> Result<(Vec<MomentBlock>, LedgerEntry, f64)> {
    if selected >= blocks.len() {
        return Err(Error::Argument(format!(
            "selected point {selected} out of {}",
            blocks.len()
        )));
    }
    let rhs = sys.m.mul_dense(vj)?.scaled(-1.0);
    let out = solver.solve(&rhs, settings)?;
    let seconds = out.seconds;
    let mut next = blocks.to_vec();
    let order = blocks[selected].order + 1;
    next[selected] = MomentBlock {
        point_index: selected,
        order,
        data: out.x.clone(),
    };
    Ok((next, ledger_entry(selected, solver.point, order, out), seconds))
}

/// Global Arnoldi: removes from `x` its trace-inner-product components along
/// each `Vₜ`, with one reorthogonalization sweep. Returns the summed
/// coefficients `γₜ`.
pub fn arnoldi_deflate(x: &MomentBlock, basis: &[DenseMatrix]) -> Result<(MomentBlock, Vec<f64>)> {
    let mut data = x.data.clone();
    let mut gammas = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (t, v) in basis.iter().enumerate() {
            let g = v.trace_inner(&data)?;
            if g != 0.0 {
                data.axpy(-g, v)?;
            }
            gammas[t] += g;
        }
    }
    Ok((
        MomentBlock {
            point_index: x.point_index,
            order: x.order,
            data,
        },
        gammas,
    ))
}

/// `‖X⁽ʲ⁾(sᵢ)‖_F` of each (deflated) block.
pub fn moment_error_estimates(blocks: &[MomentBlock]) -> Vec<f64> {
    blocks.iter().map(|b| b.data.frob_norm()).collect()
}

struct InnerOutcome {
    vs: Vec<DenseMatrix>,
    ledger: Vec<LedgerEntry>,
    steps: Vec<InnerStep>,
    converged: bool,
    solves: Vec<usize>,
    cg_iterations: Vec<usize>,
    unconverged: Vec<usize>,
    solve_seconds: Vec<f64>,
}

fn intermediate_model(sys: &SecondOrderSystem, blocks: &[MomentBlock]) -> Result<Option<ReducedSystem>> {
    let normalized: Vec<DenseMatrix> = blocks
        .iter()
        .filter_map(|b| {
            let nrm = b.data.frob_norm();
            (nrm > 0.0).then(|| b.data.scaled(1.0 / nrm))
        })
        .collect();
    if normalized.is_empty() {
        return Ok(None);
    }
    let refs: Vec<&DenseMatrix> = normalized.iter().collect();
    let w = thin_qr(&DenseMatrix::hstack(&refs)?)?.range_basis();
    if w.ncols() == 0 {
        return Ok(None);
    }
    let mut rs = project_reduce(
        sys,
        &OrthonormalBasis {
            blocks: Vec::new(),
            assembled: w,
        },
    )?;
    rs.basis = None;
    Ok(Some(rs))
}

fn inner_loop(
    sys: &SecondOrderSystem,
    solvers: &[ShiftSolver],
    cfg: &AirgaConfig,
    outer: usize,
) -> Result<InnerOutcome> {
    let settings = cfg.settings();
    let l = solvers.len();
    let bound = cfg.block_bound(sys.inputs());
    let (mut blocks, mut last, secs) = zeroth_moments(sys, solvers, &settings)?;
    let mut out = InnerOutcome {
        vs: Vec::with_capacity(bound),
        ledger: Vec::with_capacity(bound),
        steps: Vec::new(),
        converged: false,
        solves: vec![1; l],
        cg_iterations: last.iter().map(|e| e.cg_iterations).collect(),
        unconverged: last.iter().map(|e| e.unconverged).collect(),
        solve_seconds: secs,
    };
    // Norm of each block when its solve returned; QR'd zeroth blocks are unit.
    let mut fresh_norm: Vec<f64> = blocks.iter().map(|b| b.data.frob_norm()).collect();
    let estimates = |blocks: &[MomentBlock], fresh: &[f64]| -> Vec<f64> {
        moment_error_estimates(blocks)
            .into_iter()
            .zip(fresh)
            .map(|(e, &f)| if e <= DEFLATION_FLOOR * f { 0.0 } else { e })
            .collect()
    };
    let mut prev_int: Option<ReducedSystem> = None;

    while out.vs.len() + 1 < bound {
        let j = out.vs.len() + 1;
        let errs = estimates(&blocks, &fresh_norm);
        let t = select_point(&errs);
        if errs[t] == 0.0 {
            break;
        }
        let vj = blocks[t].data.scaled(1.0 / errs[t]);
        out.ledger.push(last[t].clone());
        out.vs.push(vj.clone());
        let (next, entry, seconds) = next_moment(sys, &blocks, t, &vj, &solvers[t], &settings)
            .map_err(|e| {
                e.context(format!(
                    "outer {outer}, inner {j}, point {} (s = {})",
                    t + 1,
                    solvers[t].point
                ))
            })?;
        out.solves[t] += 1;
        out.cg_iterations[t] += entry.cg_iterations;
        out.unconverged[t] += entry.unconverged;
        out.solve_seconds[t] += seconds;
        fresh_norm[t] = entry.x.frob_norm();
        last[t] = entry;
        blocks = next
            .iter()
            .map(|b| arnoldi_deflate(b, &out.vs).map(|r| r.0))
            .collect::<Result<_>>()?;

        let mut change = None;
        if cfg.fixed_blocks.is_none() {
            if let Some(int) = intermediate_model(sys, &blocks)? {
                if let Some(prev) = &prev_int {
                    let (d, _) = relative_h2_distance(&int, prev, cfg.h2_method)
                        .map_err(|e| e.context(format!("outer {outer}, inner {j}: intermediate H2")))?;
                    change = Some(d);
                }
                prev_int = Some(int);
            }
        }
        out.steps.push(InnerStep {
            selected: t,
            moment_errors: errs,
            intermediate_change: change,
        });
        if change.is_some_and(|d| d <= cfg.inner_tol) {
            out.converged = true;
            break;
        }
    }

    let errs = estimates(&blocks, &fresh_norm);
    let t = select_point(&errs);
    if errs[t] > 0.0 {
        out.ledger.push(last[t].clone());
        out.vs.push(blocks[t].data.scaled(1.0 / errs[t]));
        out.steps.push(InnerStep {
            selected: t,
            moment_errors: errs,
            intermediate_change: None,
        });
    }
    if out.vs.is_empty() {
        return Err(Error::RankDeficient {
            columns: (0..sys.inputs()).collect(),
        }
        .context(format!("outer {outer}: every zeroth moment vanished")));
    }
    Ok(out)
}

/// Runs the outer/inner iteration and returns the final reduced model.
pub fn airga_run(sys: &SecondOrderSystem, cfg: &AirgaConfig) -> Result<(ReducedSystem, RunTrace)> {
    cfg.validate(sys.inputs())?;
    let settings = cfg.settings();
    let started = Instant::now();
    let mut trace = RunTrace {
        solver: cfg.solver,
        n: sys.n(),
        inputs: sys.inputs(),
        outer: Vec::new(),
        cells: Vec::new(),
        ledger: Vec::new(),
        basis_blocks: Vec::new(),
        converged: false,
        total_seconds: 0.0,
    };
    let mut pts = cfg.initial_points.clone();
    let mut prev_solvers: Vec<ShiftSolver> = Vec::new();
    let mut prev_red: Option<ReducedSystem> = None;

    for z in 1..=cfg.max_outer {
        let solvers: Vec<ShiftSolver> = pts
            .points()
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                ShiftSolver::prepare(sys, s, &settings, prev_solvers.get(i), z).map_err(|e| {
                    e.context(format!("outer {z}, point {} (s = {s}): solver setup", i + 1))
                })
            })
            .collect::<Result<_>>()?;

        let inner = inner_loop(sys, &solvers, cfg, z)?;
        for (i, s) in solvers.iter().enumerate() {
            trace.cells.push(SolveCell {
                outer: z,
                point_index: i,
                point: s.point,
                precond: s.precond.name(),
                chain_len: s.chain_len,
                solves: inner.solves[i],
                cg_iterations: inner.cg_iterations[i],
                unconverged: inner.unconverged[i],
                solve_seconds: inner.solve_seconds[i],
                precond_seconds: s.setup_seconds,
            });
        }

        let proj_start = Instant::now();
        let basis = OrthonormalBasis::from_blocks(inner.vs.clone())
            .map_err(|e| e.context(format!("outer {z}: basis assembly")))?;
        let red = project_reduce(sys, &basis)?;
        let projection_seconds = proj_start.elapsed().as_secs_f64();

        let (change, fallback) = match &prev_red {
            Some(p) => {
                let (d, fb) = relative_h2_distance(&red, p, cfg.h2_method)
                    .map_err(|e| e.context(format!("outer {z}: H2 change")))?;
                (Some(d), fb)
            }
            None => (None, false),
        };
        trace.outer.push(OuterRecord {
            outer: z,
            points: pts.points().to_vec(),
            origin: pts.origin(),
            padded: pts.padded(),
            steps: inner.steps,
            blocks: inner.vs.len(),
            r: red.r(),
            inner_converged: inner.converged,
            h2_change: change,
            h2_fallback: fallback,
            setup_seconds: solvers.iter().map(|s| s.setup_seconds).sum(),
            solve_seconds: inner.solve_seconds.iter().sum(),
            projection_seconds,
        });
        trace.ledger = inner.ledger;
        trace.basis_blocks = inner.vs;

        let done = change.is_some_and(|d| d <= cfg.outer_tol);
        if done || z == cfg.max_outer {
            trace.converged = done;
            prev_red = Some(red);
            break;
        }
        pts = refresh_points(&red, pts.len(), &pts)
            .map_err(|e| e.context(format!("outer {z}: expansion-point refresh")))?;
        prev_red = Some(red);
        prev_solvers = solvers;
    }
    trace.total_seconds = started.elapsed().as_secs_f64();
    let red = prev_red.expect("at least one outer iteration ran");
    Ok((red, trace))
}
