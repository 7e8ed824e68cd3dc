//! Per-run bookkeeping and its CSV / text serializations.

use std::fmt::Write as _;

use crate::airga::{PointOrigin, SolverKind};
use crate::linalg::DenseMatrix;

/// One recorded solve `𝒦(s)·X = B + η`.
#[derive(Clone, Debug)]
pub struct LedgerEntry {
    pub point_index: usize,
    pub point: f64,
    /// Moment order `j` of the block this solve produced.
    pub order: usize,
    /// The raw solution, before QR or deflation.
    pub x: DenseMatrix,
    pub eta: DenseMatrix,
    pub rhs_norm: f64,
    pub cg_iterations: usize,
    pub unconverged: usize,
}

/// Solve and setup totals for one point in one outer iteration.
#[derive(Clone, Debug)]
pub struct SolveCell {
    pub outer: usize,
    pub point_index: usize,
    pub point: f64,
    pub precond: &'static str,
    pub chain_len: usize,
    pub solves: usize,
    pub cg_iterations: usize,
    pub unconverged: usize,
    pub solve_seconds: f64,
    pub precond_seconds: f64,
}

/// One inner step: the selected point and the estimates it was chosen from.
#[derive(Clone, Debug)]
pub struct InnerStep {
    pub selected: usize,
    pub moment_errors: Vec<f64>,
    /// Relative H₂ change of the intermediate model, when evaluated.
    pub intermediate_change: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct OuterRecord {
    /// 1-based.
    pub outer: usize,
    pub points: Vec<f64>,
    pub origin: PointOrigin,
    pub padded: bool,
    pub steps: Vec<InnerStep>,
    /// Number of basis blocks `J`.
    pub blocks: usize,
    pub r: usize,
    pub inner_converged: bool,
    pub h2_change: Option<f64>,
    pub h2_fallback: bool,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
    pub projection_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub solver: SolverKind,
    pub n: usize,
    pub inputs: usize,
    pub outer: Vec<OuterRecord>,
    pub cells: Vec<SolveCell>,
    /// Solves behind the selected blocks `V₁ … V_J` of the last outer iteration.
    pub ledger: Vec<LedgerEntry>,
    /// Unit-norm blocks `V₁ … V_J` of the last outer iteration, before the final QR.
    pub basis_blocks: Vec<DenseMatrix>,
    pub converged: bool,
    pub total_seconds: f64,
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.17e}"))
        .collect::<Vec<_>>()
        .join(";")
}

impl RunTrace {
    pub fn final_r(&self) -> usize {
        self.outer.last().map_or(0, |o| o.r)
    }

    /// Header: `outer,point,shift,precond,chain_len,solves,cg_iters,unconverged,solve_seconds,precond_seconds`.
    pub fn cells_csv(&self) -> String {
        let mut s = String::from(
            "outer,point,shift,precond,chain_len,solves,cg_iters,unconverged,solve_seconds,precond_seconds\n",
        );
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{:.17e},{},{},{},{},{},{:.6},{:.6}",
                c.outer,
                c.point_index + 1,
                c.point,
                c.precond,
                c.chain_len,
                c.solves,
                c.cg_iterations,
                c.unconverged,
                c.solve_seconds,
                c.precond_seconds
            );
        }
        s
    }

    /// Header: `outer,r,blocks,inner_steps,inner_converged,h2_change,h2_fallback,padded,points,selected,setup_seconds,solve_seconds,projection_seconds`.
    pub fn outer_csv(&self) -> String {
        let mut s = String::from(
            "outer,r,blocks,inner_steps,inner_converged,h2_change,h2_fallback,padded,points,selected,setup_seconds,solve_seconds,projection_seconds\n",
        );
        for o in &self.outer {
            let selected: Vec<String> = o.steps.iter().map(|st| (st.selected + 1).to_string()).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6}",
                o.outer,
                o.r,
                o.blocks,
                o.steps.len(),
                o.inner_converged,
                o.h2_change.map_or("".to_string(), |v| format!("{v:.6e}")),
                o.h2_fallback,
                o.padded,
                join(&o.points),
                selected.join(";"),
                o.setup_seconds,
                o.solve_seconds,
                o.projection_seconds
            );
        }
        s
    }

    /// Header: `outer,step,selected,errors`, one row per inner step.
    pub fn moment_errors_csv(&self) -> String {
        let mut s = String::from("outer,step,selected,intermediate_change,errors\n");
        for o in &self.outer {
            for (k, st) in o.steps.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    o.outer,
                    k + 1,
                    st.selected + 1,
                    st.intermediate_change.map_or("".to_string(), |v| format!("{v:.6e}")),
                    st.moment_errors
                        .iter()
                        .map(|e| format!("{e:.6e}"))
                        .collect::<Vec<_>>()
                        .join(";")
                );
            }
        }
        s
    }

    /// Precondition-build seconds summed over outer iterations `>= from`.
    pub fn precond_seconds_from(&self, from: usize) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.outer >= from)
            .map(|c| c.precond_seconds)
            .sum()
    }

    pub fn solve_seconds_from(&self, from: usize) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.outer >= from)
            .map(|c| c.solve_seconds)
            .sum()
    }

    pub fn cg_iterations(&self) -> usize {
        self.cells.iter().map(|c| c.cg_iterations).sum()
    }

    /// Plain-text summary without wall-clock figures.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "solver: {}", self.solver.name());
        let _ = writeln!(s, "n: {}", self.n);
        let _ = writeln!(s, "inputs: {}", self.inputs);
        let _ = writeln!(s, "outer iterations: {}", self.outer.len());
        let _ = writeln!(s, "converged: {}", self.converged);
        let _ = writeln!(s, "final r: {}", self.final_r());
        let _ = writeln!(s, "total cg iterations: {}", self.cg_iterations());
        let unconverged: usize = self.cells.iter().map(|c| c.unconverged).sum();
        let _ = writeln!(s, "unconverged cg solves: {unconverged}");
        for o in &self.outer {
            let _ = writeln!(
                s,
                "outer {}: r={} blocks={} points=[{}]{} change={}",
                o.outer,
                o.r,
                o.blocks,
                o.points
                    .iter()
                    .map(|p| format!("{p:.6e}"))
                    .collect::<Vec<_>>()
                    .join(", "),
                if o.padded { " (padded)" } else { "" },
                o.h2_change.map_or("-".to_string(), |v| format!("{v:.3e}"))
            );
        }
        s
    }
}
