//! Post-hoc stability analysis of inexact runs: the residual ledger, the
//! backward perturbation `Z` with `Z·𝐗 = −η`, and the perturbation bounds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::airga::{RunTrace, SolverKind};
use crate::eigen::eigenvalues;
use crate::error::{Error, Result};
use crate::h2::{h2_quadrature, log_grid, QuadOptions};
use crate::linalg::{norm2, thin_qr, DenseMatrix, Lu};
use crate::model_io::{read_manifest, read_mm, write_manifest, write_mm};
use crate::linalg::SparseMatrix;
use crate::system::SecondOrderSystem;

/// Dense `n × n` objects are only formed up to this size by default.
pub const DEFAULT_MAX_DIM: usize = 500;
pub const POWER_ITERATIONS: usize = 30;

/// The bound factors only need a few digits.
fn quad_options() -> QuadOptions {
    QuadOptions {
        rtol: 1e-4,
        ..QuadOptions::default()
    }
}

/// Solve/residual pairs behind the selected basis blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualLedger {
    pub solver: SolverKind,
    /// `(j, X⁽ʲ⁾(s_{t_j}))`, raw solutions.
    pub moment_blocks: Vec<(usize, DenseMatrix)>,
    /// `(j, η_{j t_j})` with `𝒦·X = B + η`.
    pub residual_blocks: Vec<(usize, DenseMatrix)>,
    pub selected_points: Vec<f64>,
    /// `‖B‖_F` of each recorded solve.
    pub rhs_norms: Vec<f64>,
    /// Unit-norm `Ṽ₁ … Ṽ_J`.
    pub basis_blocks: Vec<DenseMatrix>,
}

/// Extracts the ledger of the last outer iteration. Direct runs carry none.
pub fn build_ledger(trace: &RunTrace) -> Result<ResidualLedger> {
    if !trace.solver.is_iterative() {
        return Err(Error::EmptyLedger(format!(
            "the run used the {} solver; residual ledgers come from CG runs",
            trace.solver.name()
        )));
    }
    if trace.ledger.is_empty() {
        return Err(Error::EmptyLedger("trace holds no recorded solves".into()));
    }
    Ok(ResidualLedger {
        solver: trace.solver,
        moment_blocks: trace.ledger.iter().enumerate().map(|(j, e)| (j, e.x.clone())).collect(),
        residual_blocks: trace
            .ledger
            .iter()
            .enumerate()
            .map(|(j, e)| (j, e.eta.clone()))
            .collect(),
        selected_points: trace.ledger.iter().map(|e| e.point).collect(),
        rhs_norms: trace.ledger.iter().map(|e| e.rhs_norm).collect(),
        basis_blocks: trace.basis_blocks.clone(),
    })
}

impl ResidualLedger {
    pub fn len(&self) -> usize {
        self.moment_blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moment_blocks.is_empty()
    }

    pub fn n(&self) -> usize {
        self.moment_blocks.first().map_or(0, |b| b.1.nrows())
    }

    /// `𝐗 = [X⁽⁰⁾ … X⁽ᴶ⁻¹⁾]`.
    pub fn stacked_x(&self) -> Result<DenseMatrix> {
        let refs: Vec<&DenseMatrix> = self.moment_blocks.iter().map(|b| &b.1).collect();
        DenseMatrix::hstack(&refs)
    }

    /// `η = [η₀ … η_{J−1}]`.
    pub fn stacked_eta(&self) -> Result<DenseMatrix> {
        let refs: Vec<&DenseMatrix> = self.residual_blocks.iter().map(|b| &b.1).collect();
        DenseMatrix::hstack(&refs)
    }

    /// Writes `X.mtx`, `eta.mtx`, `V.mtx` (stacked blocks) and a manifest.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        write_mm(&dir.join("X.mtx"), &SparseMatrix::from_dense(&self.stacked_x()?))?;
        write_mm(&dir.join("eta.mtx"), &SparseMatrix::from_dense(&self.stacked_eta()?))?;
        let refs: Vec<&DenseMatrix> = self.basis_blocks.iter().collect();
        if !refs.is_empty() {
            write_mm(&dir.join("V.mtx"), &SparseMatrix::from_dense(&DenseMatrix::hstack(&refs)?))?;
        }
        let mut man = BTreeMap::new();
        man.insert("solver".to_string(), self.solver.name().to_string());
        man.insert("blocks".to_string(), self.len().to_string());
        man.insert(
            "block_width".to_string(),
            self.moment_blocks.first().map_or(0, |b| b.1.ncols()).to_string(),
        );
        man.insert("points".to_string(), join(&self.selected_points));
        man.insert("rhs_norms".to_string(), join(&self.rhs_norms));
        write_manifest(&dir.join("ledger.txt"), &man)
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mpath = dir.join("ledger.txt");
        if !mpath.is_file() {
            return Err(Error::EmptyLedger(format!(
                "{} has no ledger.txt (direct-solver runs record none)",
                dir.display()
            )));
        }
        let man = read_manifest(&mpath)?;
        let bad = |k: &str| Error::Parse {
            path: mpath.clone(),
            line: 0,
            message: format!("missing or malformed '{k}'"),
        };
        let solver: SolverKind = man
            .get("solver")
            .ok_or_else(|| bad("solver"))?
            .parse()?;
        let blocks: usize = man
            .get("blocks")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("blocks"))?;
        let width: usize = man
            .get("block_width")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("block_width"))?;
        let list = |key: &str| -> Result<Vec<f64>> {
            match man.get(key).map(String::as_str) {
                None | Some("") => Ok(Vec::new()),
                Some(p) => p
                    .split(';')
                    .map(|t| t.parse().map_err(|_| bad(key)))
                    .collect(),
            }
        };
        let points = list("points")?;
        let rhs_norms = list("rhs_norms")?;
        let x = read_mm(&dir.join("X.mtx"))?.to_dense();
        let eta = read_mm(&dir.join("eta.mtx"))?.to_dense();
        if x.ncols() != blocks * width || eta.shape() != x.shape() || points.len() != blocks
            || rhs_norms.len() != blocks
        {
            return Err(Error::Validation(format!(
                "ledger shapes disagree with manifest ({blocks} blocks of width {width})"
            )));
        }
        let split = |a: &DenseMatrix| -> Vec<DenseMatrix> {
            (0..blocks)
                .map(|j| a.block(0, j * width, a.nrows(), width))
                .collect()
        };
        let vpath = dir.join("V.mtx");
        let basis_blocks = if vpath.is_file() {
            split(&read_mm(&vpath)?.to_dense())
        } else {
            Vec::new()
        };
        Ok(Self {
            solver,
            moment_blocks: split(&x).into_iter().enumerate().collect(),
            residual_blocks: split(&eta).into_iter().enumerate().collect(),
            selected_points: points,
            rhs_norms,
            basis_blocks,
        })
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|p| format!("{p:.17e}"))
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZConstruction {
    /// `−η𝐗ᵀ(𝐗𝐗ᵀ)⁻¹`; singular whenever `mJ < n`, so never produced.
    RowGramInverse,
    /// `−η𝐗⁺` from a thin QR of `𝐗`.
    MinNormPseudoinverse,
}

#[derive(Clone, Debug)]
pub struct PerturbationEstimate {
    pub z: DenseMatrix,
    /// Power-iteration estimate of `‖Z‖₂`.
    pub z_norm: f64,
    /// `‖Z‖₂` from the small Gram matrix of the factor `η·R⁻¹`.
    pub z_norm_exact: f64,
    pub construction: ZConstruction,
    /// `‖Z𝐗 + η‖_F / ‖η‖_F` (0 when `η = 0`).
    pub defining_residual: f64,
}

impl PerturbationEstimate {
    /// The larger of the two norm figures; power iteration alone only bounds from below.
    pub fn norm_bound(&self) -> f64 {
        self.z_norm.max(self.z_norm_exact)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            z: self.z.scaled(a),
            z_norm: self.z_norm * a.abs(),
            z_norm_exact: self.z_norm_exact * a.abs(),
            construction: self.construction,
            defining_residual: self.defining_residual,
        }
    }

    /// Wraps an explicit matrix, e.g. a synthetic perturbation.
    pub fn from_matrix(z: DenseMatrix, seed: u64) -> Self {
        let z_norm = power_norm(&z, POWER_ITERATIONS, seed);
        Self {
            z_norm_exact: z_norm,
            z,
            z_norm,
            construction: ZConstruction::MinNormPseudoinverse,
            defining_residual: 0.0,
        }
    }
}

/// `‖Z‖₂` by power iteration on `ZᵀZ` from a seeded Gaussian start.
pub fn power_norm(z: &DenseMatrix, iterations: usize, seed: u64) -> f64 {
    let n = z.ncols();
    if n == 0 || z.frob_norm() == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut est = 0.0;
    for _ in 0..iterations {
        let nv = norm2(&v);
        if nv == 0.0 {
            break;
        }
        for x in &mut v {
            *x /= nv;
        }
        let w = z.matvec(&v).expect("square");
        est = norm2(&w);
        v = z.transpose().matvec(&w).expect("square");
    }
    est
}

/// `Z = −η·𝐗⁺` with `𝐗 = QR`, i.e. `Z = −(η R⁻¹) Qᵀ`.
pub fn compute_z(ledger: &ResidualLedger, seed: u64, max_dim: usize) -> Result<PerturbationEstimate> {
    let x = ledger.stacked_x()?;
    let eta = ledger.stacked_eta()?;
    let (n, k) = x.shape();
    if eta.shape() != (n, k) {
        return Err(Error::dim("compute_z", format!("{:?}", x.shape()), format!("{:?}", eta.shape())));
    }
    if n > max_dim {
        return Err(Error::Precondition(format!(
            "Z is n x n; n = {n} exceeds the desk-scale limit {max_dim}"
        )));
    }
    if k >= n {
        return Err(Error::Precondition(format!(
            "need mJ < n for an under-determined system, got mJ = {k}, n = {n}"
        )));
    }
    let qr = thin_qr(&x)?;
    if !qr.deficient.is_empty() {
        return Err(Error::RankDeficient {
            columns: qr.deficient.clone(),
        });
    }
    // Y·R = η, row by row: Rᵀ yᵢ = ηᵢ.
    let r = &qr.r;
    let mut y = DenseMatrix::zeros(n, k);
    for i in 0..n {
        for c in 0..k {
            let mut s = eta[(i, c)];
            for p in 0..c {
                s -= r[(p, c)] * y[(i, p)];
            }
            y[(i, c)] = s / r[(c, c)];
        }
    }
    let z = y.matmul(&qr.q.transpose())?.scaled(-1.0);
    let gram = y.t_matmul(&y)?;
    let lmax = eigenvalues(&gram)?
        .iter()
        .map(|l| l.re)
        .fold(0.0, f64::max);
    let eta_norm = eta.frob_norm();
    let mut check = z.matmul(&x)?;
    check.axpy(1.0, &eta)?;
    Ok(PerturbationEstimate {
        z_norm: power_norm(&z, POWER_ITERATIONS, seed),
        z_norm_exact: lmax.max(0.0).sqrt(),
        z,
        construction: ZConstruction::MinNormPseudoinverse,
        defining_residual: if eta_norm > 0.0 {
            check.frob_norm() / eta_norm
        } else {
            check.frob_norm()
        },
    })
}

/// Block inner products between basis blocks and ledger residuals.
#[derive(Clone, Debug)]
pub struct OrthogonalityReport {
    /// `raw[(t, j)] = trace(Ṽₜᵀ η_j)`.
    pub raw: DenseMatrix,
    /// `trace(X_jᵀ η_j) / (‖X_j‖_F ‖η_j‖_F)`: the solution-space product a
    /// Galerkin solver drives to zero.
    pub solution_space: Vec<f64>,
    pub eta_norms: Vec<f64>,
    /// `‖η_j‖ ≤ ROUNDOFF_FLOOR·‖B_j‖`: the solve was exact to rounding (CG
    /// hit an invariant subspace) and the residual direction is noise.
    pub at_roundoff: Vec<bool>,
}

/// Residuals this far below the right-hand side carry no direction.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

impl OrthogonalityReport {
    /// Largest `|⟨Ṽ_{j+1}, η_j⟩| / ‖η_j‖`, pairing each basis block with the
    /// residual of the solve that produced it (`raw[(j, j)]` in 0-based
    /// storage). Deflation mixes earlier blocks into `Ṽ_{j+1}`, so this is
    /// only small when those blocks lie in the solve's Krylov space.
    pub fn max_matched(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.raw.ncols().min(self.raw.nrows()) {
            if self.eta_norms[j] > 0.0 && !self.at_roundoff[j] {
                worst = worst.max(self.raw[(j, j)].abs() / self.eta_norms[j]);
            }
        }
        worst
    }

    pub fn max_solution_space(&self) -> f64 {
        self.solution_space
            .iter()
            .zip(&self.at_roundoff)
            .filter(|(_, r)| !**r)
            .fold(0.0, |a, (b, _)| a.max(b.abs()))
    }
}

pub fn check_galerkin_orthogonality(
    basis_blocks: &[DenseMatrix],
    ledger: &ResidualLedger,
) -> Result<OrthogonalityReport> {
    let j = ledger.len();
    let mut raw = DenseMatrix::zeros(basis_blocks.len(), j);
    for (t, v) in basis_blocks.iter().enumerate() {
        for (c, (_, eta)) in ledger.residual_blocks.iter().enumerate() {
            raw[(t, c)] = v.trace_inner(eta)?;
        }
    }
    let mut solution_space = Vec::with_capacity(j);
    let mut eta_norms = Vec::with_capacity(j);
    let mut at_roundoff = Vec::with_capacity(j);
    for (c, ((_, x), (_, eta))) in ledger.moment_blocks.iter().zip(&ledger.residual_blocks).enumerate() {
        let (nx, ne) = (x.frob_norm(), eta.frob_norm());
        eta_norms.push(ne);
        at_roundoff.push(ledger.rhs_norms.get(c).is_some_and(|b| ne <= ROUNDOFF_FLOOR * b));
        solution_space.push(if nx > 0.0 && ne > 0.0 {
            x.trace_inner(eta)? / (nx * ne)
        } else {
            0.0
        });
    }
    Ok(OrthogonalityReport {
        raw,
        solution_space,
        eta_norms,
        at_roundoff,
    })
}

/// Frequencies for the `H∞` factors.
#[derive(Clone, Debug)]
pub struct FrequencyGrid {
    pub omegas: Vec<f64>,
    /// Golden-section steps spent around the grid maximum.
    pub refine_steps: usize,
}

impl Default for FrequencyGrid {
    /// `ω = 0` plus 200 log-spaced points on `[10⁻², 10⁴]`.
    fn default() -> Self {
        let mut omegas = vec![0.0];
        omegas.extend((0..200).map(|i| 10f64.powf(-2.0 + 6.0 * i as f64 / 199.0)));
        Self {
            omegas,
            refine_steps: 40,
        }
    }
}

impl FrequencyGrid {
    pub fn new(omegas: Vec<f64>) -> Result<Self> {
        if omegas.is_empty() || omegas.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Argument("frequency grid must be nonempty, finite and >= 0".into()));
        }
        let mut omegas = omegas;
        omegas.sort_by(f64::total_cmp);
        omegas.dedup();
        Ok(Self {
            omegas,
            refine_steps: 40,
        })
    }

    /// Max of `f` over the grid, then a golden-section search between the
    /// neighbours of the best node. Returns `(value, ω)`.
    pub fn maximize<F>(&self, f: F) -> Result<(f64, f64)>
    where
        F: Fn(f64) -> Result<f64> + Sync,
    {
        let vals: Vec<f64> = self.omegas.par_iter().map(|&w| f(w)).collect::<Result<_>>()?;
        let mut k = 0;
        for i in 1..vals.len() {
            if vals[i] > vals[k] {
                k = i;
            }
        }
        let (mut best, mut arg) = (vals[k], self.omegas[k]);
        if !best.is_finite() || self.omegas.len() < 2 || self.refine_steps == 0 {
            return Ok((best, arg));
        }
        let mut a = self.omegas[k.saturating_sub(1)];
        let mut b = self.omegas[(k + 1).min(self.omegas.len() - 1)];
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (f(c)?, f(d)?);
        for _ in 0..self.refine_steps {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = f(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = f(d)?;
            }
        }
        for (v, w) in [(fc, c), (fd, d)] {
            if v > best {
                best = v;
                arg = w;
            }
        }
        Ok((best, arg))
    }

    /// Quadrature breakpoints: the grid's positive nodes.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut bp: Vec<f64> = self.omegas.iter().copied().filter(|w| *w > 0.0).collect();
        if bp.is_empty() {
            bp = log_grid(1e-2, 1e4, 8);
        }
        bp
    }
}

fn dense_pencil(sys: &SecondOrderSystem, omega: f64, z: Option<&DenseMatrix>) -> Result<Lu<Complex64>> {
    let n = sys.n();
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    for (mat, c) in [
        (&sys.m, Complex64::new(-omega * omega, 0.0)),
        (&sys.d, Complex64::new(0.0, omega)),
        (&sys.k, Complex64::new(1.0, 0.0)),
    ] {
        for i in 0..n {
            let (cols, vals) = mat.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                a[j * n + i] += c * v;
            }
        }
    }
    if let Some(z) = z {
        for j in 0..n {
            for i in 0..n {
                a[j * n + i] += Complex64::new(z[(i, j)], 0.0);
            }
        }
    }
    Lu::new(n, a)
}

fn cnorm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn guard(sys: &SecondOrderSystem, max_dim: usize) -> Result<()> {
    if sys.n() > max_dim {
        return Err(Error::Precondition(format!(
            "dense frequency sweeps are limited to n <= {max_dim}, got {}",
            sys.n()
        )));
    }
    Ok(())
}

/// `σ_max(𝒦(iω)⁻¹)` by power iteration on `𝒦⁻ᴴ𝒦⁻¹`; `+∞` when singular.
pub fn inverse_norm_at(sys: &SecondOrderSystem, omega: f64, seed: u64) -> Result<f64> {
    let lu = match dense_pencil(sys, omega, None) {
        Ok(lu) => lu,
        Err(Error::Singular { .. }) => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    let n = sys.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect();
    let mut est = 0.0;
    for _ in 0..300 {
        let nv = cnorm(&v);
        for x in &mut v {
            *x /= nv;
        }
        lu.solve_in_place(&mut v);
        let next = cnorm(&v);
        lu.solve_adjoint_in_place(&mut v);
        if !next.is_finite() {
            return Ok(f64::INFINITY);
        }
        if (next - est).abs() <= 1e-12 * next {
            est = next;
            break;
        }
        est = next;
    }
    Ok(est)
}

/// Largest singular value of the complex `n × m` block by power iteration
/// on its `m × m` Gram matrix.
fn block_spectral_norm(cols: &[Vec<Complex64>]) -> f64 {
    let m = cols.len();
    if m == 1 {
        return cnorm(&cols[0]);
    }
    let mut g = vec![Complex64::new(0.0, 0.0); m * m];
    for a in 0..m {
        for b in 0..m {
            g[a * m + b] = cols[a].iter().zip(&cols[b]).map(|(x, y)| x.conj() * y).sum();
        }
    }
    let mut v = vec![Complex64::new(1.0, 0.0); m];
    let mut lam = 0.0;
    for _ in 0..200 {
        let mut w = vec![Complex64::new(0.0, 0.0); m];
        for a in 0..m {
            for b in 0..m {
                w[a] += g[a * m + b] * v[b];
            }
        }
        let nw = cnorm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        lam = nw;
        v = w.into_iter().map(|x| x / nw).collect();
    }
    lam.sqrt()
}

/// `‖𝒦(iω)⁻¹‖_{H∞}` over the grid.
pub fn hinf_inverse(sys: &SecondOrderSystem, grid: &FrequencyGrid, seed: u64) -> Result<(f64, f64)> {
    grid.maximize(|w| inverse_norm_at(sys, w, seed))
}

/// `‖𝒦(iω)⁻¹F‖_{H∞}` over the grid.
pub fn hinf_inverse_f(sys: &SecondOrderSystem, grid: &FrequencyGrid) -> Result<(f64, f64)> {
    grid.maximize(|w| {
        let lu = match dense_pencil(sys, w, None) {
            Ok(lu) => lu,
            Err(Error::Singular { .. }) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        };
        let cols: Vec<Vec<Complex64>> = (0..sys.inputs())
            .map(|c| {
                let mut x: Vec<Complex64> = sys.f.col(c).iter().map(|&v| Complex64::new(v, 0.0)).collect();
                lu.solve_in_place(&mut x);
                x
            })
            .collect();
        Ok(block_spectral_norm(&cols))
    })
}

/// `‖C(s)𝒦(s)⁻¹‖_{H₂}` with `C(s) = Cp + s·Cv`, by quadrature.
pub fn h2_c_inverse(sys: &SecondOrderSystem, grid: &FrequencyGrid) -> Result<f64> {
    let q = h2_quadrature(
        |w| {
            let lu = dense_pencil(sys, w, None)?;
            let mut total = 0.0;
            for i in 0..sys.outputs() {
                // Row i of C𝒦⁻¹ is conj(𝒦⁻ᴴ conj(cᵢ)).
                let mut y: Vec<Complex64> = (0..sys.n())
                    .map(|j| Complex64::new(sys.cp[(i, j)], -w * sys.cv[(i, j)]))
                    .collect();
                lu.solve_adjoint_in_place(&mut y);
                total += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
            Ok(total)
        },
        &grid.breakpoints(),
        &quad_options(),
    )?;
    Ok(q.h2)
}

#[derive(Clone, Copy, Debug)]
pub struct Theorem2Check {
    pub hinf_inverse: f64,
    pub peak_omega: f64,
    pub z_norm: f64,
    /// `‖𝒦⁻¹‖_{H∞}·‖Z‖`.
    pub value: f64,
    pub holds: bool,
}

/// Stability condition `‖𝒦⁻¹‖_{H∞}·‖Z‖ < 1`.
pub fn check_theorem2(
    sys: &SecondOrderSystem,
    z: &PerturbationEstimate,
    grid: &FrequencyGrid,
    seed: u64,
    max_dim: usize,
) -> Result<Theorem2Check> {
    guard(sys, max_dim)?;
    let z_norm = z.norm_bound();
    let (hinf, peak) = hinf_inverse(sys, grid, seed)?;
    let value = if z_norm == 0.0 { 0.0 } else { hinf * z_norm };
    Ok(Theorem2Check {
        hinf_inverse: hinf,
        peak_omega: peak,
        z_norm,
        value,
        holds: value < 1.0,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct Theorem1Bound {
    pub h2_c_inverse: f64,
    pub hinf_inverse_f: f64,
    pub hinf_inverse: f64,
    pub z_norm: f64,
    pub bound: f64,
}

/// `‖C𝒦⁻¹‖_{H₂}·‖𝒦⁻¹F‖_{H∞}·‖Z‖ / (1 − ‖𝒦⁻¹‖_{H∞}·‖Z‖)`.
pub fn theorem1_bound(
    sys: &SecondOrderSystem,
    z: &PerturbationEstimate,
    grid: &FrequencyGrid,
    seed: u64,
    max_dim: usize,
) -> Result<Theorem1Bound> {
    guard(sys, max_dim)?;
    let z_norm = z.norm_bound();
    let (hinf, _) = hinf_inverse(sys, grid, seed)?;
    let denom = 1.0 - hinf * z_norm;
    if !(denom > 0.0) {
        return Err(Error::Precondition(format!(
            "‖K⁻¹‖·‖Z‖ = {:.3e} >= 1; the bound needs the stability condition",
            hinf * z_norm
        )));
    }
    if z_norm == 0.0 {
        return Ok(Theorem1Bound {
            h2_c_inverse: f64::NAN,
            hinf_inverse_f: f64::NAN,
            hinf_inverse: hinf,
            z_norm,
            bound: 0.0,
        });
    }
    let h2c = h2_c_inverse(sys, grid)?;
    let (hf, _) = hinf_inverse_f(sys, grid)?;
    Ok(Theorem1Bound {
        h2_c_inverse: h2c,
        hinf_inverse_f: hf,
        hinf_inverse: hinf,
        z_norm,
        bound: h2c * hf * z_norm / denom,
    })
}

/// `‖H − H̃‖_{H₂}` for `H̃ = C(𝒦+Z)⁻¹F`, via the exact identity
/// `H − H̃ = C𝒦⁻¹·Z·(𝒦+Z)⁻¹F` evaluated pointwise.
pub fn measured_perturbation_h2(
    sys: &SecondOrderSystem,
    z: &DenseMatrix,
    grid: &FrequencyGrid,
    max_dim: usize,
) -> Result<f64> {
    guard(sys, max_dim)?;
    let n = sys.n();
    if z.shape() != (n, n) {
        return Err(Error::dim("measured_perturbation_h2", n, format!("{:?}", z.shape())));
    }
    if z.frob_norm() == 0.0 {
        return Ok(0.0);
    }
    let q = h2_quadrature(
        |w| {
            let lu = dense_pencil(sys, w, None)?;
            let lu_z = dense_pencil(sys, w, Some(z))?;
            let mut total = 0.0;
            for c in 0..sys.inputs() {
                let mut x: Vec<Complex64> = sys.f.col(c).iter().map(|&v| Complex64::new(v, 0.0)).collect();
                lu_z.solve_in_place(&mut x);
                let mut zx = vec![Complex64::new(0.0, 0.0); n];
                for (j, xj) in x.iter().enumerate() {
                    for (i, zi) in zx.iter_mut().enumerate() {
                        *zi += z[(i, j)] * xj;
                    }
                }
                lu.solve_in_place(&mut zx);
                for i in 0..sys.outputs() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, v) in zx.iter().enumerate() {
                        acc += Complex64::new(sys.cp[(i, j)], w * sys.cv[(i, j)]) * v;
                    }
                    total += acc.norm_sqr();
                }
            }
            Ok(total)
        },
        &grid.breakpoints(),
        &quad_options(),
    )?;
    Ok(q.h2)
}

/// Full diagnostic bundle for a CG run.
#[derive(Clone, Debug)]
pub struct DiagnosticReport {
    pub seed: u64,
    pub ledger_blocks: usize,
    pub orthogonality: OrthogonalityReport,
    pub z: PerturbationEstimate,
    pub theorem2: Theorem2Check,
    pub theorem1: Option<Theorem1Bound>,
    pub measured: Option<f64>,
}

pub fn diagnose(
    sys: &SecondOrderSystem,
    ledger: &ResidualLedger,
    grid: &FrequencyGrid,
    seed: u64,
    max_dim: usize,
) -> Result<DiagnosticReport> {
    let orthogonality = check_galerkin_orthogonality(&ledger.basis_blocks, ledger)?;
    let z = compute_z(ledger, seed, max_dim)?;
    let theorem2 = check_theorem2(sys, &z, grid, seed, max_dim)?;
    let (theorem1, measured) = if theorem2.holds {
        (
            Some(theorem1_bound(sys, &z, grid, seed, max_dim)?),
            Some(measured_perturbation_h2(sys, &z.z, grid, max_dim)?),
        )
    } else {
        (None, None)
    };
    Ok(DiagnosticReport {
        seed,
        ledger_blocks: ledger.len(),
        orthogonality,
        z,
        theorem2,
        theorem1,
        measured,
    })
}

impl DiagnosticReport {
    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "ledger blocks: {}", self.ledger_blocks);
        let _ = writeln!(
            s,
            "residuals at rounding level: {}",
            self.orthogonality.at_roundoff.iter().filter(|r| **r).count()
        );
        let _ = writeln!(s, "Z construction: min-norm pseudoinverse");
        let _ = writeln!(s, "defining residual |ZX+eta|/|eta|: {:.3e}", self.z.defining_residual);
        let _ = writeln!(s, "|Z| (power iteration): {:.6e}", self.z.z_norm);
        let _ = writeln!(s, "|Z| (gram): {:.6e}", self.z.z_norm_exact);
        let _ = writeln!(
            s,
            "max |<V~_(j+1), eta_j>|/|eta_j|: {:.3e}",
            self.orthogonality.max_matched()
        );
        let _ = writeln!(
            s,
            "max |<X_j, eta_j>|/(|X_j||eta_j|): {:.3e}",
            self.orthogonality.max_solution_space()
        );
        let t2 = &self.theorem2;
        let _ = writeln!(s, "Hinf |K^-1|: {:.6e} at omega {:.6e}", t2.hinf_inverse, t2.peak_omega);
        let _ = writeln!(s, "stability condition value: {:.6e}", t2.value);
        let _ = writeln!(s, "stability verdict: {}", if t2.holds { "holds" } else { "fails" });
        match (&self.theorem1, self.measured) {
            (Some(t1), Some(m)) => {
                let _ = writeln!(s, "perturbation bound: {:.6e}", t1.bound);
                let _ = writeln!(s, "measured |H - H~|_H2: {:.6e}", m);
                let _ = writeln!(s, "bound respected: {}", m <= t1.bound);
            }
            _ => {
                let _ = writeln!(s, "perturbation bound: not applicable");
            }
        }
        s
    }

    /// `t,j,raw` rows of the block-orthogonality matrix.
    pub fn orthogonality_csv(&self) -> String {
        let mut s = String::from("t,j,trace_v_eta,eta_norm,at_roundoff\n");
        let raw = &self.orthogonality.raw;
        for j in 0..raw.ncols() {
            for t in 0..raw.nrows() {
                let _ = writeln!(
                    s,
                    "{},{},{:.6e},{:.6e},{}",
                    t + 1,
                    j,
                    raw[(t, j)],
                    self.orthogonality.eta_norms[j],
                    self.orthogonality.at_roundoff[j]
                );
            }
        }
        s
    }

    pub fn conditions_csv(&self) -> String {
        let mut s = String::from("quantity,value\n");
        let _ = writeln!(s, "z_norm,{:.6e}", self.z.z_norm);
        let _ = writeln!(s, "z_norm_gram,{:.6e}", self.z.z_norm_exact);
        let _ = writeln!(s, "defining_residual,{:.6e}", self.z.defining_residual);
        let _ = writeln!(s, "hinf_inverse,{:.6e}", self.theorem2.hinf_inverse);
        let _ = writeln!(s, "condition_value,{:.6e}", self.theorem2.value);
        let _ = writeln!(s, "holds,{}", self.theorem2.holds);
        if let (Some(t1), Some(m)) = (&self.theorem1, self.measured) {
            let _ = writeln!(s, "h2_c_inverse,{:.6e}", t1.h2_c_inverse);
            let _ = writeln!(s, "hinf_inverse_f,{:.6e}", t1.hinf_inverse_f);
            let _ = writeln!(s, "bound,{:.6e}", t1.bound);
            let _ = writeln!(s, "measured,{:.6e}", m);
        }
        s
    }
}
