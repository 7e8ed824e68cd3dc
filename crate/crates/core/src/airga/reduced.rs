//! Galerkin projection, reduced transfer functions, H₂ distances and
//! expansion-point refresh.

use num_complex::Complex64;

use crate::airga::{ExpansionPointSet, H2Method, OrthonormalBasis, PointOrigin};
use crate::eigen::quad_eig;
use crate::error::{Error, Result};
use crate::h2::{first_order, h2_quadrature, log_grid, FirstOrder, QuadOptions};
use crate::linalg::{DenseMatrix, Lu, SparseMatrix};
use crate::system::SecondOrderSystem;

/// Relative gap below which two candidate points count as one.
pub const POINT_DEDUP_RTOL: f64 = 1e-8;

/// Projected matrices `M̂ = VᵀMV`, `D̂`, `K̂`, `F̂ = VᵀF`, `Ĉp = CpV`, `Ĉv = CvV`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedSystem {
    pub mh: DenseMatrix,
    pub dh: DenseMatrix,
    pub kh: DenseMatrix,
    pub fh: DenseMatrix,
    pub cph: DenseMatrix,
    pub cvh: DenseMatrix,
    pub alpha: f64,
    pub beta: f64,
    pub basis: Option<OrthonormalBasis>,
}

fn congruence(a: &SparseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    v.t_matmul(&a.mul_dense(v)?)
}

/// Galerkin projection onto `basis.assembled`.
pub fn project_reduce(sys: &SecondOrderSystem, basis: &OrthonormalBasis) -> Result<ReducedSystem> {
    let v = &basis.assembled;
    if v.nrows() != sys.n() {
        return Err(Error::dim("project_reduce", sys.n(), v.nrows()));
    }
    Ok(ReducedSystem {
        mh: congruence(&sys.m, v)?,
        dh: congruence(&sys.d, v)?,
        kh: congruence(&sys.k, v)?,
        fh: v.t_matmul(&sys.f)?,
        cph: sys.cp.matmul(v)?,
        cvh: sys.cv.matmul(v)?,
        alpha: sys.alpha,
        beta: sys.beta,
        basis: Some(basis.clone()),
    })
}

impl ReducedSystem {
    /// Dense copy of a full model (no basis); useful at desk scale.
    pub fn from_full(sys: &SecondOrderSystem) -> Self {
        Self {
            mh: sys.m.to_dense(),
            dh: sys.d.to_dense(),
            kh: sys.k.to_dense(),
            fh: sys.f.clone(),
            cph: sys.cp.clone(),
            cvh: sys.cv.clone(),
            alpha: sys.alpha,
            beta: sys.beta,
            basis: None,
        }
    }

    pub fn r(&self) -> usize {
        self.mh.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.fh.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.cph.nrows()
    }

    /// `‖D̂ − αM̂ − βK̂‖_F / ‖D̂‖_F`.
    pub fn damping_defect(&self) -> f64 {
        let rebuilt = self
            .mh
            .add_scaled(&self.kh, self.alpha, self.beta)
            .expect("reduced matrices share a shape");
        let diff = self.dh.sub(&rebuilt).expect("same shape").frob_norm();
        let scale = self.dh.frob_norm();
        if scale > 0.0 {
            diff / scale
        } else {
            diff
        }
    }

    pub fn first_order(&self) -> Result<FirstOrder> {
        first_order(&self.mh, &self.dh, &self.kh, &self.fh, &self.cph, &self.cvh)
    }

    /// Quadratic eigenvalues of `λ²M̂ + λD̂ + K̂`.
    pub fn poles(&self) -> Result<Vec<Complex64>> {
        Ok(quad_eig(&self.mh, &self.dh, &self.kh)?.eigenvalues)
    }

    /// `Ĥ(iω)` as a column-major `q × m` array.
    pub fn response(&self, omega: f64) -> Result<Vec<Complex64>> {
        let r = self.r();
        let mut a = Vec::with_capacity(r * r);
        for j in 0..r {
            for i in 0..r {
                a.push(Complex64::new(
                    self.kh[(i, j)] - omega * omega * self.mh[(i, j)],
                    omega * self.dh[(i, j)],
                ));
            }
        }
        let lu = Lu::new(r, a)?;
        let q = self.outputs();
        let mut out = vec![Complex64::new(0.0, 0.0); q * self.inputs()];
        let mut x = vec![Complex64::new(0.0, 0.0); r];
        for c in 0..self.inputs() {
            for (xi, &fi) in x.iter_mut().zip(self.fh.col(c)) {
                *xi = Complex64::new(fi, 0.0);
            }
            lu.solve_in_place(&mut x);
            for i in 0..q {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, xj) in x.iter().enumerate() {
                    acc += Complex64::new(self.cph[(i, j)], omega * self.cvh[(i, j)]) * xj;
                }
                out[c * q + i] = acc;
            }
        }
        Ok(out)
    }

    /// Quadrature breakpoints: the pole moduli and imaginary parts, on top of
    /// a log grid covering them.
    pub fn breakpoints(&self) -> Result<Vec<f64>> {
        let poles = self.poles()?;
        Ok(pole_breakpoints(&poles))
    }
}

pub(crate) fn pole_breakpoints(poles: &[Complex64]) -> Vec<f64> {
    let mut pts: Vec<f64> = Vec::new();
    for p in poles {
        for w in [p.norm(), p.im.abs()] {
            if w.is_finite() && w > 0.0 {
                pts.push(w);
            }
        }
    }
    let lo = pts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pts.iter().copied().fold(0.0, f64::max);
    if lo.is_finite() && hi > 0.0 {
        pts.extend(log_grid(lo * 1e-3, hi * 10.0, 8));
    } else {
        pts.extend(log_grid(1e-3, 1e3, 8));
    }
    pts
}

/// Outcome of an H₂ evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct H2Value {
    pub value: f64,
    pub method: H2Method,
    /// The Lyapunov path hit a non-Hurwitz realization and quadrature was used.
    pub fell_back: bool,
}

fn frob_sq(h: &[Complex64]) -> f64 {
    h.iter().map(|z| z.norm_sqr()).sum()
}

/// `‖Ĥ‖_{H₂}`.
pub fn h2_norm(rs: &ReducedSystem, method: H2Method) -> Result<H2Value> {
    match method {
        H2Method::Lyapunov => match rs.first_order()?.h2_lyapunov() {
            Ok(value) => Ok(H2Value {
                value,
                method,
                fell_back: false,
            }),
            Err(Error::NotHurwitz { .. }) => Ok(H2Value {
                fell_back: true,
                ..h2_norm(rs, H2Method::Quadrature)?
            }),
            Err(e) => Err(e),
        },
        H2Method::Quadrature => {
            let q = h2_quadrature(
                |w| Ok(frob_sq(&rs.response(w)?)),
                &rs.breakpoints()?,
                &QuadOptions::default(),
            )?;
            Ok(H2Value {
                value: q.h2,
                method,
                fell_back: false,
            })
        }
    }
}

/// Integral error floor for `∫‖H_a − H_b‖²` when `‖H_a‖ + ‖H_b‖ = scale`:
/// distances are resolved to about `1e-13·scale`.
fn noise_floor(scale: f64) -> f64 {
    std::f64::consts::PI * (1e-13 * scale).powi(2)
}

/// `‖Ĥ_a − Ĥ_b‖_{H₂}`. The quadrature path differences the responses
/// pointwise and so resolves distances far below `√ε·‖Ĥ‖`.
pub fn h2_distance(a: &ReducedSystem, b: &ReducedSystem, method: H2Method) -> Result<H2Value> {
    if a.inputs() != b.inputs() || a.outputs() != b.outputs() {
        return Err(Error::dim(
            "h2_distance",
            format!("{}x{}", a.outputs(), a.inputs()),
            format!("{}x{}", b.outputs(), b.inputs()),
        ));
    }
    match method {
        H2Method::Lyapunov => {
            let diff = a.first_order()?.difference(&b.first_order()?)?;
            match diff.h2_lyapunov() {
                Ok(value) => Ok(H2Value {
                    value,
                    method,
                    fell_back: false,
                }),
                Err(Error::NotHurwitz { .. }) => Ok(H2Value {
                    fell_back: true,
                    ..h2_distance(a, b, H2Method::Quadrature)?
                }),
                Err(e) => Err(e),
            }
        }
        H2Method::Quadrature => {
            let mut bp = a.breakpoints()?;
            bp.extend(b.breakpoints()?);
            let scale = h2_norm(a, H2Method::Lyapunov)?.value + h2_norm(b, H2Method::Lyapunov)?.value;
            let opts = QuadOptions {
                abs_tol: noise_floor(scale),
                ..QuadOptions::default()
            };
            let q = h2_quadrature(
                |w| {
                    let ha = a.response(w)?;
                    let hb = b.response(w)?;
                    Ok(ha.iter().zip(&hb).map(|(x, y)| (x - y).norm_sqr()).sum())
                },
                &bp,
                &opts,
            )?;
            Ok(H2Value {
                value: q.h2,
                method,
                fell_back: false,
            })
        }
    }
}

/// `‖Ĥ_a − Ĥ_b‖ / ‖Ĥ_a‖`, and whether either evaluation fell back to quadrature.
pub fn relative_h2_distance(
    a: &ReducedSystem,
    b: &ReducedSystem,
    method: H2Method,
) -> Result<(f64, bool)> {
    let d = h2_distance(a, b, method)?;
    let na = h2_norm(a, method)?;
    let rel = if na.value > 0.0 {
        d.value / na.value
    } else if d.value == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok((rel, d.fell_back || na.fell_back))
}

/// `‖H − Ĥ‖_{H₂}` and `‖H‖_{H₂}` for a full model against a reduced one, by
/// quadrature.
pub fn full_error_h2(sys: &SecondOrderSystem, rs: &ReducedSystem) -> Result<(f64, f64)> {
    if sys.inputs() != rs.inputs() || sys.outputs() != rs.outputs() {
        return Err(Error::Validation(format!(
            "full model is {}x{} but reduced model is {}x{}",
            sys.outputs(),
            sys.inputs(),
            rs.outputs(),
            rs.inputs()
        )));
    }
    let mut bp = rs.breakpoints()?;
    let (lo, hi) = sys.frequency_band();
    bp.extend(log_grid(lo, hi, 8));
    let opts = QuadOptions::default();
    let full = h2_quadrature(|w| Ok(frob_sq(&sys.response(w)?)), &bp, &opts)?;
    let err_opts = QuadOptions {
        abs_tol: noise_floor(full.h2 + h2_norm(rs, H2Method::Lyapunov)?.value),
        ..opts
    };
    let err = h2_quadrature(
        |w| {
            let h = sys.response(w)?;
            let hr = rs.response(w)?;
            Ok(h.iter().zip(&hr).map(|(x, y)| (x - y).norm_sqr()).sum())
        },
        &bp,
        &err_opts,
    )?;
    Ok((err.h2, full.h2))
}

/// New points from the reduced quadratic eigenvalues: `|Re λ|`, deduplicated
/// within [`POINT_DEDUP_RTOL`], the `l` smallest strictly positive values.
/// Missing slots are refilled from `previous` and the set is flagged padded.
pub fn refresh_points(
    rs: &ReducedSystem,
    l: usize,
    previous: &ExpansionPointSet,
) -> Result<ExpansionPointSet> {
    if l == 0 {
        return Err(Error::Argument("refresh_points needs l >= 1".into()));
    }
    let poles = rs.poles()?;
    let scale = poles.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let mut cand: Vec<f64> = poles
        .iter()
        .map(|p| p.re.abs())
        .filter(|&x| x.is_finite() && x > POINT_DEDUP_RTOL * scale)
        .collect();
    cand.sort_by(f64::total_cmp);
    let mut uniq: Vec<f64> = Vec::with_capacity(cand.len());
    for x in cand {
        match uniq.last() {
            Some(&last) if (x - last) <= POINT_DEDUP_RTOL * x => {}
            _ => uniq.push(x),
        }
    }
    uniq.truncate(l);
    let padded = uniq.len() < l;
    if padded {
        for &p in previous.points() {
            if uniq.len() == l {
                break;
            }
            if uniq.iter().all(|&u| (u - p).abs() > POINT_DEDUP_RTOL * p.abs().max(u.abs())) {
                uniq.push(p);
            }
        }
        if uniq.len() < l {
            return Err(Error::Argument(format!(
                "only {} distinct expansion points available for {l} slots",
                uniq.len()
            )));
        }
    }
    let mut set = ExpansionPointSet::new(uniq, PointOrigin::QuadEig)?;
    set.padded = padded;
    Ok(set)
}
