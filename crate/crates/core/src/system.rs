//! The full second-order model `M ẍ + D ẋ + K x = F u`, `y = Cp x + Cv ẋ`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{BandedLu, DenseMatrix, SparseMatrix};

/// Relative tolerance for recognising `D = αM + βK`.
pub const PROPORTIONAL_RTOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrderSystem {
    pub m: SparseMatrix,
    pub d: SparseMatrix,
    pub k: SparseMatrix,
    /// `n × m` input matrix.
    pub f: DenseMatrix,
    /// `q × n` position output.
    pub cp: DenseMatrix,
    /// `q × n` velocity output.
    pub cv: DenseMatrix,
    pub alpha: f64,
    pub beta: f64,
    pub proportional: bool,
}

impl SecondOrderSystem {
    /// Validates shapes and finiteness; the proportional flag is set when
    /// `D` equals `αM + βK` to [`PROPORTIONAL_RTOL`].
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: SparseMatrix,
        d: SparseMatrix,
        k: SparseMatrix,
        f: DenseMatrix,
        cp: DenseMatrix,
        cv: Option<DenseMatrix>,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        let n = k.nrows();
        for (name, a) in [("M", &m), ("D", &d), ("K", &k)] {
            if a.shape() != (n, n) {
                return Err(Error::Validation(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if !a.is_finite() {
                return Err(Error::Validation(format!("{name} has non-finite entries")));
            }
        }
        if n == 0 {
            return Err(Error::Validation("empty system".into()));
        }
        if f.nrows() != n || f.ncols() == 0 {
            return Err(Error::Validation(format!(
                "F is {}x{}, expected {n} rows and at least one column",
                f.nrows(),
                f.ncols()
            )));
        }
        if cp.ncols() != n || cp.nrows() == 0 {
            return Err(Error::Validation(format!(
                "Cp is {}x{}, expected {n} columns and at least one row",
                cp.nrows(),
                cp.ncols()
            )));
        }
        let cv = cv.unwrap_or_else(|| DenseMatrix::zeros(cp.nrows(), n));
        if cv.shape() != cp.shape() {
            return Err(Error::Validation(format!(
                "Cv is {}x{}, Cp is {}x{}",
                cv.nrows(),
                cv.ncols(),
                cp.nrows(),
                cp.ncols()
            )));
        }
        if !(f.is_finite() && cp.is_finite() && cv.is_finite()) {
            return Err(Error::Validation("input/output matrices have non-finite entries".into()));
        }
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Validation("damping coefficients must be finite".into()));
        }
        let mut sys = Self {
            m,
            d,
            k,
            f,
            cp,
            cv,
            alpha,
            beta,
            proportional: false,
        };
        sys.proportional = sys.damping_defect()? <= PROPORTIONAL_RTOL;
        Ok(sys)
    }

    /// Builds `D = αM + βK` and sets the proportional flag.
    pub fn proportional(
        m: SparseMatrix,
        k: SparseMatrix,
        f: DenseMatrix,
        cp: DenseMatrix,
        cv: Option<DenseMatrix>,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        if m.shape() != k.shape() {
            return Err(Error::Validation(format!(
                "M is {}x{}, K is {}x{}",
                m.nrows(),
                m.ncols(),
                k.nrows(),
                k.ncols()
            )));
        }
        let d = m.add_scaled(&k, alpha, beta)?;
        Self::new(m, d, k, f, cp, cv, alpha, beta)
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.f.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.cp.nrows()
    }

    /// `‖D − αM − βK‖_F / ‖D‖_F` (absolute when `D = 0`).
    pub fn damping_defect(&self) -> Result<f64> {
        let rebuilt = self.m.add_scaled(&self.k, self.alpha, self.beta)?;
        let diff = self.d.add_scaled(&rebuilt, 1.0, -1.0)?.frob_norm();
        let scale = self.d.frob_norm();
        Ok(if scale > 0.0 { diff / scale } else { diff })
    }

    /// `s²M + sD + K`.
    pub fn shifted(&self, s: f64) -> Result<SparseMatrix> {
        self.m
            .add_scaled(&self.d, s * s, s)?
            .add_scaled(&self.k, 1.0, 1.0)
    }

    /// Factorization of `𝒦(iω) = K − ω²M + iωD`.
    pub fn factor_at(&self, omega: f64) -> Result<BandedLu<Complex64>> {
        BandedLu::from_combination(&[
            (Complex64::new(-omega * omega, 0.0), &self.m),
            (Complex64::new(0.0, omega), &self.d),
            (Complex64::new(1.0, 0.0), &self.k),
        ])
    }

    /// `H(iω) = (Cp + iω·Cv)·𝒦(iω)⁻¹·F` as a column-major `q × m` array.
    pub fn response(&self, omega: f64) -> Result<Vec<Complex64>> {
        let lu = self.factor_at(omega)?;
        let n = self.n();
        let q = self.outputs();
        let mut out = vec![Complex64::new(0.0, 0.0); q * self.inputs()];
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..self.inputs() {
            for (xi, &fi) in x.iter_mut().zip(self.f.col(c)) {
                *xi = Complex64::new(fi, 0.0);
            }
            lu.solve_in_place(&mut x);
            for i in 0..q {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, xj) in x.iter().enumerate() {
                    let w = Complex64::new(self.cp[(i, j)], omega * self.cv[(i, j)]);
                    acc += w * xj;
                }
                out[c * q + i] = acc;
            }
        }
        Ok(out)
    }

    /// Rough frequency band `(lo, hi)` of the undamped modes, from Gershgorin
    /// bounds on `K` and the diagonal of `M`.
    pub fn frequency_band(&self) -> (f64, f64) {
        let n = self.n();
        let mut kmax = 0.0f64;
        let mut mmin = f64::INFINITY;
        let mut kmin_diag = f64::INFINITY;
        let mut mmax = 0.0f64;
        for i in 0..n {
            let (_, vals) = self.k.row(i);
            kmax = kmax.max(vals.iter().map(|v| v.abs()).sum());
            kmin_diag = kmin_diag.min(self.k.get(i, i).abs());
            let (_, mv) = self.m.row(i);
            let msum: f64 = mv.iter().map(|v| v.abs()).sum();
            mmax = mmax.max(msum);
            let md = self.m.get(i, i).abs();
            if md > 0.0 {
                mmin = mmin.min(md);
            }
        }
        let hi = if mmin.is_finite() && mmin > 0.0 {
            (kmax / mmin).sqrt()
        } else {
            1.0
        };
        // Lowest modes of a long chain sit far below the diagonal scale.
        let lo = if mmax > 0.0 {
            ((kmin_diag / mmax).sqrt() / (n as f64)).min(hi * 1e-3)
        } else {
            hi * 1e-6
        };
        (lo.max(hi * 1e-8), hi.max(lo))
    }
}
