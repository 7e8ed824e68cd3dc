//! H₂ norms: exact via a Lyapunov equation on the first-order realization,
//! or by adaptive quadrature of `‖H(iω)‖_F²` along the imaginary axis.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::eigen::lyap_solve;
use crate::error::{Error, Result};
use crate::linalg::{dense_solve, DenseMatrix};

/// `ẋ = A x + B u`, `y = C x`.
#[derive(Clone, Debug)]
pub struct FirstOrder {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub c: DenseMatrix,
}

/// Realizes `(s²M̂ + sD̂ + K̂)⁻¹` with state `[x; ẋ]`:
/// `A = [[0, I], [−M̂⁻¹K̂, −M̂⁻¹D̂]]`, `B = [0; M̂⁻¹F̂]`, `C = [Ĉp, Ĉv]`.
pub fn first_order(
    mh: &DenseMatrix,
    dh: &DenseMatrix,
    kh: &DenseMatrix,
    fh: &DenseMatrix,
    cph: &DenseMatrix,
    cvh: &DenseMatrix,
) -> Result<FirstOrder> {
    let r = mh.nrows();
    let m = fh.ncols();
    let q = cph.nrows();
    let mut a = DenseMatrix::zeros(2 * r, 2 * r);
    a.set_block(0, r, &DenseMatrix::identity(r));
    a.set_block(r, 0, &dense_solve(mh, kh)?.scaled(-1.0));
    a.set_block(r, r, &dense_solve(mh, dh)?.scaled(-1.0));
    let mut b = DenseMatrix::zeros(2 * r, m);
    b.set_block(r, 0, &dense_solve(mh, fh)?);
    let mut c = DenseMatrix::zeros(q, 2 * r);
    c.set_block(0, 0, cph);
    c.set_block(0, r, cvh);
    Ok(FirstOrder { a, b, c })
}

impl FirstOrder {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Realization of `H_self − H_other`: block-diagonal `A`, stacked `B`, `C = [C₁, −C₂]`.
    pub fn difference(&self, other: &FirstOrder) -> Result<FirstOrder> {
        if self.b.ncols() != other.b.ncols() || self.c.nrows() != other.c.nrows() {
            return Err(Error::dim(
                "FirstOrder::difference",
                format!("{} inputs / {} outputs", self.b.ncols(), self.c.nrows()),
                format!("{} inputs / {} outputs", other.b.ncols(), other.c.nrows()),
            ));
        }
        let (n1, n2) = (self.order(), other.order());
        let mut a = DenseMatrix::zeros(n1 + n2, n1 + n2);
        a.set_block(0, 0, &self.a);
        a.set_block(n1, n1, &other.a);
        let mut b = DenseMatrix::zeros(n1 + n2, self.b.ncols());
        b.set_block(0, 0, &self.b);
        b.set_block(n1, 0, &other.b);
        let mut c = DenseMatrix::zeros(self.c.nrows(), n1 + n2);
        c.set_block(0, 0, &self.c);
        c.set_block(0, n1, &other.c.scaled(-1.0));
        Ok(FirstOrder { a, b, c })
    }

    /// `sqrt(trace(C P Cᵀ))` with `A P + P Aᵀ + B Bᵀ = 0`.
    pub fn h2_lyapunov(&self) -> Result<f64> {
        let bbt = self.b.matmul(&self.b.transpose())?;
        let p = lyap_solve(&self.a, &bbt)?;
        let cp = self.c.matmul(&p)?;
        let mut tr = 0.0;
        for i in 0..self.c.nrows() {
            for k in 0..self.c.ncols() {
                tr += cp[(i, k)] * self.c[(i, k)];
            }
        }
        if !tr.is_finite() {
            return Err(Error::NonFinite("H2 Gramian trace"));
        }
        Ok(tr.max(0.0).sqrt())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    /// Local error target for each refined interval, relative to the running integral.
    pub rtol: f64,
    /// The upper limit doubles until the last added piece is below this fraction.
    pub tail_rtol: f64,
    pub min_depth: usize,
    pub max_depth: usize,
    pub max_doublings: usize,
    /// Absolute floor on the integral error. Differences of nearly equal
    /// responses are noise below some level, and a purely relative target
    /// would bisect that noise down to `max_depth`.
    pub abs_tol: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            tail_rtol: 1e-4,
            min_depth: 2,
            max_depth: 40,
            max_doublings: 80,
            abs_tol: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    /// `sqrt((1/π)·∫₀^ω_max f)`.
    pub h2: f64,
    pub integral: f64,
    pub omega_max: f64,
    pub evaluations: usize,
}

/// `n` points per decade from `lo` to `hi`, both included.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    if !(lo > 0.0 && hi > lo) {
        return vec![lo.max(hi)];
    }
    let decades = (hi / lo).log10();
    let k = ((decades * per_decade as f64).ceil() as usize).max(1);
    (0..=k)
        .map(|i| lo * (hi / lo).powf(i as f64 / k as f64))
        .collect()
}

struct Integrand<'a, F> {
    f: &'a F,
    count: AtomicUsize,
}

impl<F: Fn(f64) -> Result<f64> + Sync> Integrand<'_, F> {
    fn eval(&self, w: f64) -> Result<f64> {
        self.count.fetch_add(1, Ordering::Relaxed);
        let v = (self.f)(w)?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::NonFinite("H2 integrand"));
        }
        Ok(v)
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(
        &self,
        a: f64,
        b: f64,
        fa: f64,
        fb: f64,
        tol: f64,
        depth: usize,
        opts: &QuadOptions,
    ) -> Result<f64> {
        let mid = 0.5 * (a + b);
        let fm = self.eval(mid)?;
        let t1 = 0.5 * (b - a) * (fa + fb);
        let t2 = 0.25 * (b - a) * (fa + 2.0 * fm + fb);
        if depth >= opts.max_depth || (depth >= opts.min_depth && (t2 - t1).abs() <= 3.0 * tol) {
            return Ok(t2);
        }
        Ok(self.refine(a, mid, fa, fm, 0.5 * tol, depth + 1, opts)?
            + self.refine(mid, b, fm, fb, 0.5 * tol, depth + 1, opts)?)
    }

    fn integrate(&self, nodes: &[f64], scale: f64, opts: &QuadOptions) -> Result<f64> {
        let vals: Vec<f64> = nodes
            .par_iter()
            .map(|&w| self.eval(w))
            .collect::<Result<_>>()?;
        let coarse: f64 = nodes
            .windows(2)
            .zip(vals.windows(2))
            .map(|(w, v)| 0.5 * (w[1] - w[0]) * (v[0] + v[1]))
            .sum();
        let intervals = (nodes.len() - 1).max(1) as f64;
        let tol = (opts.rtol * coarse.max(scale)).max(opts.abs_tol) / intervals;
        let parts: Vec<f64> = (0..nodes.len() - 1)
            .into_par_iter()
            .map(|i| self.refine(nodes[i], nodes[i + 1], vals[i], vals[i + 1], tol, 0, opts))
            .collect::<Result<_>>()?;
        Ok(parts.iter().sum())
    }
}

/// `sqrt((1/π)·∫₀^∞ f(ω) dω)` where `f(ω) = ‖H(iω)‖_F²`.
///
/// `breakpoints` seed the base grid (resonances belong here); intervals are
/// bisected adaptively, then the upper limit doubles until the added tail is
/// below `tail_rtol` of the total.
pub fn h2_quadrature<F>(f: F, breakpoints: &[f64], opts: &QuadOptions) -> Result<Quadrature>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let mut nodes: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|w| w.is_finite() && *w > 0.0)
        .collect();
    nodes.push(0.0);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
    if nodes.len() < 2 {
        nodes.push(1.0);
    }
    let integrand = Integrand {
        f: &f,
        count: AtomicUsize::new(0),
    };
    let mut total = integrand.integrate(&nodes, 0.0, opts)?;
    let mut w = *nodes.last().unwrap();
    for _ in 0..opts.max_doublings {
        let piece_nodes: Vec<f64> = (0..=4).map(|i| w * (1.0 + i as f64 / 4.0)).collect();
        let piece = integrand.integrate(&piece_nodes, total, opts)?;
        total += piece;
        w *= 2.0;
        if piece <= opts.tail_rtol * total || piece <= opts.abs_tol {
            break;
        }
    }
    Ok(Quadrature {
        h2: (total / std::f64::consts::PI).max(0.0).sqrt(),
        integral: total,
        omega_max: w,
        evaluations: integrand.count.load(Ordering::Relaxed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_first_order() {
        // ẋ = −x + u, y = x.
        let sys = FirstOrder {
            a: DenseMatrix::from_rows(&[vec![-1.0]]),
            b: DenseMatrix::from_rows(&[vec![1.0]]),
            c: DenseMatrix::from_rows(&[vec![1.0]]),
        };
        assert!((sys.h2_lyapunov().unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
        let q = h2_quadrature(|w| Ok(1.0 / (1.0 + w * w)), &log_grid(1e-2, 1e2, 4), &QuadOptions::default())
            .unwrap();
        assert!((q.h2 - 0.5f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn identical_difference_is_zero() {
        let m = DenseMatrix::identity(2);
        let k = DenseMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]);
        let d = m.add_scaled(&k, 0.1, 0.1).unwrap();
        let f = DenseMatrix::from_rows(&[vec![1.0], vec![0.0]]);
        let c = f.transpose();
        let z = DenseMatrix::zeros(1, 2);
        let s = first_order(&m, &d, &k, &f, &c, &z).unwrap();
        assert!(s.h2_lyapunov().unwrap() > 0.1);
        assert!(s.difference(&s).unwrap().h2_lyapunov().unwrap() < 1e-7);
    }
}
