//! Dense nonsymmetric eigenvalues, the quadratic eigenproblem and Lyapunov solves.

use std::cmp::Ordering;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{dense_solve, DenseMatrix, Lu};

/// Real Schur decomposition `A = Q·T·Qᵀ`.
#[derive(Clone, Debug)]
pub struct RealSchur {
    pub q: DenseMatrix,
    pub t: DenseMatrix,
    /// Start index and size (1 or 2) of each diagonal block of `t`.
    pub blocks: Vec<(usize, usize)>,
}

impl RealSchur {
    /// Eigenvalues read off the diagonal blocks, conjugate pairs built explicitly.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.t.nrows());
        for &(i, size) in &self.blocks {
            if size == 1 {
                out.push(Complex64::new(self.t[(i, i)], 0.0));
            } else {
                let (re, im) = block_eigs(&self.t, i);
                out.push(Complex64::new(re, im));
                out.push(Complex64::new(re, -im));
            }
        }
        out
    }
}

fn block_eigs(t: &DenseMatrix, i: usize) -> (f64, f64) {
    let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
    let p = 0.5 * (a - d);
    let disc = p * p + b * c;
    let im = (-disc).max(0.0).sqrt();
    (0.5 * (a + d), im)
}

/// Hessenberg reduction followed by Francis double-shift QR.
pub fn real_schur(a: &DenseMatrix) -> Result<RealSchur> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("real_schur (square)", n, a.ncols()));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("real_schur input"));
    }
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| a.row(i)).collect();
    let mut v = vec![vec![0.0; n]; n];
    if n == 0 {
        return Ok(RealSchur {
            q: DenseMatrix::zeros(0, 0),
            t: DenseMatrix::zeros(0, 0),
            blocks: Vec::new(),
        });
    }
    hessenberg(&mut h, &mut v);
    let pair = francis(&mut h, &mut v)?;

    let mut t = DenseMatrix::zeros(n, n);
    let mut q = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            q[(i, j)] = v[i][j];
            if j + 1 >= i {
                t[(i, j)] = h[i][j];
            }
        }
    }
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && pair[i] {
            blocks.push((i, 2));
            i += 2;
        } else {
            if i + 1 < n {
                t[(i + 1, i)] = 0.0;
            }
            blocks.push((i, 1));
            i += 1;
        }
    }
    Ok(RealSchur { q, t, blocks })
}

fn hessenberg(h: &mut [Vec<f64>], v: &mut [Vec<f64>]) {
    let n = h.len();
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[i][m - 1].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[i][m - 1] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;
        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[i][j];
            }
            f /= hh;
            for i in m..=high {
                h[i][j] -= f * ort[i];
            }
        }
        for row in h.iter_mut().take(high + 1) {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * row[j];
            }
            f /= hh;
            for j in m..=high {
                row[j] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[m][m - 1] = scale * g;
    }

    for (i, row) in v.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = if i == j { 1.0 } else { 0.0 };
        }
    }
    for m in (1..high).rev() {
        if h[m][m - 1] == 0.0 {
            continue;
        }
        for i in m + 1..=high {
            ort[i] = h[i][m - 1];
        }
        for j in m..=high {
            let mut g = 0.0;
            for i in m..=high {
                g += ort[i] * v[i][j];
            }
            g = (g / ort[m]) / h[m][m - 1];
            for i in m..=high {
                v[i][j] += g * ort[i];
            }
        }
    }
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            h[i][j] = 0.0;
        }
    }
}

/// Returns `pair[i] = true` when rows `i, i+1` hold a complex-conjugate block.
fn francis(h: &mut [Vec<f64>], v: &mut [Vec<f64>]) -> Result<Vec<bool>> {
    let nn = h.len();
    let high = nn - 1;
    let low = 0usize;
    let eps = f64::EPSILON;
    let max_iter = 30 * nn.max(1);
    let mut pair = vec![false; nn];
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z): (f64, f64, f64, f64, f64);
    let (mut x, mut y, mut w);

    let mut norm = 0.0;
    for (i, row) in h.iter().enumerate() {
        for val in row.iter().skip(i.saturating_sub(1)) {
            norm += val.abs();
        }
    }

    let mut n = high as isize;
    let mut iter = 0usize;
    let mut total = 0usize;
    while n >= low as isize {
        let nu = n as usize;
        let mut l = nu;
        while l > low {
            s = h[l - 1][l - 1].abs() + h[l][l].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[l][l - 1].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            h[nu][nu] += exshift;
            if nu > 0 {
                h[nu][nu - 1] = 0.0;
            }
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            w = h[nu][nu - 1] * h[nu - 1][nu];
            p = (h[nu - 1][nu - 1] - h[nu][nu]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[nu][nu] += exshift;
            h[nu - 1][nu - 1] += exshift;
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                x = h[nu][nu - 1];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in nu - 1..nn {
                    z = h[nu - 1][j];
                    h[nu - 1][j] = q * z + p * h[nu][j];
                    h[nu][j] = q * h[nu][j] - p * z;
                }
                for row in h.iter_mut().take(nu + 1) {
                    z = row[nu - 1];
                    row[nu - 1] = q * z + p * row[nu];
                    row[nu] = q * row[nu] - p * z;
                }
                for row in v.iter_mut().take(high + 1).skip(low) {
                    z = row[nu - 1];
                    row[nu - 1] = q * z + p * row[nu];
                    row[nu] = q * row[nu] - p * z;
                }
                h[nu][nu - 1] = 0.0;
            } else {
                pair[nu - 1] = true;
            }
            if nu >= 2 {
                h[nu - 1][nu - 2] = 0.0;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h[nu][nu];
            y = 0.0;
            w = 0.0;
            if l < nu {
                y = h[nu - 1][nu - 1];
                w = h[nu][nu - 1] * h[nu - 1][nu];
            }
            if iter == 10 {
                exshift += x;
                for i in low..=nu {
                    h[i][i] -= x;
                }
                s = h[nu][nu - 1].abs() + h[nu - 1][nu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=nu {
                        h[i][i] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total += 1;
            if total > max_iter {
                return Err(Error::NoConvergence { sweeps: total });
            }

            let mut m = nu - 2;
            loop {
                z = h[m][m];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[m + 1][m] + h[m][m + 1];
                q = h[m + 1][m + 1] - z - r - s;
                r = h[m + 2][m + 1];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[m][m - 1].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[m - 1][m - 1].abs() + z.abs() + h[m + 1][m + 1].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                h[i][i - 2] = 0.0;
                if i > m + 2 {
                    h[i][i - 3] = 0.0;
                }
            }

            for k in m..nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[k][k - 1];
                    q = h[k + 1][k - 1];
                    r = if notlast { h[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[k][k - 1] = -s * x;
                    } else if l != m {
                        h[k][k - 1] = -h[k][k - 1];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..nn {
                        p = h[k][j] + q * h[k + 1][j];
                        if notlast {
                            p += r * h[k + 2][j];
                            h[k + 2][j] -= p * z;
                        }
                        h[k][j] -= p * x;
                        h[k + 1][j] -= p * y;
                    }
                    for row in h.iter_mut().take(nu.min(k + 3) + 1) {
                        p = x * row[k] + y * row[k + 1];
                        if notlast {
                            p += z * row[k + 2];
                            row[k + 2] -= p * r;
                        }
                        row[k] -= p;
                        row[k + 1] -= p * q;
                    }
                    for row in v.iter_mut().take(high + 1).skip(low) {
                        p = x * row[k] + y * row[k + 1];
                        if notlast {
                            p += z * row[k + 2];
                            row[k + 2] -= p * r;
                        }
                        row[k] -= p;
                        row[k + 1] -= p * q;
                    }
                }
            }
        }
    }
    Ok(pair)
}

/// Eigenvalues of a real square matrix, sorted by [`eig_order`].
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<Complex64>> {
    let mut ev = real_schur(a)?.eigenvalues();
    ev.sort_by(eig_order);
    Ok(ev)
}

/// Ascending real part, ties by ascending imaginary part.
pub fn eig_order(a: &Complex64, b: &Complex64) -> Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// Eigenvalues of `λ²M + λD + K`, with optional per-eigenvalue residuals.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    /// Scaled residual `‖(λ²M+λD+K)v‖ / ((|λ|²‖M‖+|λ|‖D‖+‖K‖)‖v‖)` per eigenvalue,
    /// empty unless requested.
    pub residual_norms: Vec<f64>,
}

/// The `2r×2r` companion matrix `[[0, I], [−M⁻¹K, −M⁻¹D]]`.
pub fn companion(mh: &DenseMatrix, dh: &DenseMatrix, kh: &DenseMatrix) -> Result<DenseMatrix> {
    let r = mh.nrows();
    for (name, x) in [("D", dh), ("K", kh)] {
        if x.shape() != (r, r) || mh.ncols() != r {
            return Err(Error::dim(
                if name == "D" { "companion D" } else { "companion K" },
                format!("({r}, {r})"),
                format!("{:?}", x.shape()),
            ));
        }
    }
    let mk = dense_solve(mh, kh)?;
    let md = dense_solve(mh, dh)?;
    let mut a = DenseMatrix::zeros(2 * r, 2 * r);
    a.set_block(0, r, &DenseMatrix::identity(r));
    a.set_block(r, 0, &mk.scaled(-1.0));
    a.set_block(r, r, &md.scaled(-1.0));
    Ok(a)
}

/// Quadratic eigenvalues via the companion linearization.
pub fn quad_eig(mh: &DenseMatrix, dh: &DenseMatrix, kh: &DenseMatrix) -> Result<Spectrum> {
    let a = companion(mh, dh, kh)?;
    Ok(Spectrum {
        eigenvalues: eigenvalues(&a)?,
        residual_norms: Vec::new(),
    })
}

/// [`quad_eig`] plus eigenvectors by shifted inverse iteration, used only to
/// report residuals.
pub fn quad_eig_checked(mh: &DenseMatrix, dh: &DenseMatrix, kh: &DenseMatrix) -> Result<Spectrum> {
    let mut spec = quad_eig(mh, dh, kh)?;
    let r = mh.nrows();
    let (nm, nd, nk) = (mh.frob_norm(), dh.frob_norm(), kh.frob_norm());
    let a = companion(mh, dh, kh)?;
    let scale = a.frob_norm().max(1.0);
    let mut res = Vec::with_capacity(spec.eigenvalues.len());
    for &lam in &spec.eigenvalues {
        let x = inverse_iteration(&a, lam, scale)?;
        let x = &x[..r];
        let mut qv = vec![Complex64::new(0.0, 0.0); r];
        for j in 0..r {
            for i in 0..r {
                qv[i] += (lam * lam * mh[(i, j)] + lam * dh[(i, j)] + kh[(i, j)]) * x[j];
            }
        }
        let num = qv.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let xn = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let denom = (lam.norm_sqr() * nm + lam.norm() * nd + nk) * xn;
        res.push(if denom > 0.0 { num / denom } else { num });
    }
    spec.residual_norms = res;
    Ok(spec)
}

fn inverse_iteration(a: &DenseMatrix, lam: Complex64, scale: f64) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let mut delta = 1e-10 * scale;
    let lu = loop {
        let shift = lam + Complex64::new(delta, delta);
        let mut m = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let d = if i == j { shift } else { Complex64::new(0.0, 0.0) };
                m.push(Complex64::new(a[(i, j)], 0.0) - d);
            }
        }
        match Lu::new(n, m) {
            Ok(lu) => break lu,
            Err(Error::Singular { .. }) if delta < 1e-4 * scale => delta *= 10.0,
            Err(e) => return Err(e),
        }
    };
    let mut x: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + 0.1 * i as f64, 0.05 * i as f64))
        .collect();
    for _ in 0..3 {
        lu.solve_in_place(&mut x);
        let nrm = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::NonFinite("inverse iteration"));
        }
        for c in &mut x {
            *c /= nrm;
        }
    }
    Ok(x)
}

/// Solves `A·P + P·Aᵀ + W = 0` by Bartels–Stewart on the real Schur form of `A`.
pub fn lyap_solve(a: &DenseMatrix, w: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.nrows();
    if a.ncols() != n || w.shape() != (n, n) {
        return Err(Error::dim(
            "lyap_solve",
            format!("({n}, {n})"),
            format!("{:?} / {:?}", a.shape(), w.shape()),
        ));
    }
    let schur = real_schur(a)?;
    let offending: Vec<(f64, f64)> = schur
        .eigenvalues()
        .into_iter()
        .filter(|l| l.re >= 0.0)
        .map(|l| (l.re, l.im))
        .collect();
    if !offending.is_empty() {
        return Err(Error::NotHurwitz { offending });
    }
    let (q, t) = (&schur.q, &schur.t);
    // T Y + Y Tᵀ = C with C = −Qᵀ W Q.
    let c = q.t_matmul(&w.matmul(q)?)?.scaled(-1.0);
    let mut y = DenseMatrix::zeros(n, n);
    let blocks = &schur.blocks;
    for jb in (0..blocks.len()).rev() {
        let (j0, js) = blocks[jb];
        for ib in (0..blocks.len()).rev() {
            let (i0, is) = blocks[ib];
            let mut rhs = c.block(i0, j0, is, js);
            for bi in 0..is {
                for bj in 0..js {
                    let (i, j) = (i0 + bi, j0 + bj);
                    let mut acc = 0.0;
                    for k in i0 + is..n {
                        acc += t[(i, k)] * y[(k, j)];
                    }
                    for l in j0 + js..n {
                        acc += y[(i, l)] * t[(j, l)];
                    }
                    rhs[(bi, bj)] -= acc;
                }
            }
            let tii = t.block(i0, i0, is, is);
            let tjj = t.block(j0, j0, js, js);
            let blk = small_sylvester(&tii, &tjj, &rhs)?;
            y.set_block(i0, j0, &blk);
        }
    }
    let p = q.matmul(&y)?.matmul(&q.transpose())?;
    Ok(p.symmetrized())
}

/// Solves `A X + X Bᵀ = C` for blocks of size at most 2 via the Kronecker form.
fn small_sylvester(a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix) -> Result<DenseMatrix> {
    let (p, q) = (a.nrows(), b.nrows());
    let dim = p * q;
    // vec(AX) = (I⊗A) vec X, vec(X Bᵀ) = (B⊗I) vec X.
    let mut k = DenseMatrix::zeros(dim, dim);
    for jj in 0..q {
        for ii in 0..p {
            let row = jj * p + ii;
            for kk in 0..p {
                k[(row, jj * p + kk)] += a[(ii, kk)];
            }
            for ll in 0..q {
                k[(row, ll * p + ii)] += b[(jj, ll)];
            }
        }
    }
    let rhs = DenseMatrix::column_vector(c.values());
    let x = dense_solve(&k, &rhs)?;
    DenseMatrix::from_col_major(p, q, x.into_values())
}
