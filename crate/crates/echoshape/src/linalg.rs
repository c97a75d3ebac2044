//! Dense real and complex linear algebra.
//!
//! Just enough machinery for this workbench, tuned for a single core:
//! row-major real matrices, complex matrices in planar (split re/im) storage
//! so multiplication runs as four real GEMM passes over contiguous slices,
//! LU-based inversion for reuse across many right-hand sides, a one-sided
//! Jacobi SVD, and column-pivoted Householder least squares.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.at(j, i))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        self.data
            .chunks_exact(self.cols)
            .map(|row| dot(row, x))
            .collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `c += sign * a * b` for row-major slices, `a` is m-by-k, `b` is k-by-n.
///
/// Loop order i-p-j with a column block keeps the inner loop stride-1 on both
/// `c` and `b` and the touched block of `b` inside cache across `i`.
fn rgemm_acc(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize, sign: f64) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    const JB: usize = 512;
    let mut j0 = 0;
    while j0 < n {
        let jl = JB.min(n - j0);
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            let crow = &mut c[i * n + j0..i * n + j0 + jl];
            for (p, &aip) in arow.iter().enumerate() {
                let f = sign * aip;
                // Planar complex products of real-valued data hit this a lot.
                if f == 0.0 {
                    continue;
                }
                let brow = &b[p * n + j0..p * n + j0 + jl];
                for (cv, &bv) in crow.iter_mut().zip(brow) {
                    *cv += f * bv;
                }
            }
        }
        j0 += jl;
    }
}

/// Complex matrix in planar row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, re: vec![0.0; rows * cols], im: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m.re[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = CMat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = f(i, j);
                m.re[i * cols + j] = v.re;
                m.im[i * cols + j] = v.im;
            }
        }
        m
    }

    /// Real matrix embedded with zero imaginary part.
    pub fn from_real(a: &Mat) -> Self {
        CMat {
            rows: a.rows(),
            cols: a.cols(),
            re: a.as_slice().to_vec(),
            im: vec![0.0; a.rows() * a.cols()],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        let idx = i * self.cols + j;
        Complex64::new(self.re[idx], self.im[idx])
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        let idx = i * self.cols + j;
        self.re[idx] = v.re;
        self.im[idx] = v.im;
    }

    pub fn re_plane(&self) -> &[f64] {
        &self.re
    }

    pub fn im_plane(&self) -> &[f64] {
        &self.im
    }

    pub fn row_re(&self, i: usize) -> &[f64] {
        &self.re[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_im(&self, i: usize) -> &[f64] {
        &self.im[i * self.cols..(i + 1) * self.cols]
    }

    pub fn conj_transpose(&self) -> CMat {
        let mut out = CMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let idx = i * self.cols + j;
                out.re[j * self.rows + i] = self.re[idx];
                out.im[j * self.rows + i] = -self.im[idx];
            }
        }
        out
    }

    pub fn scale(&mut self, s: Complex64) {
        for (r, i) in self.re.iter_mut().zip(self.im.iter_mut()) {
            let (nr, ni) = (s.re * *r - s.im * *i, s.re * *i + s.im * *r);
            *r = nr;
            *i = ni;
        }
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.re.iter_mut().zip(&other.re) {
            *a -= b;
        }
        for (a, b) in out.im.iter_mut().zip(&other.im) {
            *a -= b;
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        let s: f64 = self.re.iter().map(|v| v * v).sum::<f64>()
            + self.im.iter().map(|v| v * v).sum::<f64>();
        s.sqrt()
    }

    /// `self * b` via four real GEMM passes on the planar storage.
    pub fn matmul(&self, b: &CMat) -> CMat {
        assert_eq!(self.cols, b.rows, "matmul dimension mismatch");
        let (m, k, n) = (self.rows, self.cols, b.cols);
        let mut out = CMat::zeros(m, n);
        rgemm_acc(&mut out.re, &self.re, &b.re, m, k, n, 1.0);
        rgemm_acc(&mut out.re, &self.im, &b.im, m, k, n, -1.0);
        rgemm_acc(&mut out.im, &self.re, &b.im, m, k, n, 1.0);
        rgemm_acc(&mut out.im, &self.im, &b.re, m, k, n, 1.0);
        out
    }

    /// Inverse via partially pivoted LU and per-column triangular solves.
    ///
    /// Intended for the second-kind integral operators in this crate, whose
    /// condition numbers sit well below 1e3; forming the inverse explicitly
    /// turns the many-right-hand-side solves downstream into one GEMM.
    pub fn invert(&self) -> Result<CMat> {
        if self.rows != self.cols {
            return Err(Error::Dimension(format!(
                "invert needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut lr = self.re.clone();
        let mut li = self.im.clone();
        let mut perm: Vec<usize> = (0..n).collect();

        let scale: f64 = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .fold(0.0, f64::max)
            .sqrt();
        let tiny = scale * 1e-300_f64.max(f64::EPSILON * scale);

        for k in 0..n {
            let mut best = k;
            let mut best_mag = 0.0;
            for i in k..n {
                let idx = i * n + k;
                let mag = lr[idx] * lr[idx] + li[idx] * li[idx];
                if mag > best_mag {
                    best_mag = mag;
                    best = i;
                }
            }
            if best_mag.sqrt() <= tiny {
                return Err(Error::Singular(format!("pivot {k} below cutoff in LU")));
            }
            if best != k {
                for j in 0..n {
                    lr.swap(k * n + j, best * n + j);
                    li.swap(k * n + j, best * n + j);
                }
                perm.swap(k, best);
            }
            let (pr, pi) = (lr[k * n + k], li[k * n + k]);
            let pd = pr * pr + pi * pi;
            for i in k + 1..n {
                let idx = i * n + k;
                let (ar, ai) = (lr[idx], li[idx]);
                // multiplier m = a / pivot
                let mr = (ar * pr + ai * pi) / pd;
                let mi = (ai * pr - ar * pi) / pd;
                lr[idx] = mr;
                li[idx] = mi;
                if mr == 0.0 && mi == 0.0 {
                    continue;
                }
                let (head, tail) = lr.split_at_mut(i * n);
                let rowk = &head[k * n + k + 1..k * n + n];
                let rowi = &mut tail[k + 1..n];
                let (headi, taili) = li.split_at_mut(i * n);
                let rowki = &headi[k * n + k + 1..k * n + n];
                let rowii = &mut taili[k + 1..n];
                for idx2 in 0..rowk.len() {
                    let (br, bi) = (rowk[idx2], rowki[idx2]);
                    rowi[idx2] -= mr * br - mi * bi;
                    rowii[idx2] -= mr * bi + mi * br;
                }
            }
        }

        // Where did original basis vector e_j land after the row swaps.
        let mut pos_of = vec![0usize; n];
        for (i, &p) in perm.iter().enumerate() {
            pos_of[p] = i;
        }

        let mut inv = CMat::zeros(n, n);
        let mut yr = vec![0.0; n];
        let mut yi = vec![0.0; n];
        for j in 0..n {
            let start = pos_of[j];
            for v in yr.iter_mut() {
                *v = 0.0;
            }
            for v in yi.iter_mut() {
                *v = 0.0;
            }
            yr[start] = 1.0;
            // forward substitution with unit lower triangle; rows before
            // `start` stay zero because the right-hand side is a unit vector
            for i in start + 1..n {
                let row_r = &lr[i * n..i * n + i];
                let row_i = &li[i * n..i * n + i];
                let mut sr = 0.0;
                let mut si = 0.0;
                for l in start..i {
                    sr += row_r[l] * yr[l] - row_i[l] * yi[l];
                    si += row_r[l] * yi[l] + row_i[l] * yr[l];
                }
                yr[i] -= sr;
                yi[i] -= si;
            }
            for i in (0..n).rev() {
                let mut sr = yr[i];
                let mut si = yi[i];
                let row_r = &lr[i * n..(i + 1) * n];
                let row_i = &li[i * n..(i + 1) * n];
                for l in i + 1..n {
                    sr -= row_r[l] * inv.re[l * n + j] - row_i[l] * inv.im[l * n + j];
                    si -= row_r[l] * inv.im[l * n + j] + row_i[l] * inv.re[l * n + j];
                }
                let (pr, pi) = (row_r[i], row_i[i]);
                let pd = pr * pr + pi * pi;
                inv.re[i * n + j] = (sr * pr + si * pi) / pd;
                inv.im[i * n + j] = (si * pr - sr * pi) / pd;
            }
        }
        Ok(inv)
    }
}

/// Singular value decomposition, `a = u * diag(sigma) * v^H`.
///
/// `u` is rows-by-cols with orthonormal columns where `sigma > 0`, `sigma`
/// is sorted descending, and `v` (cols-by-cols) is built only on request.
pub struct Svd {
    pub u: CMat,
    pub sigma: Vec<f64>,
    pub v: Option<CMat>,
}

/// One-sided Jacobi SVD operating on columns.
///
/// Meant for matrices with at least as many rows as columns; numerically a
/// column is declared null once its norm falls below 1e-290 of the largest,
/// which is plenty for the exponentially decaying spectra seen here.
pub fn svd(a: &CMat, want_v: bool) -> Svd {
    let m = a.rows();
    let n = a.cols();
    // column-major working copy
    let mut wr = vec![0.0; m * n];
    let mut wi = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            wr[j * m + i] = a.re_plane()[i * n + j];
            wi[j * m + i] = a.im_plane()[i * n + j];
        }
    }
    let mut vr = vec![0.0; if want_v { n * n } else { 0 }];
    let mut vi = vec![0.0; if want_v { n * n } else { 0 }];
    if want_v {
        for j in 0..n {
            vr[j * n + j] = 1.0;
        }
    }

    let col_norm_sq = |re: &[f64], im: &[f64], j: usize, len: usize| -> f64 {
        let r = &re[j * len..(j + 1) * len];
        let i = &im[j * len..(j + 1) * len];
        dot(r, r) + dot(i, i)
    };

    let max_norm0 = (0..n)
        .map(|j| col_norm_sq(&wr, &wi, j, m))
        .fold(0.0, f64::max)
        .sqrt();
    let null_cut = max_norm0 * 1e-290;

    const TOL: f64 = 1e-14;
    const MAX_SWEEPS: usize = 60;
    for _ in 0..MAX_SWEEPS {
        let mut off_max = 0.0_f64;
        for i in 0..n.saturating_sub(1) {
            for j in i + 1..n {
                let alpha = col_norm_sq(&wr, &wi, i, m);
                let beta = col_norm_sq(&wr, &wi, j, m);
                if alpha.sqrt() <= null_cut || beta.sqrt() <= null_cut {
                    continue;
                }
                // gamma = col_i^H col_j
                let (ci_r, ci_i) = (&wr[i * m..(i + 1) * m], &wi[i * m..(i + 1) * m]);
                let (cj_r, cj_i) = (&wr[j * m..(j + 1) * m], &wi[j * m..(j + 1) * m]);
                let mut gr = 0.0;
                let mut gi = 0.0;
                for l in 0..m {
                    gr += ci_r[l] * cj_r[l] + ci_i[l] * cj_i[l];
                    gi += ci_r[l] * cj_i[l] - ci_i[l] * cj_r[l];
                }
                let gmag = (gr * gr + gi * gi).sqrt();
                let rel = gmag / (alpha * beta).sqrt();
                off_max = off_max.max(rel);
                if rel < TOL {
                    continue;
                }
                // Phase-factored real Jacobi rotation that orthogonalizes the pair.
                let (phr, phi) = (gr / gmag, gi / gmag); // e^{i phi}
                let tau = (beta - alpha) / (2.0 * gmag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                // u' = c u - s e^{-i phi} v ; v' = s u + c e^{-i phi} v
                let rotate = |ur: &mut [f64], ui: &mut [f64], vr2: &mut [f64], vi2: &mut [f64]| {
                    for l in 0..ur.len() {
                        let (ar, ai) = (ur[l], ui[l]);
                        let (br, bi) = (vr2[l], vi2[l]);
                        // e^{-i phi} * v
                        let pr = phr * br + phi * bi;
                        let pi_ = phr * bi - phi * br;
                        ur[l] = c * ar - s * pr;
                        ui[l] = c * ai - s * pi_;
                        vr2[l] = s * ar + c * pr;
                        vi2[l] = s * ai + c * pi_;
                    }
                };
                {
                    let (lo, hi) = wr.split_at_mut(j * m);
                    let (lo_i, hi_i) = wi.split_at_mut(j * m);
                    rotate(
                        &mut lo[i * m..(i + 1) * m],
                        &mut lo_i[i * m..(i + 1) * m],
                        &mut hi[..m],
                        &mut hi_i[..m],
                    );
                }
                if want_v {
                    let (lo, hi) = vr.split_at_mut(j * n);
                    let (lo_i, hi_i) = vi.split_at_mut(j * n);
                    rotate(
                        &mut lo[i * n..(i + 1) * n],
                        &mut lo_i[i * n..(i + 1) * n],
                        &mut hi[..n],
                        &mut hi_i[..n],
                    );
                }
            }
        }
        if off_max < TOL {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| col_norm_sq(&wr, &wi, j, m).sqrt()).collect();
    order.sort_by(|&a_, &b_| norms[b_].partial_cmp(&norms[a_]).unwrap());

    let mut u = CMat::zeros(m, n);
    let mut sigma = vec![0.0; n];
    for (out_j, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma[out_j] = if s <= null_cut { 0.0 } else { s };
        if sigma[out_j] > 0.0 {
            for i in 0..m {
                u.re[i * n + out_j] = wr[src * m + i] / s;
                u.im[i * n + out_j] = wi[src * m + i] / s;
            }
        }
    }
    let v = want_v.then(|| {
        let mut v = CMat::zeros(n, n);
        for (out_j, &src) in order.iter().enumerate() {
            for i in 0..n {
                v.re[i * n + out_j] = vr[src * n + i];
                v.im[i * n + out_j] = vi[src * n + i];
            }
        }
        v
    });
    Svd { u, sigma, v }
}

/// Least-squares solution with a crude condition estimate from the pivoted
/// R diagonal.
pub struct Lstsq {
    pub x: Vec<f64>,
    pub cond: f64,
}

/// Column-pivoted Householder QR solve of `min ||a x - b||`.
///
/// Requires rows >= cols; an exactly rank-deficient column triggers an error
/// so callers can decide between failing and a truncated-SVD retry.
pub fn lstsq(a: &Mat, b: &[f64]) -> Result<Lstsq> {
    let m = a.rows();
    let n = a.cols();
    if b.len() != m {
        return Err(Error::Dimension(format!(
            "lstsq rhs length {} does not match {} rows",
            b.len(),
            m
        )));
    }
    if m < n {
        return Err(Error::RankDeficient(format!(
            "system is underdetermined: {m} rows < {n} columns"
        )));
    }
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut diag = vec![0.0_f64; n];

    for k in 0..n {
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..n {
            let mut s = 0.0;
            for i in k..m {
                let v = r.at(i, j);
                s += v * v;
            }
            if s > best_norm {
                best_norm = s;
                best = j;
            }
        }
        if best != k {
            for i in 0..m {
                let tmp = r.at(i, k);
                r.set(i, k, r.at(i, best));
                r.set(i, best, tmp);
            }
            perm.swap(k, best);
        }
        let normx = best_norm.max(0.0).sqrt();
        if normx == 0.0 {
            return Err(Error::RankDeficient(format!(
                "column {k} vanishes during pivoted QR"
            )));
        }
        let x0 = r.at(k, k);
        let alpha = if x0 >= 0.0 { -normx } else { normx };
        // Householder vector w = x - alpha e1, stored in column k below row k.
        let w0 = x0 - alpha;
        let mut wsq = w0 * w0;
        for i in k + 1..m {
            let v = r.at(i, k);
            wsq += v * v;
        }
        let beta = 2.0 / wsq;
        for j in k + 1..n {
            let mut proj = w0 * r.at(k, j);
            for i in k + 1..m {
                proj += r.at(i, k) * r.at(i, j);
            }
            let f = beta * proj;
            r.set(k, j, r.at(k, j) - f * w0);
            for i in k + 1..m {
                r.set(i, j, r.at(i, j) - f * r.at(i, k));
            }
        }
        let mut proj = w0 * qtb[k];
        for i in k + 1..m {
            proj += r.at(i, k) * qtb[i];
        }
        let f = beta * proj;
        qtb[k] -= f * w0;
        for i in k + 1..m {
            qtb[i] -= f * r.at(i, k);
        }
        diag[k] = alpha;
        r.set(k, k, alpha);
    }

    let dmax = diag.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let dmin = diag.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min);
    let cond = if dmin == 0.0 { f64::INFINITY } else { dmax / dmin };

    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = qtb[i];
        for j in i + 1..n {
            s -= r.at(i, j) * y[j];
        }
        y[i] = s / diag[i];
    }
    let mut x = vec![0.0; n];
    for (i, &p) in perm.iter().enumerate() {
        x[p] = y[i];
    }
    Ok(Lstsq { x, cond })
}

/// Truncated-SVD least squares for ill-conditioned real systems; singular
/// values below `rel_tol` of the largest are dropped.
pub fn lstsq_svd(a: &Mat, b: &[f64], rel_tol: f64) -> Vec<f64> {
    let dec = svd(&CMat::from_real(a), true);
    let v = dec.v.expect("svd called with want_v");
    let smax = dec.sigma.first().copied().unwrap_or(0.0);
    let mut x = vec![0.0; a.cols()];
    for (idx, &s) in dec.sigma.iter().enumerate() {
        if s <= rel_tol * smax || s == 0.0 {
            continue;
        }
        // coefficient u_idx^H b (b real)
        let mut cr = 0.0;
        let mut ci = 0.0;
        for i in 0..a.rows() {
            let u = dec.u.at(i, idx);
            cr += u.re * b[i];
            ci -= u.im * b[i];
        }
        cr /= s;
        ci /= s;
        for j in 0..a.cols() {
            let vj = v.at(j, idx);
            // real part of v_j * coeff
            x[j] += vj.re * cr - vj.im * ci;
        }
    }
    x
}
