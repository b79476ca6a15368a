//! Blocked Householder QR whose trailing updates go through [`adp_gemm`].
//!
//! Each panel is factored column by column in native FP64 and its
//! reflectors are aggregated into the compact form `Q_i = I - Y T Y^T`.
//! The trailing matrix is then updated with three products:
//! `W = Y^T A_s`, `W = T^T W`, `A_s = A_s - Y W`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::adp::{adp_gemm, AdpConfig, AdpTrace};
use crate::error::{Error, Result};
use crate::matrix::MatrixF64;
use crate::oracle::native_gemm;

#[derive(Debug, Clone)]
pub struct QrResult {
    /// `R` on and above the diagonal, reflector tails below it.
    pub factors: MatrixF64,
    pub taus: Vec<f64>,
    /// Upper triangular `T` of every panel.
    pub t_blocks: Vec<MatrixF64>,
    /// Three GEMM traces per panel, in call order.
    pub traces: Vec<AdpTrace>,
    pub panel_width: usize,
}

impl QrResult {
    pub fn panels(&self) -> usize {
        self.t_blocks.len()
    }

    /// The `n x n` upper triangular factor.
    pub fn r(&self) -> MatrixF64 {
        let n = self.factors.cols();
        MatrixF64::from_fn(n, n, |i, j| if i <= j { self.factors[(i, j)] } else { 0.0 })
    }

    /// Reflector block of the panel starting at column `j0` with width
    /// `w`: rows `j0..m`, unit diagonal, zeros above.
    fn y_block(&self, j0: usize, w: usize) -> MatrixF64 {
        let m = self.factors.rows();
        MatrixF64::from_fn(m - j0, w, |r, c| match r.cmp(&c) {
            core::cmp::Ordering::Less => 0.0,
            core::cmp::Ordering::Equal => 1.0,
            core::cmp::Ordering::Greater => self.factors[(j0 + r, j0 + c)],
        })
    }
}

/// Householder vector for `x` such that `(I - tau v v^T) x = beta e_1`
/// with `beta >= 0` and `v_0 = 1`. Returns `(tau, beta)` and overwrites
/// `x[1..]` with `v[1..]`.
fn householder(x: &mut [f64]) -> (f64, f64) {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return (0.0, 0.0);
    }
    let alpha = x[0] / scale;
    let sigma: f64 = x[1..].iter().map(|v| (v / scale) * (v / scale)).sum();
    if sigma == 0.0 {
        // Already a multiple of e_1; flip the sign if needed.
        x[1..].fill(0.0);
        return if alpha >= 0.0 { (0.0, x[0]) } else { (2.0, -x[0]) };
    }
    let mu = libm::sqrt(alpha * alpha + sigma);
    let v0 = if alpha <= 0.0 { alpha - mu } else { -sigma / (alpha + mu) };
    let tau = 2.0 * v0 * v0 / (sigma + v0 * v0);
    for v in &mut x[1..] {
        *v = (*v / scale) / v0;
    }
    (tau, mu * scale)
}

/// Factors the panel `a[j0.., j0..j0 + w]` in place; returns the `tau`s.
fn factor_panel(a: &mut MatrixF64, j0: usize, w: usize) -> Vec<f64> {
    let m = a.rows();
    let mut taus = Vec::with_capacity(w);
    let mut col = Vec::with_capacity(m);
    for c in j0..j0 + w {
        col.clear();
        col.extend((c..m).map(|r| a[(r, c)]));
        let (tau, beta) = householder(&mut col);
        a[(c, c)] = beta;
        for (r, &v) in (c + 1..m).zip(&col[1..]) {
            a[(r, c)] = v;
        }
        if tau != 0.0 {
            for c2 in c + 1..j0 + w {
                let mut dot = a[(c, c2)];
                for r in c + 1..m {
                    dot += a[(r, c)] * a[(r, c2)];
                }
                let f = tau * dot;
                a[(c, c2)] -= f;
                for r in c + 1..m {
                    let y = a[(r, c)];
                    a[(r, c2)] -= f * y;
                }
            }
        }
        taus.push(tau);
    }
    taus
}

/// Forward column-wise `T` with `H_0 H_1 ... H_{w-1} = I - Y T Y^T`.
fn build_t(y: &MatrixF64, taus: &[f64]) -> MatrixF64 {
    let w = taus.len();
    let rows = y.rows();
    let mut t = MatrixF64::zeros(w, w);
    for i in 0..w {
        t[(i, i)] = taus[i];
        if i == 0 || taus[i] == 0.0 {
            continue;
        }
        // z = -tau_i Y[:, 0..i]^T v_i
        let z: Vec<f64> = (0..i).map(|c| -taus[i] * (i..rows).map(|r| y[(r, c)] * y[(r, i)]).sum::<f64>()).collect();
        for r in 0..i {
            t[(r, i)] = (r..i).map(|c| t[(r, c)] * z[c]).sum();
        }
    }
    t
}

/// Blocked Householder QR of an `m x n` matrix, `m >= n`, with panels of
/// `panel_width` columns (the last one may be narrower).
pub fn geqrf_blocked(a: &MatrixF64, panel_width: usize, config: &AdpConfig) -> Result<QrResult> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::DimensionMismatch(format!("QR needs rows >= cols, got {m}x{n}")));
    }
    if panel_width == 0 {
        return Err(Error::InvalidArgument("panel width must be at least 1".into()));
    }
    config.validate()?;
    let mut f = a.clone();
    let mut taus = Vec::with_capacity(n);
    let mut t_blocks = Vec::new();
    let mut traces = Vec::new();
    let mut j0 = 0;
    while j0 < n {
        let w = panel_width.min(n - j0);
        let panel_taus = factor_panel(&mut f, j0, w);
        let y = MatrixF64::from_fn(m - j0, w, |r, c| match r.cmp(&c) {
            core::cmp::Ordering::Less => 0.0,
            core::cmp::Ordering::Equal => 1.0,
            core::cmp::Ordering::Greater => f[(j0 + r, j0 + c)],
        });
        let t = build_t(&y, &panel_taus);
        let a_s = f.submatrix(j0, j0 + w, m - j0, n - j0 - w);
        let (wm, tr1) = adp_gemm(&y.transpose(), &a_s, 1.0, 0.0, None, config)?;
        let (wm, tr2) = adp_gemm(&t.transpose(), &wm, 1.0, 0.0, None, config)?;
        let (a_s, tr3) = adp_gemm(&y, &wm, -1.0, 1.0, Some(&a_s), config)?;
        f.set_submatrix(j0, j0 + w, &a_s);
        traces.extend([tr1, tr2, tr3]);
        taus.extend(panel_taus);
        t_blocks.push(t);
        j0 += w;
    }
    Ok(QrResult { factors: f, taus, t_blocks, traces, panel_width })
}

/// The thin `m x n` orthogonal factor, applied through the WY blocks in
/// native FP64.
pub fn thin_q(result: &QrResult) -> Result<MatrixF64> {
    let (m, n) = result.factors.shape();
    let mut q = MatrixF64::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 });
    let starts: Vec<usize> = (0..result.panels()).map(|p| p * result.panel_width).collect();
    for (p, &j0) in starts.iter().enumerate().rev() {
        let t = &result.t_blocks[p];
        let y = result.y_block(j0, t.rows());
        let qs = q.submatrix(j0, 0, m - j0, n);
        let w = native_gemm(&y.transpose(), &qs, 1.0, 0.0, None)?;
        let w = native_gemm(t, &w, 1.0, 0.0, None)?;
        let qs = native_gemm(&y, &w, -1.0, 1.0, Some(&qs))?;
        q.set_submatrix(j0, 0, &qs);
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QrResidual {
    /// `||A - Q R||_F / ||A||_F`.
    pub relative: f64,
    /// `||A - Q R||_F`.
    pub absolute: f64,
    /// `||I - Q^T Q||_F`.
    pub orthogonality: f64,
}

/// Backward error and loss of orthogonality of a factorization of `a0`.
pub fn qr_residual(a0: &MatrixF64, result: &QrResult) -> Result<QrResidual> {
    if a0.shape() != result.factors.shape() {
        return Err(Error::DimensionMismatch("factorization of a different shape".into()));
    }
    let q = thin_q(result)?;
    let qr = native_gemm(&q, &result.r(), 1.0, 0.0, None)?;
    let diff = MatrixF64::from_fn(a0.rows(), a0.cols(), |i, j| a0[(i, j)] - qr[(i, j)]);
    let absolute = diff.frobenius_norm();
    let norm = a0.frobenius_norm();
    let relative = if norm == 0.0 { absolute } else { absolute / norm };
    let qtq = native_gemm(&q.transpose(), &q, 1.0, 0.0, None)?;
    let n = qtq.rows();
    let orthogonality =
        MatrixF64::from_fn(n, n, |i, j| if i == j { 1.0 - qtq[(i, j)] } else { -qtq[(i, j)] }).frobenius_norm();
    Ok(QrResidual { relative, absolute, orthogonality })
}

/// Counts of GEMM calls per slice count; `None` collects native fallbacks.
pub fn slice_histogram(traces: &[AdpTrace]) -> BTreeMap<Option<usize>, usize> {
    let mut h = BTreeMap::new();
    for t in traces {
        *h.entry(t.slices()).or_insert(0) += 1;
    }
    h
}

/// Histogram as CSV: header `slices,count`, one row per slice count in
/// increasing order, then `native_fallback,<count>`.
pub fn histogram_csv(hist: &BTreeMap<Option<usize>, usize>) -> String {
    let mut out = String::from("slices,count\n");
    for (s, c) in hist.iter().filter_map(|(s, c)| s.map(|s| (s, c))) {
        out.push_str(&format!("{s},{c}\n"));
    }
    out.push_str(&format!("native_fallback,{}\n", hist.get(&None).copied().unwrap_or(0)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adp::{AdpMode, AdpReason};
    use crate::grading::gen_uniform_rect;
    use crate::EPSILON;

    fn native_cfg() -> AdpConfig {
        AdpConfig::default().with_mode(AdpMode::ForceNative)
    }

    #[test]
    fn householder_cases() {
        let mut x = [3.0, 4.0];
        let (tau, beta) = householder(&mut x);
        assert_eq!(beta, 5.0);
        // (I - tau v v^T) [3, 4] with v = [1, x[1]].
        let v = [1.0, x[1]];
        let d = 3.0 * v[0] + 4.0 * v[1];
        assert!((3.0 - tau * d * v[0] - 5.0).abs() < 1e-15);
        assert!((4.0 - tau * d * v[1]).abs() < 1e-15);
        let mut z = [0.0, 0.0];
        assert_eq!(householder(&mut z), (0.0, 0.0));
        let mut neg = [-2.0, 0.0];
        assert_eq!(householder(&mut neg), (2.0, 2.0));
        let mut pos = [2.0, 0.0, 0.0];
        assert_eq!(householder(&mut pos), (0.0, 2.0));
    }

    #[test]
    fn identity_input() {
        let id = MatrixF64::identity(6);
        let r = geqrf_blocked(&id, 2, &native_cfg()).unwrap();
        assert!(r.factors.bitwise_eq(&id));
        assert!(r.taus.iter().all(|&t| t == 0.0));
        assert_eq!(qr_residual(&id, &r).unwrap().absolute, 0.0);
    }

    #[test]
    fn small_random_factorizations() {
        let a = gen_uniform_rect(128, 128, 1, (0.0, 1.0));
        let native = geqrf_blocked(&a, 32, &native_cfg()).unwrap();
        let emu_cfg = AdpConfig::default().with_min_dim(1);
        let emu = geqrf_blocked(&a, 32, &emu_cfg).unwrap();
        assert_eq!(native.traces.len(), 12);
        assert_eq!(emu.traces.len(), 12);
        assert!(emu.traces[0].slices().is_some());
        let rn = qr_residual(&a, &native).unwrap();
        let re = qr_residual(&a, &emu).unwrap();
        let cap = 100.0 * 128.0 * EPSILON;
        assert!(rn.relative <= cap && re.relative <= cap, "{rn:?} {re:?}");
        assert!(re.relative <= 10.0 * rn.relative);
        assert!(rn.orthogonality <= cap && re.orthogonality <= cap);
        let r = emu.r();
        assert!((0..128).all(|i| r[(i, i)] >= 0.0));
    }

    #[test]
    fn ragged_panels_and_tall_inputs() {
        let a = gen_uniform_rect(50, 23, 4, (-1.0, 1.0));
        let r = geqrf_blocked(&a, 8, &native_cfg()).unwrap();
        assert_eq!(r.panels(), 3);
        assert_eq!(r.traces.len(), 9);
        assert!(qr_residual(&a, &r).unwrap().relative <= 100.0 * 50.0 * EPSILON);
        assert!(geqrf_blocked(&a.transpose(), 8, &native_cfg()).is_err());
        assert!(geqrf_blocked(&a, 0, &native_cfg()).is_err());
    }

    #[test]
    fn small_problems_fall_back() {
        let a = gen_uniform_rect(128, 128, 2, (0.0, 1.0));
        let r = geqrf_blocked(&a, 32, &AdpConfig::default()).unwrap();
        assert!(r.traces.iter().all(|t| t.reason == AdpReason::TooSmall));
        let h = slice_histogram(&r.traces);
        assert_eq!(histogram_csv(&h), "slices,count\nnative_fallback,12\n");
    }

    #[test]
    fn t_blocks_are_upper_triangular() {
        let a = gen_uniform_rect(40, 24, 3, (0.0, 1.0));
        let r = geqrf_blocked(&a, 12, &native_cfg()).unwrap();
        for t in &r.t_blocks {
            for i in 0..t.rows() {
                for j in 0..i {
                    assert_eq!(t[(i, j)], 0.0);
                }
            }
        }
    }
}
