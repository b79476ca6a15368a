//! Accuracy grading: the Test-2 generator, componentwise error metrics,
//! the Grade-A check and sweep drivers that produce CSV rows.
//!
//! Random matrices come from `Xoshiro256PlusPlus` seeded through
//! `seed_from_u64` (SplitMix64 expansion), so every sweep is reproducible
//! bit for bit.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::adp::{adp_gemm, AdpConfig, AdpMode, AdpTrace};
use crate::error::{Error, Result};
use crate::matrix::MatrixF64;
use crate::oracle::{abs_product, exact_dot, exact_gemm_pair, native_gemm, ExactScalar};
use crate::EPSILON;

/// Largest exponent parameter whose entries stay normal and finite.
pub const MAX_TEST2_B: u32 = 1022;

/// Slope cap of the Grade-A growth fit: linear growth plus tolerance.
pub const GRADE_A_SLOPE_CAP: f64 = 1.15;

pub fn rng_from_seed(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// One Test-2 pair: `A[k, :] = x^T D P_k`, `B[:, k] = P_k^-1 D^-1 x`.
#[derive(Debug, Clone)]
pub struct Test2Instance {
    pub n: usize,
    pub b: u32,
    pub delta: f64,
    pub x: Vec<f64>,
    /// Exponents `j_i = -b + round(i * delta)`, `i = 0..n`.
    pub j: Vec<i32>,
    pub a: MatrixF64,
    pub b_mat: MatrixF64,
    pub seed: u64,
}

impl Test2Instance {
    /// The exact diagonal `x^T x`, shared by every `(AB)_ii`.
    pub fn exact_diagonal(&self) -> ExactScalar {
        exact_dot(&self.x, &self.x).expect("finite vector")
    }
}

/// `floor(log2 sqrt(overflow)) - ceil(log2 n) - 1`, i.e. `510 - ceil(log2 n)`.
pub fn default_b(n: usize) -> u32 {
    let log2n = if n <= 1 { 0 } else { usize::BITS - (n - 1).leading_zeros() };
    511u32.saturating_sub(log2n + 1)
}

/// Builds a Test-2 pair of order `n` with exponent range `[-b, b]`.
pub fn gen_test2(n: usize, b: u32, seed: u64) -> Result<Test2Instance> {
    if n < 2 {
        return Err(Error::InvalidArgument("Test 2 needs n >= 2".into()));
    }
    if b > MAX_TEST2_B {
        return Err(Error::Range(format!("b = {b} puts entries outside the normal FP64 range (limit {MAX_TEST2_B})")));
    }
    let mut rng = rng_from_seed(seed);
    // Uniform on the open interval (1, 2) over the representable grid.
    let x: Vec<f64> = (0..n).map(|_| 1.0 + rng.random_range(1u64..1u64 << 52) as f64 * EPSILON).collect();
    // round(i * 2b / (n - 1)) in integers, ties away from zero.
    let den = (n - 1) as u64;
    let j: Vec<i32> =
        (0..n as u64).map(|i| -(b as i32) + ((2 * 2 * u64::from(b) * i + den) / (2 * den)) as i32).collect();
    let scaled: Vec<f64> = x.iter().zip(&j).map(|(&v, &e)| libm::ldexp(v, e)).collect();
    let inv: Vec<f64> = x.iter().zip(&j).map(|(&v, &e)| libm::ldexp(v, -e)).collect();
    let a = MatrixF64::from_fn(n, n, |k, c| scaled[(c + k) % n]);
    let b_mat = MatrixF64::from_fn(n, n, |c, k| inv[(c + k) % n]);
    Ok(Test2Instance { n, b, delta: 2.0 * f64::from(b) / (n - 1) as f64, x, j, a, b_mat, seed })
}

/// `rows x cols` entries uniform on the open interval `(lo, hi)`.
pub fn gen_uniform_rect(rows: usize, cols: usize, seed: u64, (lo, hi): (f64, f64)) -> MatrixF64 {
    let mut rng = rng_from_seed(seed);
    MatrixF64::from_fn(rows, cols, |_, _| loop {
        let u: f64 = rng.random();
        let v = lo + (hi - lo) * u;
        if v > lo && v < hi {
            break v;
        }
    })
}

/// Square `n x n` uniform matrix on `(lo, hi)`.
pub fn gen_uniform(n: usize, seed: u64, interval: (f64, f64)) -> MatrixF64 {
    gen_uniform_rect(n, n, seed, interval)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub max_err: f64,
    pub avg_err: f64,
    /// Entries that entered the statistics.
    pub counted: usize,
    /// Entries skipped for a zero reference.
    pub skipped: usize,
    pub argmax: Option<(usize, usize)>,
}

fn check_same_shape(c: &MatrixF64, r: &MatrixF64) -> Result<()> {
    if c.shape() != r.shape() {
        return Err(Error::DimensionMismatch(format!("{}x{} against {}x{}", c.rows(), c.cols(), r.rows(), r.cols())));
    }
    Ok(())
}

/// Relative error of `c` against an exact value.
fn exact_relative_error(c: f64, exact: &ExactScalar) -> Option<f64> {
    if exact.is_zero() {
        return None;
    }
    if !c.is_finite() {
        return Some(f64::INFINITY);
    }
    let diff = exact.sub(&ExactScalar::from_f64(c).expect("finite")).abs();
    Some(diff.to_f64() / exact.abs().to_f64())
}

fn relative_error(c: f64, r: f64) -> Option<f64> {
    if r == 0.0 {
        return None;
    }
    let e = (r - c).abs() / r.abs();
    Some(if e.is_nan() { f64::INFINITY } else { e })
}

/// Componentwise relative errors `e_ij`: against `exact_diag` on the
/// diagonal when given, against `c_ref` elsewhere. Zero references give
/// `None`.
pub fn relative_errors(
    c: &MatrixF64,
    c_ref: &MatrixF64,
    exact_diag: Option<&[ExactScalar]>,
) -> Result<Vec<Option<f64>>> {
    check_same_shape(c, c_ref)?;
    if let Some(d) = exact_diag {
        if d.len() != c.rows().min(c.cols()) {
            return Err(Error::DimensionMismatch(format!("{} exact diagonal entries", d.len())));
        }
    }
    let mut out = Vec::with_capacity(c.rows() * c.cols());
    for i in 0..c.rows() {
        for j in 0..c.cols() {
            out.push(match exact_diag {
                Some(d) if i == j => exact_relative_error(c[(i, j)], &d[i]),
                _ => relative_error(c[(i, j)], c_ref[(i, j)]),
            });
        }
    }
    Ok(out)
}

fn summarize(errors: &[Option<f64>], cols: usize) -> ErrorReport {
    let mut report = ErrorReport { max_err: 0.0, avg_err: 0.0, counted: 0, skipped: 0, argmax: None };
    let mut sum = 0.0;
    for (idx, e) in errors.iter().enumerate() {
        match e {
            Some(e) => {
                report.counted += 1;
                sum += e;
                if report.argmax.is_none() || *e > report.max_err {
                    report.max_err = *e;
                    report.argmax = Some((idx / cols, idx % cols));
                }
            }
            None => report.skipped += 1,
        }
    }
    if report.counted > 0 {
        report.avg_err = sum / report.counted as f64;
    }
    report
}

/// Maximum and mean componentwise relative error; see [`relative_errors`].
pub fn error_report(c: &MatrixF64, c_ref: &MatrixF64, exact_diag: Option<&[ExactScalar]>) -> Result<ErrorReport> {
    let errors = relative_errors(c, c_ref, exact_diag)?;
    Ok(summarize(&errors, c.cols().max(1)))
}

/// Errors against the exact product given as `(hi, lo)` parts.
pub fn error_report_exact(c: &MatrixF64, exact: &(MatrixF64, MatrixF64)) -> Result<ErrorReport> {
    check_same_shape(c, &exact.0)?;
    let errors: Vec<Option<f64>> = c
        .as_slice()
        .iter()
        .zip(exact.0.as_slice().iter().zip(exact.1.as_slice()))
        .map(|(&v, (&hi, &lo))| {
            if hi == 0.0 {
                None
            } else if !v.is_finite() {
                Some(f64::INFINITY)
            } else {
                Some(((v - hi) - lo).abs() / hi.abs())
            }
        })
        .collect();
    Ok(summarize(&errors, c.cols().max(1)))
}

/// `max_ij |c_ij - (AB)_ij| / (eps (|A||B|)_ij)`: the smallest `f(n)` for
/// which the componentwise Grade-A inequality holds. Entries with a zero
/// bound must be exact; otherwise the result is infinite.
pub fn componentwise_bound_ratio(c: &MatrixF64, exact: &(MatrixF64, MatrixF64), abs_prod: &MatrixF64) -> Result<f64> {
    check_same_shape(c, &exact.0)?;
    check_same_shape(c, abs_prod)?;
    let mut worst: f64 = 0.0;
    for ((&v, (&hi, &lo)), &bound) in
        c.as_slice().iter().zip(exact.0.as_slice().iter().zip(exact.1.as_slice())).zip(abs_prod.as_slice())
    {
        let err = ((v - hi) - lo).abs();
        let r = if bound == 0.0 {
            if err == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            err / (EPSILON * bound)
        };
        worst = worst.max(if r.is_nan() { f64::INFINITY } else { r });
    }
    Ok(worst)
}

/// `c` in `f(n) = c n`: the largest `f_obs(n) / n` over a sweep.
pub fn calibrate_linear_constant(ratios: &[(usize, f64)]) -> f64 {
    ratios.iter().map(|&(n, r)| r / n as f64).fold(0.0, f64::max)
}

/// Least-squares fit of `log y = slope * log x + intercept`.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("a fit needs at least two points".into()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::Range("log-log fit needs positive finite data".into()));
    }
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (libm::log(x), libm::log(y))).collect();
    let len = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("a fit needs at least two distinct sizes".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradeReport {
    /// Fitted growth exponent of the maximum error.
    pub slope: f64,
    pub slope_cap: f64,
    /// `c` of the per-point bound `f(n) = c n`, when checked.
    pub bound_constant: Option<f64>,
    /// Sizes whose observed `f(n)` exceeded `c n`.
    pub bound_violations: Vec<usize>,
    pub grade_a_pass: bool,
}

fn check_sweep(sweep: &[(usize, f64)]) -> Result<()> {
    let mut sizes: Vec<usize> = sweep.iter().map(|p| p.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 4 || sizes[sizes.len() - 1] < 8 * sizes[0] {
        return Err(Error::InvalidArgument("Grade-A check needs at least 4 sizes spanning a factor of 8".into()));
    }
    Ok(())
}

/// Grade-A growth check on `(n, max_err)` pairs: passes when the fitted
/// slope is at most [`GRADE_A_SLOPE_CAP`].
pub fn grade_a_check(sweep: &[(usize, f64)]) -> Result<GradeReport> {
    check_sweep(sweep)?;
    let pts: Vec<(f64, f64)> = sweep.iter().map(|&(n, e)| (n as f64, e)).collect();
    let (slope, _) = loglog_fit(&pts)?;
    Ok(GradeReport {
        slope,
        slope_cap: GRADE_A_SLOPE_CAP,
        bound_constant: None,
        bound_violations: Vec::new(),
        grade_a_pass: slope <= GRADE_A_SLOPE_CAP,
    })
}

/// [`grade_a_check`] plus the componentwise bound at every size:
/// `bound_ratios` holds `(n, f_obs(n))` from [`componentwise_bound_ratio`]
/// and each must satisfy `f_obs(n) <= c n`.
pub fn grade_a_check_bounded(sweep: &[(usize, f64)], bound_ratios: &[(usize, f64)], c: f64) -> Result<GradeReport> {
    let mut report = grade_a_check(sweep)?;
    report.bound_constant = Some(c);
    report.bound_violations =
        bound_ratios.iter().filter(|&&(n, r)| r.is_nan() || r > c * n as f64).map(|p| p.0).collect();
    report.grade_a_pass &= report.bound_violations.is_empty();
    Ok(report)
}

pub fn mode_label(mode: AdpMode) -> String {
    match mode {
        AdpMode::Auto => "auto".into(),
        AdpMode::ForceEmulate(s) => format!("emulate:{s}"),
        AdpMode::ForceNative => "native".into(),
    }
}

/// One line of sweep output.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub test: String,
    pub n: usize,
    pub b: Option<u32>,
    pub mode: String,
    pub target_bits: u32,
    pub esc_bits: Option<u32>,
    pub slices: Option<usize>,
    pub fallback: bool,
    pub max_err: f64,
    pub avg_err: f64,
    pub seed: u64,
}

pub const SWEEP_CSV_HEADER: &str = "test,n,b,mode,target_bits,esc_bits,slices,fallback,max_err,avg_err,seed";

fn opt<T: core::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

impl SweepRow {
    fn from_trace(
        test: &str,
        b: Option<u32>,
        mode: AdpMode,
        trace: &AdpTrace,
        config: &AdpConfig,
        err: &ErrorReport,
        seed: u64,
    ) -> Self {
        Self {
            test: test.into(),
            n: trace.n,
            b,
            mode: mode_label(mode),
            target_bits: config.target_mantissa_bits,
            esc_bits: trace.esc_bits(),
            slices: trace.slices(),
            fallback: trace.slices().is_none(),
            max_err: err.max_err,
            avg_err: err.avg_err,
            seed,
        }
    }

    /// Bits the exponent span asks for, `target + esc`.
    pub fn required_bits(&self) -> Option<u32> {
        self.esc_bits.map(|e| self.target_bits + e)
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:e},{:e},{}",
            self.test,
            self.n,
            opt(self.b),
            self.mode,
            self.target_bits,
            opt(self.esc_bits),
            opt(self.slices),
            self.fallback,
            self.max_err,
            self.avg_err,
            self.seed
        )
    }
}

/// Errors of one Test-2 product: exact `x^T x` on the diagonal and a
/// native FP64 reference elsewhere.
pub fn test2_error(inst: &Test2Instance, c: &MatrixF64, c_ref: &MatrixF64) -> Result<ErrorReport> {
    let d = inst.exact_diagonal();
    let diag = alloc::vec![d; inst.n];
    error_report(c, c_ref, Some(&diag))
}

/// Test-2 sweep over `bs` and `modes`: one row per pair.
pub fn run_test2_sweep(
    n: usize,
    bs: &[u32],
    modes: &[AdpMode],
    seed: u64,
    config: &AdpConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(bs.len() * modes.len());
    for &b in bs {
        let inst = gen_test2(n, b, seed)?;
        let c_ref = native_gemm(&inst.a, &inst.b_mat, 1.0, 0.0, None)?;
        for &mode in modes {
            let cfg = config.with_mode(mode);
            let (c, trace) = adp_gemm(&inst.a, &inst.b_mat, 1.0, 0.0, None, &cfg)?;
            let err = test2_error(&inst, &c, &c_ref)?;
            rows.push(SweepRow::from_trace("test2", Some(b), mode, &trace, &cfg, &err, seed));
        }
    }
    Ok(rows)
}

/// Measurements of one uniform-matrix product.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformPoint {
    pub row: SweepRow,
    /// Errors against the native FP64 product.
    pub vs_native: ErrorReport,
    /// Errors against the exact product.
    pub vs_exact: ErrorReport,
    /// Observed `f(n)` of the componentwise bound.
    pub bound_ratio: f64,
}

/// Uniform `(0, 1)` sweep over sizes, modes and seeds. Each row's
/// `max_err`/`avg_err` are measured against the native FP64 product; the
/// exact-reference figures are returned alongside.
pub fn run_uniform_sweep(
    sizes: &[usize],
    modes: &[AdpMode],
    seeds: &[u64],
    config: &AdpConfig,
) -> Result<Vec<UniformPoint>> {
    let mut out = Vec::new();
    for &n in sizes {
        for &seed in seeds {
            let a = gen_uniform(n, seed, (0.0, 1.0));
            let b = gen_uniform(n, seed ^ 0x9E37_79B9_7F4A_7C15, (0.0, 1.0));
            let c_ref = native_gemm(&a, &b, 1.0, 0.0, None)?;
            let exact = exact_gemm_pair(&a, &b)?;
            let abs = abs_product(&a, &b)?;
            for &mode in modes {
                let cfg = config.with_mode(mode);
                let (c, trace) = adp_gemm(&a, &b, 1.0, 0.0, None, &cfg)?;
                let vs_native = error_report(&c, &c_ref, None)?;
                let vs_exact = error_report_exact(&c, &exact)?;
                let bound_ratio = componentwise_bound_ratio(&c, &exact, &abs)?;
                let row = SweepRow::from_trace("uniform", None, mode, &trace, &cfg, &vs_native, seed);
                out.push(UniformPoint { row, vs_native, vs_exact, bound_ratio });
            }
        }
    }
    Ok(out)
}
