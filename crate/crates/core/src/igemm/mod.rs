//! Emulated FP64 GEMM from int8 slice products.
//!
//! For every admitted pair of planes `(da, db)` the integer product of
//! plane `da` of the left operand and plane `db` of the right operand is
//! accumulated into diagonal `D = da + db`. Per output element the
//! diagonals are then combined exactly into one wide integer and rounded
//! to FP64 once.

mod kernel;

pub use kernel::Backend;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fpbits;
use crate::matrix::{MatrixF64, Orientation};
use crate::oracle::{apply_scalars, for_each_row};
use crate::slicing::{decompose, SlicedMatrix};
use kernel::{block_product, PackedA, PackedB, GROUP, MR, NR};

/// Default inner-dimension chunk for 32-bit accumulation.
pub const DEFAULT_CHUNK_LEN: usize = 65536;

/// Largest digit product magnitude, `(-128) * (-128)`.
const MAX_DIGIT_PRODUCT: usize = 16384;

/// Rows of output handled by one parallel task.
const TASK_ROWS: usize = 8 * MR;

/// Which slice pairs take part in the product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PairPolicy {
    /// All `s^2` pairs.
    #[default]
    Full,
    /// Only pairs with `da + db <= limit`. Experimental: drops low-order
    /// terms, so the accuracy guarantee no longer holds.
    DiagonalTruncated(usize),
}

impl PairPolicy {
    #[inline]
    pub fn admits(self, da: usize, db: usize) -> bool {
        match self {
            PairPolicy::Full => true,
            PairPolicy::DiagonalTruncated(limit) => da + db <= limit,
        }
    }
}

/// Scalars and slicing parameters of one emulated GEMM call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GemmParams {
    pub alpha: f64,
    pub beta: f64,
    pub slice_count: usize,
    pub chunk_len: usize,
    pub pair_policy: PairPolicy,
}

impl GemmParams {
    /// `C = A B` with `s` slices and the full pair set.
    pub fn new(slice_count: usize) -> Self {
        Self { alpha: 1.0, beta: 0.0, slice_count, chunk_len: DEFAULT_CHUNK_LEN, pair_policy: PairPolicy::Full }
    }

    pub fn with_scalars(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }

    pub fn with_chunk_len(mut self, chunk_len: usize) -> Self {
        self.chunk_len = chunk_len;
        self
    }

    pub fn with_pair_policy(mut self, policy: PairPolicy) -> Self {
        self.pair_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.slice_count == 0 {
            return Err(Error::InvalidArgument("slice count must be at least 1".into()));
        }
        if self.chunk_len == 0 || self.chunk_len.saturating_mul(MAX_DIGIT_PRODUCT) >= 1 << 31 {
            return Err(Error::InvalidArgument(format!(
                "chunk_len {} must be positive with chunk_len * 16384 < 2^31",
                self.chunk_len
            )));
        }
        Ok(())
    }

    /// Chunk length in packed groups of four. Chunks are rounded down to a
    /// whole number of groups, at least one; the result does not depend on
    /// chunking since every chunk sum is exact.
    fn chunk_groups(&self) -> usize {
        (self.chunk_len.min(DEFAULT_CHUNK_LEN) / GROUP).max(1)
    }
}

/// Per-element 64-bit sums of every slice diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagonalAccumulators {
    rows: usize,
    cols: usize,
    diagonals: usize,
    chunk_len: usize,
    /// `[D][i][j]`.
    data: Vec<i64>,
}

impl DiagonalAccumulators {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of diagonals, `2s - 1`.
    pub fn diagonals(&self) -> usize {
        self.diagonals
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    #[inline]
    pub fn get(&self, d: usize, i: usize, j: usize) -> i64 {
        self.data[(d * self.rows + i) * self.cols + j]
    }

    /// Diagonal `d` as a row-major `rows x cols` array.
    pub fn diagonal(&self, d: usize) -> &[i64] {
        let n = self.rows * self.cols;
        &self.data[d * n..(d + 1) * n]
    }
}

fn check_operands(sa: &SlicedMatrix, sb: &SlicedMatrix, params: &GemmParams) -> Result<()> {
    params.validate()?;
    if sa.orientation() != Orientation::ByRow || sb.orientation() != Orientation::ByColumn {
        return Err(Error::InvalidArgument("left operand must be sliced by row and right operand by column".into()));
    }
    if sa.slice_count() != sb.slice_count() {
        return Err(Error::SliceCountMismatch { left: sa.slice_count(), right: sb.slice_count() });
    }
    if sa.slice_count() != params.slice_count {
        return Err(Error::SliceCountMismatch { left: sa.slice_count(), right: params.slice_count });
    }
    if sa.line_len() != sb.line_len() {
        return Err(Error::DimensionMismatch(format!("inner dimensions {} and {}", sa.line_len(), sb.line_len())));
    }
    Ok(())
}

/// Packed operands plus the pair list, shared by all tiles.
struct Plan {
    backend: Backend,
    s: usize,
    m: usize,
    n: usize,
    pa: PackedA,
    pb: PackedB,
    pairs: Vec<(usize, usize)>,
}

impl Plan {
    fn new(sa: &SlicedMatrix, sb: &SlicedMatrix, params: &GemmParams, backend: Backend) -> Self {
        let s = sa.slice_count();
        let k = sa.line_len();
        let (m, n) = (sa.lines(), sb.lines());
        let all_a: Vec<i8> = (0..s).flat_map(|d| sa.plane(d).iter().copied()).collect();
        let all_b: Vec<i8> = (0..s).flat_map(|d| sb.plane(d).iter().copied()).collect();
        let pa = PackedA::new(&all_a, s, m, k);
        let pb = PackedB::new(&all_b, s, n, k, params.chunk_groups());
        let pairs = (0..s)
            .flat_map(|da| (0..s).map(move |db| (da, db)))
            .filter(|&(da, db)| params.pair_policy.admits(da, db))
            .collect();
        Self { backend, s, m, n, pa, pb, pairs }
    }

    fn diagonals(&self) -> usize {
        2 * self.s - 1
    }

    /// Diagonal sums of micro-tile `(p, q)`: `acc[D * MR * NR + r * NR + c]`.
    fn micro_tile(&self, p: usize, q: usize, acc: &mut [i64], scratch: &mut [i32; MR * NR]) {
        acc.fill(0);
        let groups = self.pb.groups;
        let cg = self.pb.chunk_groups;
        for &(da, db) in &self.pairs {
            let a = self.pa.panel(da, p);
            let b = self.pb.panel(db, q);
            let dst = &mut acc[(da + db) * MR * NR..(da + db + 1) * MR * NR];
            let mut g0 = 0;
            let mut chunk = 0;
            while g0 < groups {
                let g1 = (g0 + cg).min(groups);
                block_product(self.backend, a, b, g0, g1, self.pb.colsum(db, q, chunk), scratch);
                for (x, &y) in dst.iter_mut().zip(scratch.iter()) {
                    *x += i64::from(y);
                }
                g0 = g1;
                chunk += 1;
            }
        }
    }

    /// Runs `f(p, q, acc)` for every micro-tile whose rows fall in
    /// `rows0..rows0 + rows`.
    fn for_tiles_in(&self, rows0: usize, rows: usize, mut f: impl FnMut(usize, usize, &[i64])) {
        let mut acc = vec![0i64; self.diagonals() * MR * NR];
        let mut scratch = [0i32; MR * NR];
        let p0 = rows0 / MR;
        let p1 = (rows0 + rows).div_ceil(MR);
        for q in 0..self.pb.panels {
            for p in p0..p1 {
                self.micro_tile(p, q, &mut acc, &mut scratch);
                f(p, q, &acc);
            }
        }
    }
}

/// Integer products of all admitted slice pairs, summed per diagonal.
pub fn slice_pair_mm(sa: &SlicedMatrix, sb: &SlicedMatrix, params: &GemmParams) -> Result<DiagonalAccumulators> {
    slice_pair_mm_on(Backend::detect(), sa, sb, params)
}

/// [`slice_pair_mm`] on an explicit backend.
pub fn slice_pair_mm_on(
    backend: Backend,
    sa: &SlicedMatrix,
    sb: &SlicedMatrix,
    params: &GemmParams,
) -> Result<DiagonalAccumulators> {
    check_operands(sa, sb, params)?;
    check_backend(backend)?;
    let plan = Plan::new(sa, sb, params, backend);
    let (m, n, nd) = (plan.m, plan.n, plan.diagonals());
    let mut data = vec![0i64; nd * m * n];
    if m > 0 && n > 0 {
        plan.for_tiles_in(0, m, |p, q, acc| {
            for d in 0..nd {
                for r in 0..MR.min(m - p * MR) {
                    for c in 0..NR.min(n - q * NR) {
                        data[(d * m + p * MR + r) * n + q * NR + c] = acc[d * MR * NR + r * NR + c];
                    }
                }
            }
        });
    }
    Ok(DiagonalAccumulators { rows: m, cols: n, diagonals: nd, chunk_len: params.chunk_len, data })
}

/// Exact combination of diagonal sums, rounded once to FP64, followed by
/// `alpha * P + beta * C` in FP64.
///
/// `ea` and `eb` are the row scales of the left and column scales of the
/// right operand.
pub fn recompose(
    acc: &DiagonalAccumulators,
    ea: &[i32],
    eb: &[i32],
    params: &GemmParams,
    c: Option<&MatrixF64>,
) -> Result<MatrixF64> {
    if ea.len() != acc.rows || eb.len() != acc.cols {
        return Err(Error::DimensionMismatch(format!(
            "{} row scales and {} column scales for a {}x{} product",
            ea.len(),
            eb.len(),
            acc.rows,
            acc.cols
        )));
    }
    let nd = acc.diagonals;
    let mut wide = WideInt::for_diagonals(nd);
    let mut out = MatrixF64::zeros(acc.rows, acc.cols);
    for i in 0..acc.rows {
        for j in 0..acc.cols {
            let exp = element_exponent(ea[i], eb[j], nd);
            out[(i, j)] = wide.combine_round((0..nd).map(|d| acc.get(d, i, j)), exp);
        }
    }
    apply_scalars(out, params.alpha, params.beta, c)
}

/// Binary exponent of the least significant diagonal's unit.
#[inline]
fn element_exponent(ea: i32, eb: i32, diagonals: usize) -> i64 {
    i64::from(ea) + i64::from(eb) - 14 - 8 * (diagonals as i64 - 1)
}

/// `alpha * A B + beta * C` through `s`-slice emulation.
///
/// Deterministic: the output does not depend on thread count, chunking or
/// backend.
pub fn emulated_gemm(a: &MatrixF64, b: &MatrixF64, params: &GemmParams, c: Option<&MatrixF64>) -> Result<MatrixF64> {
    emulated_gemm_on(Backend::detect(), a, b, params, c)
}

/// [`emulated_gemm`] on an explicit backend.
pub fn emulated_gemm_on(
    backend: Backend,
    a: &MatrixF64,
    b: &MatrixF64,
    params: &GemmParams,
    c: Option<&MatrixF64>,
) -> Result<MatrixF64> {
    params.validate()?;
    if a.cols() != b.rows() {
        return Err(Error::DimensionMismatch(format!("{}x{} times {}x{}", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    let sa = decompose(a, Orientation::ByRow, params.slice_count)?;
    let sb = decompose(b, Orientation::ByColumn, params.slice_count)?;
    emulated_gemm_sliced_on(backend, &sa, &sb, params, c)
}

/// Emulated GEMM from already sliced operands.
pub fn emulated_gemm_sliced(
    sa: &SlicedMatrix,
    sb: &SlicedMatrix,
    params: &GemmParams,
    c: Option<&MatrixF64>,
) -> Result<MatrixF64> {
    emulated_gemm_sliced_on(Backend::detect(), sa, sb, params, c)
}

fn check_backend(backend: Backend) -> Result<()> {
    if backend.is_available() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("backend {backend:?} is not available on this machine")))
    }
}

fn emulated_gemm_sliced_on(
    backend: Backend,
    sa: &SlicedMatrix,
    sb: &SlicedMatrix,
    params: &GemmParams,
    c: Option<&MatrixF64>,
) -> Result<MatrixF64> {
    check_operands(sa, sb, params)?;
    check_backend(backend)?;
    let plan = Plan::new(sa, sb, params, backend);
    let (m, n, nd) = (plan.m, plan.n, plan.diagonals());
    let (ea, eb) = (sa.scale_exp(), sb.scale_exp());
    let mut out = MatrixF64::zeros(m, n);
    if n > 0 {
        let plan = &plan;
        for_each_row(out.as_mut_slice(), TASK_ROWS * n, |task, block: &mut [f64]| {
            let rows0 = task * TASK_ROWS;
            let rows = block.len() / n;
            let mut wide = WideInt::for_diagonals(nd);
            plan.for_tiles_in(rows0, rows, |p, q, acc| {
                let r_end = MR.min(m - p * MR);
                for r in 0..r_end {
                    let i = p * MR + r;
                    for cc in 0..NR.min(n - q * NR) {
                        let j = q * NR + cc;
                        let exp = element_exponent(ea[i], eb[j], nd);
                        let at = r * NR + cc;
                        block[(i - rows0) * n + j] = wide.combine_round((0..nd).map(|d| acc[d * MR * NR + at]), exp);
                    }
                }
            });
        });
    }
    apply_scalars(out, params.alpha, params.beta, c)
}

/// Fixed-width two's complement integer for combining diagonals.
struct WideInt {
    limbs: Vec<u64>,
}

impl WideInt {
    /// Wide enough for `sum acc_D * 2^(8 (nd - 1 - D))` with every
    /// `|acc_D| < 2^63`.
    fn for_diagonals(nd: usize) -> Self {
        let bits = 8 * nd + 64 + 2;
        Self { limbs: vec![0; bits.div_ceil(64)] }
    }

    #[inline]
    fn shl8_add(&mut self, v: i64) {
        let mut carry_in = 0u64;
        for l in self.limbs.iter_mut() {
            let x = *l;
            *l = (x << 8) | carry_in;
            carry_in = x >> 56;
        }
        let ext = if v < 0 { u64::MAX } else { 0 };
        let (r, mut carry) = self.limbs[0].overflowing_add(v as u64);
        self.limbs[0] = r;
        for l in self.limbs[1..].iter_mut() {
            let (r1, c1) = l.overflowing_add(ext);
            let (r2, c2) = r1.overflowing_add(u64::from(carry));
            *l = r2;
            carry = c1 || c2;
        }
    }

    /// 64 bits starting at bit `pos` (zero above the top).
    #[inline]
    fn bits_at(&self, pos: usize) -> u64 {
        let (w, o) = (pos / 64, pos % 64);
        let lo = self.limbs.get(w).copied().unwrap_or(0) >> o;
        let hi = if o == 0 { 0 } else { self.limbs.get(w + 1).copied().unwrap_or(0) << (64 - o) };
        lo | hi
    }

    /// Horner combination of `diagonals` (most significant first), then
    /// one correctly rounded conversion of `S * 2^exp`.
    fn combine_round(&mut self, diagonals: impl Iterator<Item = i64>, exp: i64) -> f64 {
        self.limbs.fill(0);
        for v in diagonals {
            self.shl8_add(v);
        }
        let negative = self.limbs.last().is_some_and(|&t| t >> 63 == 1);
        if negative {
            let mut carry = true;
            for l in self.limbs.iter_mut() {
                let (r, c) = (!*l).overflowing_add(u64::from(carry));
                *l = r;
                carry = c;
            }
        }
        let Some(top) = self.limbs.iter().rposition(|&l| l != 0) else {
            return 0.0;
        };
        let len = 64 * top + 64 - self.limbs[top].leading_zeros() as usize;
        if len <= 128 {
            let mag = u128::from(self.bits_at(0)) | (u128::from(self.bits_at(64)) << 64);
            return fpbits::round_scaled_u128(negative, mag, exp);
        }
        let shift = len - 128;
        let mut window = u128::from(self.bits_at(shift)) | (u128::from(self.bits_at(shift + 64)) << 64);
        let below_nonzero = self.limbs[..shift / 64].iter().any(|&l| l != 0)
            || (!shift.is_multiple_of(64) && self.limbs[shift / 64] & ((1u64 << (shift % 64)) - 1) != 0);
        if below_nonzero {
            window |= 1;
        }
        fpbits::round_scaled_u128(negative, window, exp + shift as i64)
    }
}
