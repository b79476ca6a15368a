//! Bit-level IEEE-754 binary64 utilities.
//!
//! Everything here works on the raw bit fields; no floating logarithms or
//! scaling multiplications are used, so results are exact for normals and
//! denormals alike.

use alloc::vec;
use alloc::vec::Vec;
use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::matrix::{MatrixF64, Orientation};

const EXP_MASK: u64 = 0x7FF0_0000_0000_0000;
const FRAC_MASK: u64 = 0x000F_FFFF_FFFF_FFFF;
const SIGN_MASK: u64 = 0x8000_0000_0000_0000;
const HIDDEN_BIT: u64 = 1 << 52;

/// Exponent recorded for blocks and lines that contain only zeros.
///
/// Far below any real Hadamard exponent (FP64 products lie in about
/// [-2148, 2048]) so that sums involving it never collide with real values.
pub const NEG_SENTINEL: i32 = -1_000_000;

/// Exponent of the least significant bit of the smallest denormal.
pub const MIN_LSB_EXP: i32 = -1074;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FloatKind {
    Zero,
    Denormal,
    Normal,
    Inf,
    NaN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FloatClass {
    pub kind: FloatKind,
    pub negative: bool,
}

/// Classifies `v` from its bit pattern.
pub fn float_class(v: f64) -> FloatClass {
    let bits = v.to_bits();
    let negative = bits & SIGN_MASK != 0;
    let exp = bits & EXP_MASK;
    let frac = bits & FRAC_MASK;
    let kind = match (exp, frac) {
        (0, 0) => FloatKind::Zero,
        (0, _) => FloatKind::Denormal,
        (EXP_MASK, 0) => FloatKind::Inf,
        (EXP_MASK, _) => FloatKind::NaN,
        _ => FloatKind::Normal,
    };
    FloatClass { kind, negative }
}

/// `floor(log2 |v|)` for finite nonzero `v`, or `None` for zero, Inf and NaN.
///
/// Denormals report the exponent of their leading set bit, not the raw
/// biased field, so `2^e <= |v| < 2^(e+1)` holds across gradual underflow.
#[inline]
pub fn effective_exponent(v: f64) -> Option<i32> {
    let bits = v.to_bits();
    let biased = ((bits & EXP_MASK) >> 52) as i32;
    let frac = bits & FRAC_MASK;
    match biased {
        0x7FF => None,
        0 if frac == 0 => None,
        0 => Some(MIN_LSB_EXP + 63 - frac.leading_zeros() as i32),
        _ => Some(biased - 1023),
    }
}

/// Like [`effective_exponent`] but maps zero to [`NEG_SENTINEL`].
///
/// Callers guarantee `v` is finite.
#[inline]
pub(crate) fn exponent_or_sentinel(v: f64) -> i32 {
    effective_exponent(v).unwrap_or(NEG_SENTINEL)
}

/// Splits a finite `v` into `(negative, mantissa, lsb_exponent)` with
/// `|v| = mantissa * 2^lsb_exponent` and `mantissa < 2^53`.
///
/// Zero (of either sign) yields a zero mantissa. Non-finite input is a
/// contract violation and panics in debug builds.
#[inline]
pub fn decode(v: f64) -> (bool, u64, i32) {
    let bits = v.to_bits();
    let negative = bits & SIGN_MASK != 0;
    let biased = ((bits & EXP_MASK) >> 52) as i32;
    let frac = bits & FRAC_MASK;
    debug_assert!(biased != 0x7FF, "decode of non-finite value");
    if biased == 0 {
        (negative, frac, MIN_LSB_EXP)
    } else {
        (negative, frac | HIDDEN_BIT, biased - 1075)
    }
}

/// Correctly rounded (ties-to-even) FP64 value of `±mag * 2^exp`.
///
/// Overflow gives a signed infinity; underflow rounds into the denormal
/// range and may give a signed zero.
pub fn round_scaled_u128(negative: bool, mag: u128, exp: i64) -> f64 {
    let sign = if negative { SIGN_MASK } else { 0 };
    if mag == 0 {
        return f64::from_bits(sign);
    }
    let len = 128 - i64::from(mag.leading_zeros());
    let top = exp + len - 1;
    if top > 1023 {
        return f64::from_bits(sign | EXP_MASK);
    }
    let lsb = (top - 52).max(i64::from(MIN_LSB_EXP));
    let mut kept: u128;
    if exp >= lsb {
        kept = mag << (exp - lsb);
    } else {
        let sh = lsb - exp;
        let (k, half, sticky) = if sh > 128 {
            (0, false, true)
        } else if sh == 128 {
            (0, mag >> 127 != 0, mag & !(1u128 << 127) != 0)
        } else {
            let s = sh as u32;
            let k = mag >> s;
            let half = (mag >> (s - 1)) & 1 == 1;
            let sticky = s > 1 && mag & ((1u128 << (s - 1)) - 1) != 0;
            (k, half, sticky)
        };
        kept = k;
        if half && (sticky || kept & 1 == 1) {
            kept += 1;
        }
    }
    let mut q = lsb;
    if kept == 1u128 << 53 {
        kept >>= 1;
        q += 1;
    }
    if kept == 0 {
        return f64::from_bits(sign);
    }
    let kept = kept as u64;
    if q == i64::from(MIN_LSB_EXP) {
        // Denormal, or the smallest normal binade where the hidden bit lands
        // exactly in the exponent field.
        return f64::from_bits(sign | kept);
    }
    let biased = q + 1075;
    if biased >= 0x7FF {
        return f64::from_bits(sign | EXP_MASK);
    }
    f64::from_bits(sign | ((biased as u64) << 52) | (kept - HIDDEN_BIT))
}

/// [`round_scaled_u128`] for magnitudes of arbitrary width.
pub fn round_scaled_big(negative: bool, mag: &BigUint, exp: i64) -> f64 {
    let bits = mag.bits();
    if bits <= 128 {
        let digits = mag.to_u64_digits();
        let lo = digits.first().copied().unwrap_or(0) as u128;
        let hi = digits.get(1).copied().unwrap_or(0) as u128;
        return round_scaled_u128(negative, lo | (hi << 64), exp);
    }
    let shift = bits - 128;
    let top: BigUint = mag >> shift;
    let digits = top.to_u64_digits();
    let mut window = digits[0] as u128 | ((digits[1] as u128) << 64);
    // Bits below the window only matter as a sticky flag.
    if mag.trailing_zeros().unwrap_or(0) < shift {
        window |= 1;
    }
    round_scaled_u128(negative, window, exp + shift as i64)
}

/// Exceptional-value census of a matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanReport {
    pub nan_count: usize,
    pub inf_count: usize,
    pub negzero_count: usize,
    pub has_exceptional: bool,
}

/// Counts NaN, Inf and negative-zero entries in one pass.
pub fn scan_matrix(m: &MatrixF64) -> ScanReport {
    let mut report = ScanReport::default();
    for &v in m.as_slice() {
        let bits = v.to_bits();
        if bits & EXP_MASK == EXP_MASK {
            if bits & FRAC_MASK == 0 {
                report.inf_count += 1;
            } else {
                report.nan_count += 1;
            }
        } else if bits == SIGN_MASK {
            report.negzero_count += 1;
        }
    }
    report.has_exceptional = report.nan_count + report.inf_count > 0;
    report
}

/// Per-line, per-block exponent extremes used by the coarsened span estimate.
///
/// Zeros are excluded from `max_exp`/`min_exp`; a block made only of zeros
/// stores [`NEG_SENTINEL`] in both. Blocks that mix zeros with nonzeros set
/// `has_zero`, since their minimum does not bound the exponent of every
/// position in the block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStats {
    pub orientation: Orientation,
    pub block_len: usize,
    pub lines: usize,
    pub line_len: usize,
    pub blocks_per_line: usize,
    /// `lines * blocks_per_line`, line-major.
    pub max_exp: Vec<i32>,
    pub min_exp: Vec<i32>,
    pub has_zero: Vec<bool>,
    pub line_max_exp: Vec<i32>,
}

impl BlockStats {
    #[inline]
    pub fn block(&self, line: usize, block: usize) -> (i32, i32) {
        let idx = line * self.blocks_per_line + block;
        (self.max_exp[idx], self.min_exp[idx])
    }
}

/// Computes per-block exponent maxima and minima along each line.
///
/// Lines are rows for [`Orientation::ByRow`] and columns for
/// [`Orientation::ByColumn`]; each line of length `k` is cut into
/// `ceil(k / block_len)` blocks, the last one possibly short. Entries must be
/// finite.
pub fn block_exponent_stats(m: &MatrixF64, orientation: Orientation, block_len: usize) -> Result<BlockStats> {
    if block_len == 0 {
        return Err(Error::InvalidArgument("block length must be at least 1".into()));
    }
    let lines = m.lines(orientation);
    let line_len = m.line_len(orientation);
    let blocks_per_line = line_len.div_ceil(block_len);
    let total = lines * blocks_per_line;
    let mut stats = BlockStats {
        orientation,
        block_len,
        lines,
        line_len,
        blocks_per_line,
        max_exp: vec![NEG_SENTINEL; total],
        min_exp: vec![NEG_SENTINEL; total],
        has_zero: vec![false; total],
        line_max_exp: vec![NEG_SENTINEL; lines],
    };
    let mut visit = |line: usize, pos: usize, v: f64| {
        let idx = line * blocks_per_line + pos / block_len;
        match effective_exponent(v) {
            Some(e) => {
                let (mx, mn) = (&mut stats.max_exp[idx], &mut stats.min_exp[idx]);
                if *mx == NEG_SENTINEL {
                    *mx = e;
                    *mn = e;
                } else {
                    *mx = (*mx).max(e);
                    *mn = (*mn).min(e);
                }
                let lm = &mut stats.line_max_exp[line];
                *lm = (*lm).max(e);
            }
            None => {
                debug_assert!(v == 0.0, "block statistics of a non-finite value");
                stats.has_zero[idx] = true;
            }
        }
    };
    // Walk memory in row-major order in both orientations.
    for i in 0..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            match orientation {
                Orientation::ByRow => visit(i, j, v),
                Orientation::ByColumn => visit(j, i, v),
            }
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_examples() {
        assert_eq!(float_class(1.0), FloatClass { kind: FloatKind::Normal, negative: false });
        assert_eq!(float_class(-0.0), FloatClass { kind: FloatKind::Zero, negative: true });
        assert_eq!(float_class(f64::from_bits(0x7FF0_0000_0000_0001)).kind, FloatKind::NaN);
        assert_eq!(float_class(f64::NEG_INFINITY), FloatClass { kind: FloatKind::Inf, negative: true });
        assert_eq!(float_class(f64::from_bits(1)).kind, FloatKind::Denormal);
    }

    #[test]
    fn effective_exponent_examples() {
        assert_eq!(effective_exponent(1.0), Some(0));
        assert_eq!(effective_exponent(0.75), Some(-1));
        assert_eq!(effective_exponent(f64::from_bits(1)), Some(-1074));
        assert_eq!(effective_exponent(f64::MIN_POSITIVE), Some(-1022));
        assert_eq!(effective_exponent(f64::MAX), Some(1023));
        assert_eq!(effective_exponent(-3.0), Some(1));
        assert_eq!(effective_exponent(0.0), None);
        assert_eq!(effective_exponent(f64::NAN), None);
        assert_eq!(effective_exponent(f64::INFINITY), None);
    }

    #[test]
    fn decode_reassembles() {
        for v in [1.0, -0.75, 3.0e-310, f64::MAX, f64::from_bits(1), 12345.678] {
            let (neg, m, e) = decode(v);
            let back = round_scaled_u128(neg, m as u128, e as i64);
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn rounding_matches_integer_conversion() {
        // u64 -> f64 casts round to nearest even: an independent reference.
        let cases = [(1u64 << 53) + 1, (1u64 << 53) + 3, u64::MAX, 0x1234_5678_9ABC_DEF1, (1u64 << 54) + 2];
        for c in cases {
            assert_eq!(round_scaled_u128(false, c as u128, 0), c as f64, "{c}");
            assert_eq!(round_scaled_u128(true, c as u128, 0), -(c as f64));
        }
        let wide = (1u128 << 100) + (1u128 << 47) + 1;
        assert_eq!(round_scaled_u128(false, wide, -10), (wide as f64) / 1024.0);
    }

    #[test]
    fn rounding_handles_range_ends() {
        assert_eq!(round_scaled_u128(false, 1, 1024), f64::INFINITY);
        assert_eq!(round_scaled_u128(true, 1, 1024), f64::NEG_INFINITY);
        assert_eq!(round_scaled_u128(false, (1 << 53) - 1, 971), f64::MAX);
        // Halfway between MAX and 2^1024 rounds up to infinity.
        assert_eq!(round_scaled_u128(false, (1 << 54) - 1, 970), f64::INFINITY);
        assert_eq!(round_scaled_u128(false, 1, -1074), f64::from_bits(1));
        // Exactly half the smallest denormal ties to even (zero).
        assert_eq!(round_scaled_u128(false, 1, -1075), 0.0);
        assert_eq!(round_scaled_u128(false, 3, -1076), f64::from_bits(1));
        assert_eq!(round_scaled_u128(false, 3, -1075), f64::from_bits(2));
        assert_eq!(round_scaled_u128(false, 1, -2000), 0.0);
        assert!(round_scaled_u128(true, 1, -2000).is_sign_negative());
    }

    #[test]
    fn big_rounding_uses_sticky_bits() {
        // 2^200 + 2^147 + 1: the 2^147 bit is exactly half an ulp; the
        // trailing 1 breaks the tie upward.
        let one = BigUint::from(1u32);
        let v = (&one << 200u32) + (&one << 147u32) + &one;
        let r = round_scaled_big(false, &v, -200);
        assert_eq!(r, 1.0 + f64::EPSILON);
        let tie = (&one << 200u32) + (&one << 147u32);
        assert_eq!(round_scaled_big(false, &tie, -200), 1.0);
    }

    #[test]
    fn scan_counts() {
        let clean = MatrixF64::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(scan_matrix(&clean), ScanReport::default());
        let dirty = MatrixF64::from_rows(&[[1.0, f64::NAN], [f64::INFINITY, -0.0]]);
        assert_eq!(
            scan_matrix(&dirty),
            ScanReport { nan_count: 1, inf_count: 1, negzero_count: 1, has_exceptional: true }
        );
    }

    #[test]
    fn block_stats_example() {
        let m = MatrixF64::from_rows(&[[32.0, 0.125, 0.0, 32.0]]);
        let s = block_exponent_stats(&m, Orientation::ByRow, 2).unwrap();
        assert_eq!(s.blocks_per_line, 2);
        assert_eq!(s.block(0, 0), (5, -3));
        assert_eq!(s.block(0, 1), (5, 5));
        assert_eq!(s.has_zero, [false, true]);
        assert_eq!(s.line_max_exp, [5]);
    }

    #[test]
    fn block_stats_zero_line_and_degenerate_block() {
        let m = MatrixF64::from_rows(&[[0.0, 0.0, 0.0], [1.0, 4.0, 0.5]]);
        let s = block_exponent_stats(&m, Orientation::ByRow, 2).unwrap();
        assert_eq!(s.block(0, 0), (NEG_SENTINEL, NEG_SENTINEL));
        assert_eq!(s.block(0, 1), (NEG_SENTINEL, NEG_SENTINEL));
        assert_eq!(s.line_max_exp[0], NEG_SENTINEL);
        let whole = block_exponent_stats(&m, Orientation::ByRow, 10).unwrap();
        assert_eq!(whole.blocks_per_line, 1);
        assert_eq!(whole.block(1, 0), (2, -1));
        assert!(block_exponent_stats(&m, Orientation::ByRow, 0).is_err());
    }

    #[test]
    fn block_stats_by_column() {
        let m = MatrixF64::from_rows(&[[1.0, 8.0], [2.0, 0.0], [0.25, 0.0]]);
        let s = block_exponent_stats(&m, Orientation::ByColumn, 2).unwrap();
        assert_eq!(s.lines, 2);
        assert_eq!(s.block(0, 0), (1, 0));
        assert_eq!(s.block(0, 1), (-2, -2));
        assert_eq!(s.block(1, 0), (3, 3));
        assert_eq!(s.block(1, 1), (NEG_SENTINEL, NEG_SENTINEL));
        assert_eq!(s.line_max_exp, [1, 3]);
    }
}
