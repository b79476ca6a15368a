//! Fixed-point digit planes for FP64 matrices.
//!
//! Each line (row of the left operand, column of the right operand) is
//! scaled by `2^-E`, with `E` two above the line's largest exponent, so
//! every scaled value lies in `(-1/2, 1/2)`. The scaled value is truncated
//! toward negative infinity to `8s - 1` fractional-plus-sign bits and cut
//! into `s` base-256 digits with weights `2^-7, 2^-15, 2^-23, ...`.
//!
//! The leading digit is signed and the remaining ones are unsigned bytes.
//! The unsigned bytes are stored as `i8` through [`remap_digits`]: a byte
//! of 128 or more is stored as `byte - 256` (same bit pattern) and a carry
//! of one is added to the next more significant digit.

use alloc::vec;
use alloc::vec::Vec;
use num_bigint::{BigInt, Sign};

use crate::error::{Error, Result};
use crate::fpbits::{self, decode, effective_exponent};
use crate::matrix::{MatrixF64, Orientation};

/// Bits per slice.
pub const SLICE_BITS: u32 = 8;

/// Guaranteed exact width in bits for `s` slices: `8s - 2`.
#[inline]
pub const fn capacity_bits(slices: usize) -> usize {
    8 * slices - 2
}

/// A matrix split into `s` signed 8-bit digit planes with per-line scales.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlicedMatrix {
    orientation: Orientation,
    slices: usize,
    lines: usize,
    line_len: usize,
    /// Plane-major, then line-major: `planes[(d * lines + line) * line_len + pos]`.
    planes: Vec<i8>,
    scale_exp: Vec<i32>,
}

impl SlicedMatrix {
    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn slice_count(&self) -> usize {
        self.slices
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    /// Length of every line (the shared inner dimension of a product).
    pub fn line_len(&self) -> usize {
        self.line_len
    }

    pub fn capacity_bits(&self) -> usize {
        capacity_bits(self.slices)
    }

    /// Scale exponent `E` of every line; the line's values are `2^E` times
    /// their digit strings.
    pub fn scale_exp(&self) -> &[i32] {
        &self.scale_exp
    }

    /// Digit plane `d` as a `lines x line_len` row-major array.
    pub fn plane(&self, d: usize) -> &[i8] {
        let n = self.lines * self.line_len;
        &self.planes[d * n..(d + 1) * n]
    }

    /// Digits of line `line` in plane `d`.
    #[inline]
    pub fn line_digits(&self, d: usize, line: usize) -> &[i8] {
        let start = (d * self.lines + line) * self.line_len;
        &self.planes[start..start + self.line_len]
    }

    /// Digit string of a single element.
    pub fn digits(&self, line: usize, pos: usize) -> DigitString {
        DigitString { digits: (0..self.slices).map(|d| self.line_digits(d, line)[pos]).collect() }
    }

    /// Shape of the matrix this was decomposed from.
    pub fn matrix_shape(&self) -> (usize, usize) {
        match self.orientation {
            Orientation::ByRow => (self.lines, self.line_len),
            Orientation::ByColumn => (self.line_len, self.lines),
        }
    }
}

/// Digits of one element, most significant first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitString {
    pub digits: Vec<i8>,
}

impl DigitString {
    /// `sum d_i * 2^(8(s-1-i))`; the scaled element is this times `2^-(8s-1)`.
    pub fn numerator(&self) -> BigInt {
        self.digits.iter().fold(BigInt::from(0), |acc, &d| (acc << 8u32) + BigInt::from(d))
    }
}

/// Converts an unsigned digit chain to signed bytes with carries.
///
/// `unsigned` holds the sub-leading digits, most significant first. Digits
/// are processed from the least significant end: a digit (including any
/// incoming carry) in `[0, 127]` is stored as is; one in `[128, 256]` is
/// stored as `digit - 256` and carries one into the next digit. The stored
/// byte keeps the bit pattern of the carry-adjusted digit, and the value
/// `sum d_i * 256^(s-1-i)` is unchanged. The returned chain starts with the
/// possibly incremented leading digit.
pub fn remap_digits(d0: i8, unsigned: &[u8]) -> Vec<i8> {
    debug_assert!((-64..=63).contains(&d0));
    let mut out = vec![0i8; unsigned.len() + 1];
    let mut carry = 0u16;
    for (i, &u) in unsigned.iter().enumerate().rev() {
        let (stored, c) = remap_one(u, carry);
        out[i + 1] = stored;
        carry = c;
    }
    out[0] = d0 + carry as i8;
    out
}

#[inline(always)]
fn remap_one(u: u8, carry_in: u16) -> (i8, u16) {
    let v = u16::from(u) + carry_in;
    if v >= 128 {
        ((v as i16 - 256) as i8, 1)
    } else {
        (v as i8, 0)
    }
}

#[inline(always)]
fn byte_at(m: u64, lo: i64) -> u8 {
    if lo >= 64 || lo <= -8 {
        0
    } else if lo >= 0 {
        (m >> lo) as u8
    } else {
        (m << (-lo)) as u8
    }
}

/// Writes the `s` two's-complement bytes (least significant first) of
/// `floor(v * 2^shift)` into `out`, where `v = ±mantissa * 2^lsb_exp`.
///
/// The caller guarantees the result fits in `8s` bits.
#[inline]
fn floor_bytes(negative: bool, mantissa: u64, lsb_exp: i64, shift: i64, out: &mut [u8]) {
    let p = lsb_exp + shift;
    for (t, b) in out.iter_mut().enumerate() {
        *b = byte_at(mantissa, 8 * t as i64 - p);
    }
    if !negative || mantissa == 0 {
        return;
    }
    let sticky = p < 0 && (if -p >= 64 { true } else { mantissa & ((1u64 << -p) - 1) != 0 });
    if sticky {
        // floor(-x) = -floor(x) - 1 = !floor(x)
        for b in out.iter_mut() {
            *b = !*b;
        }
    } else {
        let mut carry = 1u16;
        for b in out.iter_mut() {
            let v = u16::from(!*b) + carry;
            *b = v as u8;
            carry = v >> 8;
        }
    }
}

/// Splits `m` into `s` digit planes along `orientation`.
///
/// Every entry must be finite; callers scan for NaN/Inf first.
pub fn decompose(m: &MatrixF64, orientation: Orientation, s: usize) -> Result<SlicedMatrix> {
    if s == 0 {
        return Err(Error::InvalidArgument("slice count must be at least 1".into()));
    }
    if let Some(pos) = m.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::ExceptionalValue { row: pos / m.cols().max(1), col: pos % m.cols().max(1) });
    }
    let lines = m.lines(orientation);
    let line_len = m.line_len(orientation);
    let plane_len = lines * line_len;
    let mut planes = vec![0i8; s * plane_len];
    let mut scale_exp = vec![0i32; lines];

    // Line maxima, walking memory row-major in both orientations.
    let mut line_max = vec![fpbits::NEG_SENTINEL; lines];
    for i in 0..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            if let Some(e) = effective_exponent(v) {
                let line = if orientation == Orientation::ByRow { i } else { j };
                line_max[line] = line_max[line].max(e);
            }
        }
    }
    for (e, &mx) in scale_exp.iter_mut().zip(&line_max) {
        *e = if mx == fpbits::NEG_SENTINEL { 0 } else { mx + 2 };
    }

    let frac_bits = 7 + 8 * (s as i64 - 1);
    let mut bytes = vec![0u8; s];
    for (line, &e) in scale_exp.iter().enumerate() {
        let shift = frac_bits - i64::from(e);
        for pos in 0..line_len {
            let v = m.line_get(orientation, line, pos);
            let (negative, mantissa, lsb) = decode(v);
            if mantissa == 0 {
                continue;
            }
            floor_bytes(negative, mantissa, i64::from(lsb), shift, &mut bytes);
            let base = line * line_len + pos;
            let mut carry = 0u16;
            for t in 0..s - 1 {
                let (stored, c) = remap_one(bytes[t], carry);
                planes[(s - 1 - t) * plane_len + base] = stored;
                carry = c;
            }
            let d0 = bytes[s - 1] as i8;
            debug_assert!((-64..=63).contains(&d0));
            planes[base] = d0 + carry as i8;
        }
    }
    Ok(SlicedMatrix { orientation, slices: s, lines, line_len, planes, scale_exp })
}

/// Rebuilds the FP64 matrix represented by the digit planes.
///
/// Each element is `2^E * sum d_i * 2^(-7-8i)`, i.e. the original value
/// truncated toward negative infinity at weight `2^(E - 7 - 8(s-1))`.
pub fn reconstruct(sm: &SlicedMatrix) -> MatrixF64 {
    let (rows, cols) = sm.matrix_shape();
    let s = sm.slices;
    let mut out = MatrixF64::zeros(rows, cols);
    let frac_bits = 7 + 8 * (s as i64 - 1);
    for line in 0..sm.lines {
        let exp = i64::from(sm.scale_exp[line]) - frac_bits;
        for pos in 0..sm.line_len {
            let v = if s <= 15 {
                let mut num: i128 = 0;
                for d in 0..s {
                    num = (num << 8) + i128::from(sm.line_digits(d, line)[pos]);
                }
                fpbits::round_scaled_u128(num < 0, num.unsigned_abs(), exp)
            } else {
                let num = sm.digits(line, pos).numerator();
                let (sign, mag) = num.into_parts();
                fpbits::round_scaled_big(sign == Sign::Minus, &mag, exp)
            };
            // Zero digit strings come back as +0.0.
            let v = if v == 0.0 { 0.0 } else { v };
            match sm.orientation {
                Orientation::ByRow => out[(line, pos)] = v,
                Orientation::ByColumn => out[(pos, line)] = v,
            }
        }
    }
    out
}
