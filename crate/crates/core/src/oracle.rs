//! Reference products: a fixed-order native FP64 GEMM and an exact oracle.
//!
//! The exact oracle treats every FP64 value as `M * 2^e` with an integer
//! mantissa, forms products exactly and sums them in a wide fixed-point
//! accumulator covering the whole FP64 product range, then rounds once.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::fpbits::{self, decode};
use crate::matrix::MatrixF64;

/// An exact binary rational `±magnitude * 2^exponent`.
///
/// Kept normalized: the magnitude is odd, or zero with exponent 0 and a
/// positive sign.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExactScalar {
    negative: bool,
    magnitude: BigUint,
    exponent: i64,
}

impl ExactScalar {
    pub fn zero() -> Self {
        Self { negative: false, magnitude: BigUint::zero(), exponent: 0 }
    }

    pub fn new(negative: bool, magnitude: BigUint, exponent: i64) -> Self {
        let mut s = Self { negative, magnitude, exponent };
        s.normalize();
        s
    }

    pub fn from_bigint(value: BigInt, exponent: i64) -> Self {
        let (sign, mag) = value.into_parts();
        Self::new(sign == Sign::Minus, mag, exponent)
    }

    /// Exact value of a finite `f64`; `None` for NaN and Inf.
    pub fn from_f64(v: f64) -> Option<Self> {
        if !v.is_finite() {
            return None;
        }
        let (neg, m, e) = decode(v);
        Some(Self::new(neg, BigUint::from(m), i64::from(e)))
    }

    fn normalize(&mut self) {
        match self.magnitude.trailing_zeros() {
            None => {
                self.negative = false;
                self.exponent = 0;
            }
            Some(tz) if tz > 0 => {
                self.magnitude >>= tz;
                self.exponent += tz as i64;
            }
            Some(_) => {}
        }
    }

    pub fn is_zero(&self) -> bool {
        self.magnitude.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.negative
    }

    pub fn magnitude(&self) -> &BigUint {
        &self.magnitude
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn abs(&self) -> Self {
        Self { negative: false, ..self.clone() }
    }

    pub fn neg(&self) -> Self {
        let mut s = self.clone();
        if !s.is_zero() {
            s.negative = !s.negative;
        }
        s
    }

    fn to_bigint_at(&self, exponent: i64) -> BigInt {
        debug_assert!(exponent <= self.exponent);
        let mag = &self.magnitude << (self.exponent - exponent) as u64;
        BigInt::from_biguint(if self.negative { Sign::Minus } else { Sign::Plus }, mag)
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let e = self.exponent.min(other.exponent);
        Self::from_bigint(self.to_bigint_at(e) + other.to_bigint_at(e), e)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(self.negative != other.negative, &self.magnitude * &other.magnitude, self.exponent + other.exponent)
    }

    /// Round to nearest, ties to even. Overflow gives a signed infinity.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        fpbits::round_scaled_big(self.negative, &self.magnitude, self.exponent)
    }

    /// `(hi, lo)` with `hi = fl(x)` and `lo = fl(x - hi)`.
    pub fn to_f64_pair(&self) -> (f64, f64) {
        let hi = self.to_f64();
        if !hi.is_finite() {
            return (hi, 0.0);
        }
        let rest = self.sub(&Self::from_f64(hi).expect("finite"));
        (hi, rest.to_f64())
    }
}

impl PartialOrd for ExactScalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExactScalar {
    fn cmp(&self, other: &Self) -> Ordering {
        let e = self.exponent.min(other.exponent);
        self.to_bigint_at(e).cmp(&other.to_bigint_at(e))
    }
}

/// Limb `t` of [`ExactAccumulator`] has weight `2^(32 t + ACC_BASE_EXP)`.
const ACC_BASE_EXP: i64 = -2 * 1074 - 4;
/// Products of FP64 values stay below `2^2048`; a few spare limbs absorb
/// carries from summing many of them.
const ACC_LIMBS: usize = ((2048 - ACC_BASE_EXP) / 32) as usize + 6;
/// Each product adds less than `2^33` to a limb, so `2^29` products can be
/// added before carries must be propagated.
const ACC_FLUSH_EVERY: u32 = 1 << 29;

/// Exact sum of FP64 products, held as signed base-2^32 digits with carry
/// headroom in each `i64` limb.
#[derive(Clone)]
pub struct ExactAccumulator {
    limbs: Vec<i64>,
    lo: usize,
    hi: usize,
    pending: u32,
}

impl Default for ExactAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl ExactAccumulator {
    pub fn new() -> Self {
        Self { limbs: vec![0; ACC_LIMBS], lo: ACC_LIMBS, hi: 0, pending: 0 }
    }

    pub fn clear(&mut self) {
        if self.lo < self.hi {
            self.limbs[self.lo..self.hi].fill(0);
        }
        self.lo = ACC_LIMBS;
        self.hi = 0;
        self.pending = 0;
    }

    /// Adds `±mantissa * 2^exp`, `mantissa < 2^106`, `exp >= -2148`.
    #[inline]
    pub fn add_scaled(&mut self, negative: bool, mantissa: u128, exp: i64) {
        if mantissa == 0 {
            return;
        }
        let pos = (exp - ACC_BASE_EXP) as usize;
        let q = pos / 32;
        let r = (pos % 32) as u32;
        let w0 = mantissa << r;
        let w1 = if r == 0 { 0 } else { (mantissa >> (128 - r)) as u64 };
        let parts = [w0 as u32, (w0 >> 32) as u32, (w0 >> 64) as u32, (w0 >> 96) as u32, w1 as u32];
        let limbs = &mut self.limbs[q..q + 5];
        if negative {
            for (l, p) in limbs.iter_mut().zip(parts) {
                *l -= i64::from(p);
            }
        } else {
            for (l, p) in limbs.iter_mut().zip(parts) {
                *l += i64::from(p);
            }
        }
        self.lo = self.lo.min(q);
        self.hi = self.hi.max(q + 5);
        self.pending += 1;
        if self.pending >= ACC_FLUSH_EVERY {
            self.propagate();
        }
    }

    /// Adds the exact product `a * b` of two finite values.
    #[inline]
    pub fn add_product(&mut self, a: f64, b: f64) {
        let (na, ma, ea) = decode(a);
        let (nb, mb, eb) = decode(b);
        self.add_scaled(na != nb, u128::from(ma) * u128::from(mb), i64::from(ea) + i64::from(eb));
    }

    /// Adds a finite value.
    pub fn add_f64(&mut self, v: f64) {
        let (n, m, e) = decode(v);
        self.add_scaled(n, u128::from(m), i64::from(e));
    }

    /// Carries every limb into `[0, 2^32)`; a remaining signed carry opens
    /// a new top limb.
    fn propagate(&mut self) {
        if self.lo >= self.hi {
            return;
        }
        let mut carry = 0i64;
        for t in self.lo..self.hi - 1 {
            let v = self.limbs[t] + carry;
            carry = v >> 32;
            self.limbs[t] = v & 0xFFFF_FFFF;
        }
        let top = self.hi - 1;
        let v = self.limbs[top] + carry;
        if self.hi < ACC_LIMBS {
            self.limbs[top] = v & 0xFFFF_FFFF;
            let c = v >> 32;
            if c != 0 {
                self.limbs[self.hi] = c;
                self.hi += 1;
            }
        } else {
            self.limbs[top] = v;
        }
        self.pending = 0;
    }

    /// The exact value accumulated so far.
    pub fn value(&self) -> ExactScalar {
        if self.lo >= self.hi {
            return ExactScalar::zero();
        }
        let mut carry = 0i64;
        let mut digits: Vec<u32> = Vec::with_capacity(self.hi - self.lo + 1);
        for &l in &self.limbs[self.lo..self.hi] {
            let v = l + carry;
            carry = v >> 32;
            digits.push(v as u32);
        }
        let low = BigInt::from(BigUint::from_slice(&digits));
        let total = low + (BigInt::from(carry) << (32 * digits.len()));
        ExactScalar::from_bigint(total, ACC_BASE_EXP + 32 * self.lo as i64)
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(p) => Err(Error::ExceptionalValue { row: p, col: 0 }),
        None => Ok(()),
    }
}

fn check_product_dims(a: &MatrixF64, b: &MatrixF64) -> Result<()> {
    if a.cols() != b.rows() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "{}x{} times {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// Exact dot product of two finite vectors.
pub fn exact_dot(x: &[f64], y: &[f64]) -> Result<ExactScalar> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(alloc::format!("vectors of length {} and {}", x.len(), y.len())));
    }
    check_finite(x)?;
    check_finite(y)?;
    let mut acc = ExactAccumulator::new();
    for (&a, &b) in x.iter().zip(y) {
        acc.add_product(a, b);
    }
    Ok(acc.value())
}

/// Exact dot product by straightforward big-integer arithmetic.
///
/// Much slower than [`exact_dot`]; it shares no code with the accumulator
/// and serves as its cross-check.
pub fn exact_dot_bigint(x: &[f64], y: &[f64]) -> Result<ExactScalar> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(alloc::format!("vectors of length {} and {}", x.len(), y.len())));
    }
    let mut terms = Vec::with_capacity(x.len());
    for (&a, &b) in x.iter().zip(y) {
        let (ea, eb) = match (ExactScalar::from_f64(a), ExactScalar::from_f64(b)) {
            (Some(ea), Some(eb)) => (ea, eb),
            _ => return Err(Error::ExceptionalValue { row: terms.len(), col: 0 }),
        };
        terms.push(ea.mul(&eb));
    }
    let min_exp = terms.iter().filter(|t| !t.is_zero()).map(|t| t.exponent).min().unwrap_or(0);
    let mut sum = BigInt::zero();
    for t in &terms {
        if !t.is_zero() {
            sum += t.to_bigint_at(min_exp);
        }
    }
    Ok(ExactScalar::from_bigint(sum, min_exp))
}

fn decoded_columns(b: &MatrixF64) -> Vec<(bool, u64, i32)> {
    let (k, n) = b.shape();
    let mut out = vec![(false, 0, 0); k * n];
    for l in 0..k {
        for (j, &v) in b.row(l).iter().enumerate() {
            out[j * k + l] = decode(v);
        }
    }
    out
}

fn exact_row(
    acc: &mut ExactAccumulator,
    a_row: &[(bool, u64, i32)],
    b_cols: &[(bool, u64, i32)],
    k: usize,
    j: usize,
) -> ExactScalar {
    acc.clear();
    for (&(na, ma, ea), &(nb, mb, eb)) in a_row.iter().zip(&b_cols[j * k..(j + 1) * k]) {
        acc.add_scaled(na != nb, u128::from(ma) * u128::from(mb), i64::from(ea) + i64::from(eb));
    }
    acc.value()
}

/// Exact products `(AB)_ij` for every entry, row-major.
///
/// Costs `O(mnk)` wide additions plus one big-integer conversion per
/// entry; meant for verification at desk-scale sizes.
pub fn exact_gemm_values(a: &MatrixF64, b: &MatrixF64) -> Result<Vec<ExactScalar>> {
    check_product_dims(a, b)?;
    check_finite(a.as_slice())?;
    check_finite(b.as_slice())?;
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let bc = decoded_columns(b);
    let da: Vec<(bool, u64, i32)> = a.as_slice().iter().map(|&v| decode(v)).collect();
    let mut out = vec![ExactScalar::zero(); m * n];
    let fill_row = |i: usize, row_out: &mut [ExactScalar]| {
        let mut acc = ExactAccumulator::new();
        let a_row = &da[i * k..(i + 1) * k];
        for (j, o) in row_out.iter_mut().enumerate() {
            *o = exact_row(&mut acc, a_row, &bc, k, j);
        }
    };
    for_each_row(&mut out, n, fill_row);
    Ok(out)
}

/// Correctly rounded `(hi, lo)` parts of every entry of `AB`: `hi = fl(AB)`
/// and `lo = fl(AB - hi)`.
pub fn exact_gemm_pair(a: &MatrixF64, b: &MatrixF64) -> Result<(MatrixF64, MatrixF64)> {
    check_product_dims(a, b)?;
    check_finite(a.as_slice())?;
    check_finite(b.as_slice())?;
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let bc = decoded_columns(b);
    let da: Vec<(bool, u64, i32)> = a.as_slice().iter().map(|&v| decode(v)).collect();
    let mut pairs = vec![(0.0, 0.0); m * n];
    for_each_row(&mut pairs, n, |i, row_out: &mut [(f64, f64)]| {
        let mut acc = ExactAccumulator::new();
        let a_row = &da[i * k..(i + 1) * k];
        for (j, o) in row_out.iter_mut().enumerate() {
            *o = exact_row(&mut acc, a_row, &bc, k, j).to_f64_pair();
        }
    });
    let hi = MatrixF64::from_vec(m, n, pairs.iter().map(|p| p.0).collect())?;
    let lo = MatrixF64::from_vec(m, n, pairs.iter().map(|p| p.1).collect())?;
    Ok((hi, lo))
}

/// Every entry of `AB` correctly rounded to FP64.
pub fn exact_gemm(a: &MatrixF64, b: &MatrixF64) -> Result<MatrixF64> {
    Ok(exact_gemm_pair(a, b)?.0)
}

/// Runs `f(row_index, row)` over `n`-wide rows of `out`, in parallel when
/// the `parallel` feature is on.
pub(crate) fn for_each_row<T: Send>(out: &mut [T], n: usize, f: impl Fn(usize, &mut [T]) + Sync + Send) {
    if n == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(n).enumerate().for_each(|(i, r)| f(i, r));
    }
    #[cfg(not(feature = "parallel"))]
    for (i, r) in out.chunks_mut(n).enumerate() {
        f(i, r);
    }
}

/// `alpha * product + beta * c`, elementwise in FP64.
///
/// Follows the BLAS convention that `c` is not read when `beta == 0`, and
/// skips the multiplication when `alpha == 1`.
pub(crate) fn apply_scalars(mut product: MatrixF64, alpha: f64, beta: f64, c: Option<&MatrixF64>) -> Result<MatrixF64> {
    if alpha != 1.0 {
        product.as_mut_slice().iter_mut().for_each(|v| *v *= alpha);
    }
    if beta != 0.0 {
        let c = c.ok_or_else(|| Error::InvalidArgument("beta is nonzero but no C was given".into()))?;
        if c.shape() != product.shape() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "C is {}x{}, product is {}x{}",
                c.rows(),
                c.cols(),
                product.rows(),
                product.cols()
            )));
        }
        for (p, &cv) in product.as_mut_slice().iter_mut().zip(c.as_slice()) {
            *p += beta * cv;
        }
    }
    Ok(product)
}

/// Reference FP64 GEMM `alpha * A * B + beta * C`.
///
/// Each entry is summed sequentially in ascending `l` with separate
/// multiply and add roundings, so results are reproducible on every
/// platform. NaN and Inf propagate with IEEE semantics.
pub fn native_gemm(a: &MatrixF64, b: &MatrixF64, alpha: f64, beta: f64, c: Option<&MatrixF64>) -> Result<MatrixF64> {
    check_product_dims(a, b)?;
    let (m, n) = (a.rows(), b.cols());
    let mut out = MatrixF64::zeros(m, n);
    for_each_row(out.as_mut_slice(), n, |i, acc: &mut [f64]| {
        for (l, &av) in a.row(i).iter().enumerate() {
            for (o, &bv) in acc.iter_mut().zip(b.row(l)) {
                *o += av * bv;
            }
        }
    });
    apply_scalars(out, alpha, beta, c)
}

/// `(|A| |B|)_ij` computed with [`native_gemm`].
pub fn abs_product(a: &MatrixF64, b: &MatrixF64) -> Result<MatrixF64> {
    native_gemm(&a.abs(), &b.abs(), 1.0, 0.0, None)
}

/// `2^e` as an exact scalar.
pub fn exact_pow2(e: i64) -> ExactScalar {
    ExactScalar::new(false, BigUint::one(), e)
}
