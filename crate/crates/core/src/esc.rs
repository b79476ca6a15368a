//! Exponent span capacity: how many padding bits beyond the target mantissa
//! width the fixed-point window needs so that the largest product terms of
//! every dot product are kept at full precision.
//!
//! For a dot product `x . y`, with `e(.)` the exponent of an entry,
//!
//! ```text
//! ESC = max_l e(x_l) + max_l e(y_l) - max_l [e(x_l) + e(y_l)] + 1
//! ```
//!
//! where the last maximum runs over positions with both entries nonzero and
//! the `+1` covers the carry of a mantissa product. The matrix ESC is the
//! maximum over all `m * n` dot products.

use crate::error::{Error, Result};
use crate::fpbits::{exponent_or_sentinel, BlockStats, NEG_SENTINEL};
use crate::matrix::{MatrixF64, Orientation};

/// Default block length of the coarsened estimator.
pub const DEFAULT_BLOCK_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EscMethod {
    Exact,
    Coarsened,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EscReport {
    /// Padding bits, including the `+1` product-carry margin.
    pub esc_bits: u32,
    pub target_bits: u32,
    /// `target_bits + esc_bits`.
    pub window_bits: u32,
    pub slices_required: usize,
    pub method: EscMethod,
    pub block_len: Option<usize>,
}

impl EscReport {
    fn new(esc_bits: u32, target_bits: u32, method: EscMethod, block_len: Option<usize>) -> Self {
        Self {
            esc_bits,
            target_bits,
            window_bits: target_bits.saturating_add(esc_bits),
            slices_required: required_slices(target_bits, esc_bits),
            method,
            block_len,
        }
    }
}

/// Slice count whose capacity `8s - 2` covers `target_bits + esc_bits`.
pub fn required_slices(target_bits: u32, esc_bits: u32) -> usize {
    (target_bits as usize + esc_bits as usize + 2).div_ceil(8)
}

#[inline]
fn esc_from(row_max: i32, col_max: i32, z: i32) -> u32 {
    let span = i64::from(row_max) + i64::from(col_max) - i64::from(z) + 1;
    span.clamp(0, i64::from(u32::MAX)) as u32
}

fn check_dims(a: &MatrixF64, b: &MatrixF64) -> Result<()> {
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

/// Exact ESC by enumerating every Hadamard exponent, `O(mnk)`.
///
/// Kept as a reference for the coarsened estimator; inputs must be finite.
pub fn esc_exact(a: &MatrixF64, b: &MatrixF64, target_bits: u32) -> Result<EscReport> {
    check_dims(a, b)?;
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let ea: alloc::vec::Vec<i32> = a.as_slice().iter().map(|&v| exponent_or_sentinel(v)).collect();
    // B transposed so each column is contiguous.
    let mut eb = alloc::vec![NEG_SENTINEL; k * n];
    for l in 0..k {
        for j in 0..n {
            eb[j * k + l] = exponent_or_sentinel(b[(l, j)]);
        }
    }
    let line_max = |s: &[i32]| s.iter().copied().max().unwrap_or(NEG_SENTINEL);
    let col_max: alloc::vec::Vec<i32> = (0..n).map(|j| line_max(&eb[j * k..(j + 1) * k])).collect();
    let mut esc = 0u32;
    for i in 0..m {
        let row = &ea[i * k..(i + 1) * k];
        let row_max = line_max(row);
        if row_max == NEG_SENTINEL {
            continue;
        }
        for j in 0..n {
            let col = &eb[j * k..(j + 1) * k];
            let mut z = NEG_SENTINEL;
            for (&x, &y) in row.iter().zip(col) {
                if x != NEG_SENTINEL && y != NEG_SENTINEL {
                    z = z.max(x + y);
                }
            }
            if z != NEG_SENTINEL {
                esc = esc.max(esc_from(row_max, col_max[j], z));
            }
        }
    }
    Ok(EscReport::new(esc, target_bits, EscMethod::Exact, None))
}

/// Block-granular ESC from per-block exponent extremes, `O(mn * k/b)`.
///
/// The largest Hadamard exponent is bounded from below per block by
/// `max(MaxA + MinB, MinA + MaxB)`; a cross term is only used when the block
/// on its minimum side holds no zeros, because a zero there may sit exactly
/// opposite the maximum. When no cross term applies, the smallest
/// `MinA + MinB` over blocks with nonzeros on both sides still bounds every
/// real term from below. The estimate therefore never exceeds the true
/// maximum exponent, and the reported ESC is never below [`esc_exact`].
pub fn esc_coarsened(stats_a: &BlockStats, stats_b: &BlockStats, target_bits: u32) -> Result<EscReport> {
    if stats_a.orientation != Orientation::ByRow || stats_b.orientation != Orientation::ByColumn {
        return Err(Error::InvalidArgument(
            "coarsened ESC needs row statistics for A and column statistics for B".into(),
        ));
    }
    if stats_a.block_len != stats_b.block_len || stats_a.line_len != stats_b.line_len {
        return Err(Error::DimensionMismatch(alloc::format!(
            "block partitions differ: A has length {} in blocks of {}, B has length {} in blocks of {}",
            stats_a.line_len,
            stats_a.block_len,
            stats_b.line_len,
            stats_b.block_len
        )));
    }
    let nb = stats_a.blocks_per_line;
    let mut esc = 0u32;
    for i in 0..stats_a.lines {
        let row_max = stats_a.line_max_exp[i];
        if row_max == NEG_SENTINEL {
            continue;
        }
        let a_max = &stats_a.max_exp[i * nb..(i + 1) * nb];
        let a_min = &stats_a.min_exp[i * nb..(i + 1) * nb];
        let a_zero = &stats_a.has_zero[i * nb..(i + 1) * nb];
        for j in 0..stats_b.lines {
            let col_max = stats_b.line_max_exp[j];
            if col_max == NEG_SENTINEL {
                continue;
            }
            let b_max = &stats_b.max_exp[j * nb..(j + 1) * nb];
            let b_min = &stats_b.min_exp[j * nb..(j + 1) * nb];
            let b_zero = &stats_b.has_zero[j * nb..(j + 1) * nb];
            let mut cross = NEG_SENTINEL;
            let mut floor = i32::MAX;
            for t in 0..nb {
                if a_max[t] == NEG_SENTINEL || b_max[t] == NEG_SENTINEL {
                    continue;
                }
                if !b_zero[t] {
                    cross = cross.max(a_max[t] + b_min[t]);
                }
                if !a_zero[t] {
                    cross = cross.max(a_min[t] + b_max[t]);
                }
                floor = floor.min(a_min[t] + b_min[t]);
            }
            if floor == i32::MAX {
                // No block has nonzeros on both sides: structurally zero.
                continue;
            }
            let z = cross.max(floor);
            esc = esc.max(esc_from(row_max, col_max, z));
        }
    }
    Ok(EscReport::new(esc, target_bits, EscMethod::Coarsened, Some(stats_a.block_len)))
}
