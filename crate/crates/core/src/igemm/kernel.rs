//! Packed int8 micro-kernels.
//!
//! Both operands are packed along the inner dimension in groups of four.
//! A row panel holds `MR` rows as `[group][row][4]` bytes biased by 128
//! (stored as `u8`), a column panel holds `NR` columns as `[group][col][4]`
//! signed bytes. A kernel call returns the exact `MR x NR` block of signed
//! dot products over a range of groups in 32-bit integers.

use alloc::vec;
use alloc::vec::Vec;

pub(crate) const MR: usize = 8;
pub(crate) const NR: usize = 32;
pub(crate) const GROUP: usize = 4;

/// Integer backend used for the slice products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    /// Plain Rust, runs everywhere.
    Portable,
    /// x86-64 AVX-512 VNNI (`vpdpbusd`).
    Avx512Vnni,
}

impl Backend {
    pub fn is_available(self) -> bool {
        match self {
            Backend::Portable => true,
            Backend::Avx512Vnni => vnni_available(),
        }
    }

    /// The fastest backend available on this machine.
    pub fn detect() -> Self {
        if vnni_available() {
            Backend::Avx512Vnni
        } else {
            Backend::Portable
        }
    }
}

#[cfg(all(target_arch = "x86_64", feature = "std"))]
fn vnni_available() -> bool {
    std::is_x86_feature_detected!("avx512f") && std::is_x86_feature_detected!("avx512vnni")
}

#[cfg(all(target_arch = "x86_64", not(feature = "std")))]
fn vnni_available() -> bool {
    cfg!(all(target_feature = "avx512f", target_feature = "avx512vnni"))
}

#[cfg(not(target_arch = "x86_64"))]
fn vnni_available() -> bool {
    false
}

/// Row panels of one plane set: `planes` is `count` planes of
/// `rows x k` signed digits, row-major.
pub(crate) struct PackedA {
    pub panels: usize,
    pub groups: usize,
    data: Vec<u8>,
}

impl PackedA {
    pub fn new(planes: &[i8], count: usize, rows: usize, k: usize) -> Self {
        let panels = rows.div_ceil(MR);
        let groups = k.div_ceil(GROUP);
        let panel_bytes = groups * MR * GROUP;
        // Padding encodes digit 0, i.e. byte 0x80 after the bias.
        let mut data = vec![0x80u8; count * panels * panel_bytes];
        for d in 0..count {
            for r in 0..rows {
                let src = &planes[(d * rows + r) * k..(d * rows + r + 1) * k];
                let base = (d * panels + r / MR) * panel_bytes + (r % MR) * GROUP;
                for (l, &v) in src.iter().enumerate() {
                    data[base + (l / GROUP) * MR * GROUP + l % GROUP] = (v as u8) ^ 0x80;
                }
            }
        }
        Self { panels, groups, data }
    }

    #[inline]
    pub fn panel(&self, plane: usize, panel: usize) -> &[u8] {
        let n = self.groups * MR * GROUP;
        let start = (plane * self.panels + panel) * n;
        &self.data[start..start + n]
    }
}

/// Column panels of one plane set, plus per-chunk column sums used to
/// undo the bias of the left operand.
pub(crate) struct PackedB {
    pub panels: usize,
    pub groups: usize,
    pub chunk_groups: usize,
    data: Vec<i8>,
    /// `[plane][panel][chunk][NR]`.
    colsum: Vec<i32>,
}

impl PackedB {
    pub fn new(planes: &[i8], count: usize, cols: usize, k: usize, chunk_groups: usize) -> Self {
        let panels = cols.div_ceil(NR);
        let groups = k.div_ceil(GROUP);
        let chunks = groups.div_ceil(chunk_groups).max(1);
        let panel_bytes = groups * NR * GROUP;
        let mut data = vec![0i8; count * panels * panel_bytes];
        let mut colsum = vec![0i32; count * panels * chunks * NR];
        for d in 0..count {
            for c in 0..cols {
                let src = &planes[(d * cols + c) * k..(d * cols + c + 1) * k];
                let p = d * panels + c / NR;
                let base = p * panel_bytes + (c % NR) * GROUP;
                for (l, &v) in src.iter().enumerate() {
                    let g = l / GROUP;
                    data[base + g * NR * GROUP + l % GROUP] = v;
                    colsum[(p * chunks + g / chunk_groups) * NR + c % NR] += i32::from(v);
                }
            }
        }
        Self { panels, groups, chunk_groups, data, colsum }
    }

    #[inline]
    pub fn panel(&self, plane: usize, panel: usize) -> &[i8] {
        let n = self.groups * NR * GROUP;
        let start = (plane * self.panels + panel) * n;
        &self.data[start..start + n]
    }

    #[inline]
    pub fn colsum(&self, plane: usize, panel: usize, chunk: usize) -> &[i32] {
        let chunks = self.groups.div_ceil(self.chunk_groups).max(1);
        let start = ((plane * self.panels + panel) * chunks + chunk) * NR;
        &self.colsum[start..start + NR]
    }
}

/// `out[r * NR + c] = sum over groups g0..g1 of a(r, l) * b(l, c)`.
///
/// `colsum` must be the column sums of `b` over exactly that group range.
#[inline]
pub(crate) fn block_product(
    backend: Backend,
    a: &[u8],
    b: &[i8],
    g0: usize,
    g1: usize,
    colsum: &[i32],
    out: &mut [i32; MR * NR],
) {
    let a = &a[g0 * MR * GROUP..g1 * MR * GROUP];
    let b = &b[g0 * NR * GROUP..g1 * NR * GROUP];
    match backend {
        #[cfg(target_arch = "x86_64")]
        Backend::Avx512Vnni => {
            assert!(vnni_available(), "AVX-512 VNNI is not available");
            // SAFETY: the required CPU features were checked above and the
            // slices hold exactly `g1 - g0` packed groups.
            unsafe { vnni::block(a, b, colsum, out) }
        }
        _ => {
            let _ = colsum;
            portable_block(a, b, out)
        }
    }
}

/// Reference kernel. Plain `i32` arithmetic, so an overflowing chunk
/// panics in builds with overflow checks.
fn portable_block(a: &[u8], b: &[i8], out: &mut [i32; MR * NR]) {
    out.fill(0);
    for (ga, gb) in a.chunks_exact(MR * GROUP).zip(b.chunks_exact(NR * GROUP)) {
        for r in 0..MR {
            let ar = [
                i32::from((ga[r * GROUP] ^ 0x80) as i8),
                i32::from((ga[r * GROUP + 1] ^ 0x80) as i8),
                i32::from((ga[r * GROUP + 2] ^ 0x80) as i8),
                i32::from((ga[r * GROUP + 3] ^ 0x80) as i8),
            ];
            let row = &mut out[r * NR..(r + 1) * NR];
            for (o, bc) in row.iter_mut().zip(gb.chunks_exact(GROUP)) {
                *o += ar[0] * i32::from(bc[0])
                    + ar[1] * i32::from(bc[1])
                    + ar[2] * i32::from(bc[2])
                    + ar[3] * i32::from(bc[3]);
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod vnni {
    use super::{GROUP, MR, NR};
    use core::arch::x86_64::*;

    /// `vpdpbusd` multiplies unsigned by signed bytes, so the left operand
    /// carries a +128 bias that is removed with `128 * colsum` at the end.
    /// The biased chunk sum stays below `65536 * 255 * 128 < 2^31`.
    #[target_feature(enable = "avx512f,avx512vnni")]
    pub(super) unsafe fn block(a: &[u8], b: &[i8], colsum: &[i32], out: &mut [i32; MR * NR]) {
        let groups = b.len() / (NR * GROUP);
        debug_assert_eq!(a.len(), groups * MR * GROUP);
        debug_assert_eq!(colsum.len(), NR);
        let ap = a.as_ptr();
        let bp = b.as_ptr();
        let z = _mm512_setzero_si512();
        let (mut c00, mut c01, mut c10, mut c11) = (z, z, z, z);
        let (mut c20, mut c21, mut c30, mut c31) = (z, z, z, z);
        let (mut c40, mut c41, mut c50, mut c51) = (z, z, z, z);
        let (mut c60, mut c61, mut c70, mut c71) = (z, z, z, z);
        for g in 0..groups {
            let bg = bp.add(g * NR * GROUP);
            let b0 = _mm512_loadu_si512(bg.cast());
            let b1 = _mm512_loadu_si512(bg.add(64).cast());
            let ag = ap.add(g * MR * GROUP).cast::<i32>();
            macro_rules! row {
                ($r:expr, $x:ident, $y:ident) => {
                    let av = _mm512_set1_epi32(ag.add($r).read_unaligned());
                    $x = _mm512_dpbusd_epi32($x, av, b0);
                    $y = _mm512_dpbusd_epi32($y, av, b1);
                };
            }
            row!(0, c00, c01);
            row!(1, c10, c11);
            row!(2, c20, c21);
            row!(3, c30, c31);
            row!(4, c40, c41);
            row!(5, c50, c51);
            row!(6, c60, c61);
            row!(7, c70, c71);
        }
        let s0 = _mm512_slli_epi32::<7>(_mm512_loadu_si512(colsum.as_ptr().cast()));
        let s1 = _mm512_slli_epi32::<7>(_mm512_loadu_si512(colsum.as_ptr().add(16).cast()));
        let o = out.as_mut_ptr();
        let rows = [(c00, c01), (c10, c11), (c20, c21), (c30, c31), (c40, c41), (c50, c51), (c60, c61), (c70, c71)];
        for (r, (x, y)) in rows.into_iter().enumerate() {
            _mm512_storeu_si512(o.add(r * NR).cast(), _mm512_sub_epi32(x, s0));
            _mm512_storeu_si512(o.add(r * NR + 16).cast(), _mm512_sub_epi32(y, s1));
        }
    }
}
