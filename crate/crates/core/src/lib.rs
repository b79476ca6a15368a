//! FP64 matrix multiplication emulated with 8-bit integer slices.
//!
//! Operands are split into per-row (left) and per-column (right) scaled
//! fixed-point digit planes stored as `i8`. Every pair of planes is
//! multiplied with 32-bit integer accumulation, the partial products are
//! combined exactly, and the result is rounded to FP64 once.
//!
//! The number of planes is chosen per call by an exponent-span estimate
//! ([`esc`]), and the [`adp`] dispatcher falls back to a native FP64 GEMM
//! when the inputs hold NaN/Inf, are too small, or would need too many
//! planes.
//!
//! The crate is `no_std` (with `alloc`) when built without the default
//! `std` feature. The `parallel` feature distributes output row blocks over
//! a rayon pool; results never depend on the thread count.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adp;
pub mod error;
pub mod esc;
pub mod fpbits;
pub mod grading;
pub mod igemm;
pub mod matrix;
pub mod oracle;
pub mod qr;
pub mod slicing;

pub use adp::{adp_gemm, decide, AdpConfig, AdpDecision, AdpMode, AdpPath, AdpReason, AdpTrace};
pub use error::{Error, Result};
pub use esc::{esc_coarsened, esc_exact, required_slices, EscMethod, EscReport};
pub use igemm::{emulated_gemm, GemmParams, PairPolicy};
pub use matrix::{MatrixF64, Orientation};
pub use oracle::{exact_dot, exact_gemm, native_gemm, ExactScalar};
pub use slicing::{decompose, reconstruct, SlicedMatrix};

/// FP64 machine epsilon, 2^-52.
pub const EPSILON: f64 = f64::EPSILON;

/// Mantissa width of FP64 including the implicit bit.
pub const FP64_MANTISSA_BITS: u32 = 53;
