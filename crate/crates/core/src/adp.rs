//! Dispatch between emulated and native FP64 GEMM.
//!
//! A call is scanned for NaN/Inf, sized, its exponent span estimated and a
//! cost model consulted, in that order. The first check that fails sends
//! the call to [`native_gemm`]; the trace records which one it was.

use alloc::format;

use crate::error::{Error, Result};
use crate::esc::{esc_coarsened, EscReport, DEFAULT_BLOCK_LEN};
use crate::fpbits::{block_exponent_stats, scan_matrix, ScanReport};
use crate::igemm::{emulated_gemm, GemmParams, PairPolicy};
use crate::matrix::{MatrixF64, Orientation};
use crate::oracle::native_gemm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AdpMode {
    #[default]
    Auto,
    /// Emulate with this many slices unless an operand holds NaN/Inf.
    ForceEmulate(usize),
    ForceNative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdpConfig {
    pub target_mantissa_bits: u32,
    pub esc_block_len: usize,
    pub max_slices: usize,
    pub min_dim: usize,
    pub mode: AdpMode,
    /// Modeled integer-MMA to FP64 throughput ratio.
    pub cost_ratio: f64,
}

/// Default modeled throughput ratio. With it every slice count up to the
/// default `max_slices` of 18 passes the cost model at large sizes
/// (`18^2 / 512 < 0.64`).
pub const DEFAULT_COST_RATIO: f64 = 512.0;

impl Default for AdpConfig {
    fn default() -> Self {
        Self {
            target_mantissa_bits: 53,
            esc_block_len: DEFAULT_BLOCK_LEN,
            max_slices: 18,
            min_dim: 256,
            mode: AdpMode::Auto,
            cost_ratio: DEFAULT_COST_RATIO,
        }
    }
}

impl AdpConfig {
    pub fn with_mode(mut self, mode: AdpMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_min_dim(mut self, min_dim: usize) -> Self {
        self.min_dim = min_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_slices < 7 {
            return Err(Error::InvalidArgument(format!("max_slices {} is below 7", self.max_slices)));
        }
        if self.min_dim == 0 {
            return Err(Error::InvalidArgument("min_dim must be at least 1".into()));
        }
        if self.esc_block_len == 0 {
            return Err(Error::InvalidArgument("esc_block_len must be at least 1".into()));
        }
        if self.target_mantissa_bits == 0 {
            return Err(Error::InvalidArgument("target_mantissa_bits must be at least 1".into()));
        }
        if !(self.cost_ratio.is_finite() && self.cost_ratio > 0.0) {
            return Err(Error::InvalidArgument(format!("cost_ratio {} must be positive", self.cost_ratio)));
        }
        if self.mode == AdpMode::ForceEmulate(0) {
            return Err(Error::InvalidArgument("forced slice count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdpPath {
    Emulated(usize),
    NativeFallback,
}

impl AdpPath {
    pub fn as_str(self) -> &'static str {
        match self {
            AdpPath::Emulated(_) => "Emulated",
            AdpPath::NativeFallback => "NativeFallback",
        }
    }

    pub fn slices(self) -> Option<usize> {
        match self {
            AdpPath::Emulated(s) => Some(s),
            AdpPath::NativeFallback => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdpReason {
    ExceptionalValues,
    EscTooLarge,
    TooSmall,
    CostModel,
    Forced,
    Ok,
}

impl AdpReason {
    pub fn as_str(self) -> &'static str {
        match self {
            AdpReason::ExceptionalValues => "ExceptionalValues",
            AdpReason::EscTooLarge => "EscTooLarge",
            AdpReason::TooSmall => "TooSmall",
            AdpReason::CostModel => "CostModel",
            AdpReason::Forced => "Forced",
            AdpReason::Ok => "Ok",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdpDecision {
    pub path: AdpPath,
    pub reason: AdpReason,
    /// Absent when the span was never estimated.
    pub esc_report: Option<EscReport>,
    /// Modeled emulated cost relative to native, when evaluated.
    pub modeled_cost_ratio: Option<f64>,
}

impl AdpDecision {
    fn native(reason: AdpReason, esc_report: Option<EscReport>) -> Self {
        Self { path: AdpPath::NativeFallback, reason, esc_report, modeled_cost_ratio: None }
    }
}

/// Everything [`adp_gemm`] decided and why.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdpTrace {
    pub path: AdpPath,
    pub reason: AdpReason,
    pub esc_report: Option<EscReport>,
    pub scan_a: ScanReport,
    pub scan_b: ScanReport,
    pub modeled_cost_ratio: Option<f64>,
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl AdpTrace {
    pub fn esc_bits(&self) -> Option<u32> {
        self.esc_report.map(|r| r.esc_bits)
    }

    pub fn slices(&self) -> Option<usize> {
        self.path.slices()
    }
}

/// Modeled cost of emulation relative to a native GEMM of the same shape.
///
/// The `s^2` integer slice products run `rho` times faster than FP64; the
/// span estimate and slicing touch every input `s + 2` times and the
/// recombination touches every output `2s - 1` times, all at FP64 speed.
pub fn modeled_cost(s: usize, (m, n, k): (usize, usize, usize), rho: f64) -> f64 {
    let (mf, nf, kf, sf) = (m as f64, n as f64, k as f64, s as f64);
    let mnk = mf * nf * kf;
    sf * sf / rho + ((sf + 2.0) * (mf * kf + kf * nf) + (2.0 * sf - 1.0) * mf * nf) / mnk
}

/// The dispatch decision for one call. `esc` is evaluated at most once and
/// only after both scans came back clean.
pub fn decide(
    scan_a: &ScanReport,
    scan_b: &ScanReport,
    dims: (usize, usize, usize),
    esc: impl FnOnce() -> EscReport,
    config: &AdpConfig,
) -> AdpDecision {
    if config.mode == AdpMode::ForceNative {
        return AdpDecision::native(AdpReason::Forced, None);
    }
    if scan_a.has_exceptional || scan_b.has_exceptional {
        return AdpDecision::native(AdpReason::ExceptionalValues, None);
    }
    if let AdpMode::ForceEmulate(s) = config.mode {
        return AdpDecision {
            path: AdpPath::Emulated(s),
            reason: AdpReason::Forced,
            esc_report: Some(esc()),
            modeled_cost_ratio: Some(modeled_cost(s, dims, config.cost_ratio)),
        };
    }
    let (m, n, k) = dims;
    if m.min(n).min(k) < config.min_dim {
        return AdpDecision::native(AdpReason::TooSmall, None);
    }
    let report = esc();
    let s = report.slices_required;
    if s > config.max_slices {
        return AdpDecision::native(AdpReason::EscTooLarge, Some(report));
    }
    let cost = modeled_cost(s, dims, config.cost_ratio);
    if cost >= 1.0 {
        return AdpDecision {
            modeled_cost_ratio: Some(cost),
            ..AdpDecision::native(AdpReason::CostModel, Some(report))
        };
    }
    AdpDecision {
        path: AdpPath::Emulated(s),
        reason: AdpReason::Ok,
        esc_report: Some(report),
        modeled_cost_ratio: Some(cost),
    }
}

/// Coarsened span estimate of `A B` with the configured block length.
pub fn estimate_esc(a: &MatrixF64, b: &MatrixF64, config: &AdpConfig) -> Result<EscReport> {
    let sa = block_exponent_stats(a, Orientation::ByRow, config.esc_block_len)?;
    let sb = block_exponent_stats(b, Orientation::ByColumn, config.esc_block_len)?;
    esc_coarsened(&sa, &sb, config.target_mantissa_bits)
}

/// `alpha * A B + beta * C` through the dispatcher.
///
/// The fallback output is bitwise that of [`native_gemm`]. `C` is only
/// read when `beta != 0`.
pub fn adp_gemm(
    a: &MatrixF64,
    b: &MatrixF64,
    alpha: f64,
    beta: f64,
    c: Option<&MatrixF64>,
    config: &AdpConfig,
) -> Result<(MatrixF64, AdpTrace)> {
    config.validate()?;
    if a.cols() != b.rows() {
        return Err(Error::DimensionMismatch(format!("{}x{} times {}x{}", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    let dims = (a.rows(), b.cols(), a.cols());
    let scan_a = scan_matrix(a);
    let scan_b = scan_matrix(b);
    let decision = decide(
        &scan_a,
        &scan_b,
        dims,
        || estimate_esc(a, b, config).expect("finite operands with matching shapes"),
        config,
    );
    let out = match decision.path {
        AdpPath::Emulated(s) => {
            assert!(!scan_a.has_exceptional && !scan_b.has_exceptional, "emulation must never see NaN or Inf");
            let params = GemmParams::new(s).with_scalars(alpha, beta);
            debug_assert_eq!(params.pair_policy, PairPolicy::Full);
            emulated_gemm(a, b, &params, c)?
        }
        AdpPath::NativeFallback => native_gemm(a, b, alpha, beta, c)?,
    };
    let trace = AdpTrace {
        path: decision.path,
        reason: decision.reason,
        esc_report: decision.esc_report,
        scan_a,
        scan_b,
        modeled_cost_ratio: decision.modeled_cost_ratio,
        m: dims.0,
        n: dims.1,
        k: dims.2,
    };
    Ok((out, trace))
}
