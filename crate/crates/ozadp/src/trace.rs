//! JSON rendering of dispatch traces.
//!
//! Stable keys: `path`, `reason`, `esc_bits`, `slices`, `m`, `n`, `k`.
//! Absent values are `null`. The remaining keys are informational.

use ozadp_core::AdpTrace;
use serde_json::{json, Value};

pub fn trace_json(t: &AdpTrace) -> Value {
    json!({
        "path": t.path.as_str(),
        "reason": t.reason.as_str(),
        "esc_bits": t.esc_bits(),
        "slices": t.slices(),
        "m": t.m,
        "n": t.n,
        "k": t.k,
        "target_bits": t.esc_report.map(|r| r.target_bits),
        "modeled_cost_ratio": t.modeled_cost_ratio,
        "nan_count": t.scan_a.nan_count + t.scan_b.nan_count,
        "inf_count": t.scan_a.inf_count + t.scan_b.inf_count,
        "negzero_count": t.scan_a.negzero_count + t.scan_b.negzero_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ozadp_core::{adp_gemm, AdpConfig, MatrixF64};

    #[test]
    fn fallback_trace_keys() {
        let mut a = MatrixF64::identity(3);
        a[(1, 2)] = f64::NAN;
        let (_, t) = adp_gemm(&a, &a, 1.0, 0.0, None, &AdpConfig::default()).unwrap();
        let v = trace_json(&t);
        assert_eq!(v["path"], "NativeFallback");
        assert_eq!(v["reason"], "ExceptionalValues");
        assert!(v["esc_bits"].is_null() && v["slices"].is_null());
        assert_eq!((v["m"].as_u64(), v["n"].as_u64(), v["k"].as_u64()), (Some(3), Some(3), Some(3)));
        assert_eq!(v["nan_count"], 2);
    }
}
