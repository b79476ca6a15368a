//! Fast randomized checks of the core library, run by `ozadp selftest`.

use ozadp_core::grading::{gen_uniform_rect, rng_from_seed};
use ozadp_core::igemm::{emulated_gemm_on, Backend};
use ozadp_core::{
    adp_gemm, decompose, emulated_gemm, esc_exact, exact_gemm, native_gemm, reconstruct, AdpConfig, AdpMode, AdpPath,
    GemmParams, MatrixF64, Orientation,
};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> CheckResult {
    match f() {
        Ok(detail) => CheckResult { name, passed: true, detail },
        Err(detail) => CheckResult { name, passed: false, detail },
    }
}

/// Random matrix whose entries span `2^-span ..= 2^span` in magnitude.
fn spread(rows: usize, cols: usize, span: i32, seed: u64) -> MatrixF64 {
    let mut rng = rng_from_seed(seed);
    MatrixF64::from_fn(rows, cols, |_, _| {
        let m: f64 = rng.random_range(1.0..2.0);
        let e = rng.random_range(-span..=span);
        let v = m * f64::powi(2.0, e);
        if rng.random_bool(0.5) {
            -v
        } else {
            v
        }
    })
}

fn ctx(e: ozadp_core::Error) -> String {
    e.to_string()
}

/// Runs every check; `scale` multiplies the number of random trials.
pub fn run_all(scale: usize) -> Vec<CheckResult> {
    let trials = 20 * scale;
    vec![
        check("slice-roundtrip", || {
            // Rows with one shared exponent fit in 7 slices exactly.
            for t in 0..trials as u64 {
                let mut rng = rng_from_seed(t);
                let a =
                    MatrixF64::from_fn(8, 16, |i, _| rng.random_range(1.0..2.0) * f64::powi(2.0, i as i32 * 37 - 100));
                let sm = decompose(&a, Orientation::ByRow, 7).map_err(ctx)?;
                if !reconstruct(&sm).bitwise_eq(&a) {
                    return Err(format!("trial {t}: reconstruction differs"));
                }
            }
            Ok(format!("{trials} matrices"))
        }),
        check("saturated-exact", || {
            for t in 0..trials as u64 {
                let a = spread(5, 9, 40, 2 * t);
                let b = spread(9, 4, 40, 2 * t + 1);
                let got = emulated_gemm(&a, &b, &GemmParams::new(32), None).map_err(ctx)?;
                if !got.bitwise_eq(&exact_gemm(&a, &b).map_err(ctx)?) {
                    return Err(format!("trial {t}: 32 slices not correctly rounded"));
                }
            }
            Ok(format!("{trials} products at 32 slices"))
        }),
        check("esc-exact-bound", || {
            let cfg = AdpConfig::default();
            for t in 0..trials as u64 {
                let a = spread(12, 20, 30, 3 * t);
                let b = spread(20, 7, 30, 3 * t + 1);
                let exact = esc_exact(&a, &b, 53).map_err(ctx)?;
                for block in [1, 4, 256] {
                    let cfg = AdpConfig { esc_block_len: block, ..cfg };
                    let est = ozadp_core::adp::estimate_esc(&a, &b, &cfg).map_err(ctx)?;
                    if est.esc_bits < exact.esc_bits || (block == 1 && est.esc_bits != exact.esc_bits) {
                        return Err(format!("trial {t}, block {block}: {} vs exact {}", est.esc_bits, exact.esc_bits));
                    }
                }
            }
            Ok(format!("{trials} pairs, blocks 1/4/256"))
        }),
        check("k-permutation", || {
            let a = gen_uniform_rect(6, 40, 11, (-1.0, 1.0));
            let b = gen_uniform_rect(40, 5, 12, (-1.0, 1.0));
            let params = GemmParams::new(7);
            let base = emulated_gemm(&a, &b, &params, None).map_err(ctx)?;
            let perm: Vec<usize> = (0..40).rev().collect();
            let ap = MatrixF64::from_fn(6, 40, |i, l| a.row(i)[perm[l]]);
            let bp = MatrixF64::from_fn(40, 5, |l, j| b.row(perm[l])[j]);
            if emulated_gemm(&ap, &bp, &params, None).map_err(ctx)?.bitwise_eq(&base) {
                Ok("reversed inner dimension".into())
            } else {
                Err("result depends on summation order".into())
            }
        }),
        check("backends-agree", || {
            if !Backend::Avx512Vnni.is_available() {
                return Ok("only the portable backend is available".into());
            }
            let a = spread(33, 70, 10, 21);
            let b = spread(70, 35, 10, 22);
            let params = GemmParams::new(9);
            let p = emulated_gemm_on(Backend::Portable, &a, &b, &params, None).map_err(ctx)?;
            let v = emulated_gemm_on(Backend::Avx512Vnni, &a, &b, &params, None).map_err(ctx)?;
            if p.bitwise_eq(&v) {
                Ok("portable == avx512-vnni".into())
            } else {
                Err("backends disagree".into())
            }
        }),
        check("exceptional-fallback", || {
            let cfg = AdpConfig::default().with_min_dim(1);
            for t in 0..trials as u64 {
                let mut a = gen_uniform_rect(8, 8, 100 + t, (-1.0, 1.0));
                let b = gen_uniform_rect(8, 8, 200 + t, (-1.0, 1.0));
                let specials = [f64::NAN, f64::INFINITY, f64::NEG_INFINITY];
                a.as_mut_slice()[(t as usize * 7) % 64] = specials[t as usize % 3];
                let (got, trace) = adp_gemm(&a, &b, 1.0, 0.0, None, &cfg).map_err(ctx)?;
                let want = native_gemm(&a, &b, 1.0, 0.0, None).map_err(ctx)?;
                if trace.path != AdpPath::NativeFallback || !got.bitwise_eq(&want) {
                    return Err(format!("trial {t}: not the native result"));
                }
            }
            Ok(format!("{trials} injections"))
        }),
        check("forced-native", || {
            let cfg = AdpConfig::default().with_mode(AdpMode::ForceNative);
            let a = gen_uniform_rect(4, 4, 1, (0.0, 1.0));
            let (got, _) = adp_gemm(&a, &a, 2.0, 0.0, None, &cfg).map_err(ctx)?;
            if got.bitwise_eq(&native_gemm(&a, &a, 2.0, 0.0, None).map_err(ctx)?) {
                Ok("bitwise native".into())
            } else {
                Err("forced native differs from the native kernel".into())
            }
        }),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for r in super::run_all(1) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
