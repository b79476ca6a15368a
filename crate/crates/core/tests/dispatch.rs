use ozadp_core::oracle::exact_gemm_values;
use ozadp_core::{
    adp_gemm, decompose, emulated_gemm, esc_exact, native_gemm, AdpConfig, AdpMode, AdpPath, AdpReason, ExactScalar,
    GemmParams, MatrixF64, Orientation,
};
use proptest::prelude::*;

fn value(span: i32) -> impl Strategy<Value = f64> {
    (1.0f64..2.0, -span..=span, any::<bool>()).prop_map(|(m, e, neg)| {
        let v = m * 2f64.powi(e);
        if neg {
            -v
        } else {
            v
        }
    })
}

fn operands(span: i32) -> impl Strategy<Value = (MatrixF64, MatrixF64)> {
    (1usize..6, 1usize..6, 1usize..20).prop_flat_map(move |(m, n, k)| {
        (
            prop::collection::vec(value(span), m * k).prop_map(move |v| MatrixF64::from_vec(m, k, v).unwrap()),
            prop::collection::vec(value(span), k * n).prop_map(move |v| MatrixF64::from_vec(k, n, v).unwrap()),
        )
    })
}

fn special() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(f64::NAN),
        Just(f64::INFINITY),
        Just(f64::NEG_INFINITY),
        Just(f64::from_bits(0x7ff0_0000_dead_beef))
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exceptional_inputs_match_native_bitwise(
        (a, b) in operands(10),
        pos in any::<prop::sample::Index>(),
        v in special(),
        in_a in any::<bool>(),
        forced in 1usize..12,
    ) {
        let (mut a, mut b) = (a, b);
        let target = if in_a { a.as_mut_slice() } else { b.as_mut_slice() };
        let idx = pos.index(target.len());
        target[idx] = v;
        for mode in [AdpMode::Auto, AdpMode::ForceEmulate(forced)] {
            let cfg = AdpConfig::default().with_min_dim(1).with_mode(mode);
            let (got, trace) = adp_gemm(&a, &b, 1.5, 0.0, None, &cfg).unwrap();
            prop_assert_eq!(trace.path, AdpPath::NativeFallback);
            prop_assert_eq!(trace.reason, AdpReason::ExceptionalValues);
            prop_assert!(trace.esc_report.is_none());
            prop_assert!(got.bitwise_eq(&native_gemm(&a, &b, 1.5, 0.0, None).unwrap()));
        }
    }

    #[test]
    fn estimate_never_undercuts_exact_span((a, b) in operands(40)) {
        let cfg = AdpConfig::default().with_min_dim(1).with_mode(AdpMode::ForceEmulate(7));
        let (_, trace) = adp_gemm(&a, &b, 1.0, 0.0, None, &cfg).unwrap();
        let est = trace.esc_report.unwrap();
        let exact = esc_exact(&a, &b, 53).unwrap();
        prop_assert!(est.esc_bits >= exact.esc_bits);
        prop_assert!(est.slices_required >= exact.slices_required);
    }

    #[test]
    fn truncation_error_is_bounded((a, b) in operands(25), s in 2usize..10) {
        // Each slice product misses less than 2^(EA_i + EB_j + 2 - 8s) per term,
        // and the result is rounded once.
        let got = emulated_gemm(&a, &b, &GemmParams::new(s), None).unwrap();
        let ea = decompose(&a, Orientation::ByRow, s).unwrap().scale_exp().to_vec();
        let eb = decompose(&b, Orientation::ByColumn, s).unwrap().scale_exp().to_vec();
        let exact = exact_gemm_values(&a, &b).unwrap();
        let k = a.cols() as f64;
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let x = &exact[i * b.cols() + j];
                let err = ExactScalar::from_f64(got[(i, j)]).unwrap().sub(x).abs().to_f64();
                let trunc = k * 2f64.powi(ea[i] + eb[j] + 2 - 8 * s as i32);
                let round = x.to_f64().abs() * f64::EPSILON;
                prop_assert!(err <= trunc + round, "({}, {}): {} > {} + {}", i, j, err, trunc, round);
            }
        }
    }

    #[test]
    fn forced_native_is_native_bitwise((a, b) in operands(30), alpha in -4.0f64..4.0) {
        let cfg = AdpConfig::default().with_mode(AdpMode::ForceNative);
        let (got, trace) = adp_gemm(&a, &b, alpha, 0.0, None, &cfg).unwrap();
        prop_assert_eq!(trace.reason, AdpReason::Forced);
        prop_assert!(got.bitwise_eq(&native_gemm(&a, &b, alpha, 0.0, None).unwrap()));
    }
}
