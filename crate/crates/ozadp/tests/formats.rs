use std::io::Cursor;

use ozadp::io::{read_binary, read_matrix, read_matrix_market, write_binary, write_matrix, write_matrix_market};
use ozadp_core::MatrixF64;
use proptest::prelude::*;

fn matrix(bits: impl Strategy<Value = u64> + Clone) -> impl Strategy<Value = MatrixF64> {
    (0usize..7, 0usize..7).prop_flat_map(move |(r, c)| {
        prop::collection::vec(bits.clone(), r * c)
            .prop_map(move |v| MatrixF64::from_vec(r, c, v.into_iter().map(f64::from_bits).collect()).unwrap())
    })
}

proptest! {
    #[test]
    fn binary_keeps_every_bit(m in matrix(any::<u64>())) {
        let mut buf = Vec::new();
        write_binary(&mut buf, &m).unwrap();
        let back = read_binary(Cursor::new(&buf)).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        prop_assert!(back.bitwise_eq(&m));
    }

    #[test]
    fn matrix_market_keeps_finite_values(m in matrix(any::<u64>().prop_filter("finite", |b| f64::from_bits(*b).is_finite()))) {
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &m).unwrap();
        let back = read_matrix_market(Cursor::new(&buf)).unwrap();
        prop_assert!(back.bitwise_eq(&m));
    }

    #[test]
    fn truncated_binary_is_rejected(m in matrix(any::<u64>()), cut in any::<prop::sample::Index>()) {
        let mut buf = Vec::new();
        write_binary(&mut buf, &m).unwrap();
        let len = cut.index(buf.len());
        prop_assert!(read_binary(Cursor::new(&buf[..len])).is_err());
    }
}

#[test]
fn files_dispatch_on_extension() {
    let dir = tempfile::tempdir().unwrap();
    let m = MatrixF64::from_rows(&[[1.0, -0.0, f64::MIN_POSITIVE / 8.0], [f64::MAX, 0.1, -3.5]]);
    for name in ["m.mtx", "m.bin", "m"] {
        let p = dir.path().join(name);
        write_matrix(&p, &m).unwrap();
        assert!(read_matrix(&p).unwrap().bitwise_eq(&m), "{name}");
    }
    let text = std::fs::read_to_string(dir.path().join("m.mtx")).unwrap();
    assert!(text.starts_with("%%MatrixMarket matrix array real general"));
    assert_eq!(&std::fs::read(dir.path().join("m.bin")).unwrap()[..4], b"ADPM");
}

#[test]
fn matrix_market_accepts_comments_and_case() {
    let text = "%%matrixmarket MATRIX array REAL general\n% note\n\n2 2\n1 3\n2\n4\n";
    let m = read_matrix_market(Cursor::new(text)).unwrap();
    assert_eq!(m.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn malformed_inputs_are_rejected() {
    for text in [
        "",
        "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 1.0\n",
        "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n",
        "%%MatrixMarket matrix array real general\n1 1\nabc\n",
        "%%MatrixMarket matrix array real general\n1 1\n1\n2\n",
    ] {
        assert!(read_matrix_market(Cursor::new(text)).is_err(), "{text:?}");
    }
    let mut buf = Vec::new();
    write_binary(&mut buf, &MatrixF64::identity(2)).unwrap();
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(read_binary(Cursor::new(&bad)).is_err());
    let mut bad = buf.clone();
    bad[4] = 9;
    assert!(read_binary(Cursor::new(&bad)).is_err());
    buf.push(0);
    assert!(read_binary(Cursor::new(&buf)).is_err());
}
