use std::path::Path;
use std::process::{Command, Output};

use ozadp::io::{read_matrix, write_matrix};
use ozadp_core::grading::gen_uniform_rect;
use ozadp_core::{exact_gemm, native_gemm, MatrixF64};

fn ozadp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ozadp")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gemm_emulates_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (gen_uniform_rect(40, 30, 1, (-1.0, 1.0)), gen_uniform_rect(30, 20, 2, (-1.0, 1.0)));
    let (pa, pb, out, trace) =
        (dir.path().join("a.mtx"), dir.path().join("b.bin"), dir.path().join("c.bin"), dir.path().join("t.json"));
    write_matrix(&pa, &a).unwrap();
    write_matrix(&pb, &b).unwrap();
    let o = ozadp(&[
        "gemm",
        "--a",
        p(&pa),
        "--b",
        p(&pb),
        "--out",
        p(&out),
        "--trace",
        p(&trace),
        "--min-dim",
        "1",
        "--mode",
        "emulate:32",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read_matrix(&out).unwrap().bitwise_eq(&exact_gemm(&a, &b).unwrap()));
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(t["path"], "Emulated");
    assert_eq!(t["reason"], "Forced");
    assert_eq!(t["slices"], 32);
    assert_eq!((t["m"].as_u64(), t["n"].as_u64(), t["k"].as_u64()), (Some(40), Some(20), Some(30)));
    let printed: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(printed, t);
}

#[test]
fn gemm_with_c_and_scalars_falls_back_when_small() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_uniform_rect(5, 4, 3, (0.0, 1.0));
    let b = gen_uniform_rect(4, 6, 4, (0.0, 1.0));
    let c = gen_uniform_rect(5, 6, 5, (0.0, 1.0));
    let paths: Vec<_> = ["a", "b", "c", "out.mtx"].iter().map(|n| dir.path().join(n)).collect();
    write_matrix(&paths[0], &a).unwrap();
    write_matrix(&paths[1], &b).unwrap();
    write_matrix(&paths[2], &c).unwrap();
    let o = ozadp(&[
        "gemm",
        "--a",
        p(&paths[0]),
        "--b",
        p(&paths[1]),
        "--c",
        p(&paths[2]),
        "--alpha",
        "-2",
        "--beta",
        "0.5",
        "--out",
        p(&paths[3]),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("\"reason\":\"TooSmall\""));
    let want = native_gemm(&a, &b, -2.0, 0.5, Some(&c)).unwrap();
    assert!(read_matrix(&paths[3]).unwrap().bitwise_eq(&want));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb, out) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    write_matrix(&pa, &MatrixF64::identity(3)).unwrap();
    write_matrix(&pb, &MatrixF64::identity(4)).unwrap();
    assert_eq!(ozadp(&["gemm", "--a", p(&pa)]).status.code(), Some(2));
    assert_eq!(
        ozadp(&["gemm", "--a", p(&pa), "--b", p(&pb), "--out", p(&out), "--mode", "turbo"]).status.code(),
        Some(2)
    );
    // Shape mismatch is a library contract error.
    assert_eq!(ozadp(&["gemm", "--a", p(&pa), "--b", p(&pb), "--out", p(&out)]).status.code(), Some(3));
    std::fs::write(&pb, b"not a matrix").unwrap();
    assert_eq!(ozadp(&["gemm", "--a", p(&pa), "--b", p(&pb), "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(ozadp(&["--threads", "0", "selftest"]).status.code(), Some(2));
    assert_eq!(ozadp(&["--help"]).status.code(), Some(0));
}

#[test]
fn esc_reports_span_and_slices() {
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.mtx"), dir.path().join("b.mtx"));
    write_matrix(&pa, &MatrixF64::from_rows(&[[1.0, 2f64.powi(-20)]])).unwrap();
    write_matrix(&pb, &MatrixF64::from_rows(&[[2f64.powi(-20)], [1.0]])).unwrap();
    for flag in [&["--exact"][..], &[][..]] {
        let mut args = vec!["esc", "--a", p(&pa), "--b", p(&pb)];
        args.extend_from_slice(flag);
        let o = ozadp(&args);
        assert!(o.status.success());
        let text = stdout(&o);
        assert!(text.contains("esc_bits=21\n"), "{text}");
        assert!(text.contains("slices=10\n"), "{text}");
    }
}

#[test]
fn grade_and_qr_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t2.csv");
    let o =
        ozadp(&["grade", "test2", "--n", "32", "--b-list", "1,2,4", "--modes", "emulate:7,native", "--csv", p(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "test,n,b,mode,target_bits,esc_bits,slices,fallback,max_err,avg_err,seed");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("test2,32,1,emulate:7,53,"));

    let csv = dir.path().join("u.csv");
    let o =
        ozadp(&["--threads", "2", "grade", "uniform", "--n-list", "16,32", "--modes", "emulate:8", "--csv", p(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);

    let hist = dir.path().join("h.csv");
    let o = ozadp(&["qr", "--m", "96", "--n", "64", "--panel", "16", "--min-dim", "1", "--csv", p(&hist)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("panels=4\n") && text.contains("gemm_calls=12\n"), "{text}");
    let h = std::fs::read_to_string(&hist).unwrap();
    assert!(h.starts_with("slices,count\n"));
    let total: usize = h.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 12);
}

#[test]
fn selftest_passes() {
    let o = ozadp(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}
