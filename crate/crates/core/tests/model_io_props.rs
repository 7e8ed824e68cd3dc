use std::fs;

use airga::linalg::{DenseMatrix, SparseMatrix};
use airga::model_io::{beam_generate, read_mm, read_system, write_mm, write_system, MassModel, ModelSpec};
use airga::Error;
use proptest::prelude::*;

/// Dense Cholesky attempt; `false` on a non-positive pivot.
fn cholesky_ok(a: &DenseMatrix) -> bool {
    let n = a.nrows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return false;
        }
        l[(j, j)] = d.sqrt();
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / l[(j, j)];
        }
    }
    true
}

/// Tridiagonal Cholesky, for sizes where the dense one is wasteful.
fn tridiag_cholesky_ok(a: &SparseMatrix) -> bool {
    let n = a.nrows();
    let (lo, hi) = a.bandwidth();
    assert!(lo <= 1 && hi <= 1);
    let mut prev_l = 0.0;
    let mut prev_sub = 0.0;
    for j in 0..n {
        let d = a.get(j, j) - prev_sub * prev_sub;
        if !(d > 0.0) {
            return false;
        }
        prev_l = d.sqrt();
        prev_sub = if j + 1 < n { a.get(j + 1, j) / prev_l } else { 0.0 };
    }
    prev_l > 0.0
}

fn sparse_strategy(n: usize) -> impl Strategy<Value = SparseMatrix> {
    prop::collection::vec((0..n, 0..n, -1e3f64..1e3), 0..3 * n)
        .prop_map(move |t| SparseMatrix::from_triplets(n, n, &t).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mm_round_trip_is_bitwise(a in sparse_strategy(50), scale in -300i32..300) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mtx");
        let a = a.scaled(10f64.powi(scale / 10));
        write_mm(&p, &a).unwrap();
        let b = read_mm(&p).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn system_round_trip(n in 2usize..40, alpha in 0.01f64..0.99, beta in 0.01f64..0.99) {
        let dir = tempfile::tempdir().unwrap();
        let spec = ModelSpec { n, alpha, beta, ..ModelSpec::with_n(n) };
        let sys = beam_generate(&spec).unwrap();
        write_system(dir.path(), &sys).unwrap();
        let back = read_system(dir.path()).unwrap();
        prop_assert_eq!(&back.m, &sys.m);
        prop_assert_eq!(&back.d, &sys.d);
        prop_assert_eq!(&back.k, &sys.k);
        prop_assert_eq!(&back.f, &sys.f);
        prop_assert_eq!(&back.cp, &sys.cp);
        prop_assert_eq!(back.alpha, alpha);
        prop_assert_eq!(back.beta, beta);
        prop_assert!(back.proportional);
    }
}

#[test]
fn identity_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("i.mtx");
    write_mm(&p, &SparseMatrix::identity(3)).unwrap();
    assert_eq!(read_mm(&p).unwrap(), SparseMatrix::identity(3));
}

#[test]
fn symmetric_storage_expands() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("k.mtx");
    fs::write(
        &p,
        "%%MatrixMarket matrix coordinate real symmetric\n% lower triangle\n3 3 5\n1 1 2\n2 1 -1\n2 2 2\n3 2 -1\n3 3 2\n",
    )
    .unwrap();
    let k = read_mm(&p).unwrap();
    let want = DenseMatrix::from_rows(&[vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 2.0]]);
    assert_eq!(k.to_dense(), want);
}

#[test]
fn malformed_files_report_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1.0\n", 3),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3),
        ("%%MatrixMarket matrix array real general\n2 2\n", 1),
    ];
    for (i, (text, line)) in cases.iter().enumerate() {
        let p = dir.path().join(format!("bad{i}.mtx"));
        fs::write(&p, text).unwrap();
        match read_mm(&p) {
            Err(Error::Parse { line: l, .. }) => assert_eq!(l, *line, "case {i}"),
            other => panic!("case {i}: expected parse error, got {other:?}"),
        }
    }
}

#[test]
fn manifest_only_damping_is_reconstructed() {
    let dir = tempfile::tempdir().unwrap();
    let sys = beam_generate(&ModelSpec::with_n(100)).unwrap();
    write_system(dir.path(), &sys).unwrap();
    let files: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(files.len(), 6, "{files:?}");
    fs::remove_file(dir.path().join("D.mtx")).unwrap();
    let back = read_system(dir.path()).unwrap();
    assert_eq!(back.d, sys.d);
    assert_eq!(back.damping_defect().unwrap(), 0.0);
}

#[test]
fn missing_and_inconsistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let sys = beam_generate(&ModelSpec::with_n(10)).unwrap();
    write_system(dir.path(), &sys).unwrap();
    fs::remove_file(dir.path().join("K.mtx")).unwrap();
    let err = read_system(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("K.mtx"), "{err}");

    write_system(dir.path(), &sys).unwrap();
    let f = SparseMatrix::from_triplets(9, 1, &[(0, 0, 1.0)]).unwrap();
    write_mm(&dir.path().join("F.mtx"), &f).unwrap();
    assert!(matches!(read_system(dir.path()), Err(Error::Validation(_))));
}

#[test]
fn generated_matrices_are_spd() {
    for n in [2, 10, 100] {
        for mass in [MassModel::Identity, MassModel::Consistent] {
            let sys = beam_generate(&ModelSpec { mass, ..ModelSpec::with_n(n) }).unwrap();
            for a in [&sys.m, &sys.d, &sys.k] {
                assert!(cholesky_ok(&a.to_dense()), "n={n} {mass:?}");
            }
        }
    }
    let sys = beam_generate(&ModelSpec::with_n(2000)).unwrap();
    for a in [&sys.m, &sys.d, &sys.k] {
        assert!(tridiag_cholesky_ok(a));
        assert_eq!(&a.transpose(), a);
    }
}
