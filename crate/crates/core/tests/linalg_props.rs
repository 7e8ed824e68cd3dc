use airga::linalg::{dense_solve, thin_qr, DenseMatrix, SparseMatrix};
use proptest::prelude::*;

fn sparse_strategy(n: usize) -> impl Strategy<Value = SparseMatrix> {
    prop::collection::vec((0..n, 0..n, -5.0f64..5.0), 0..4 * n).prop_map(move |t| {
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    })
}

fn dense_strategy(r: usize, c: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-1.0f64..1.0, r * c)
        .prop_map(move |v| DenseMatrix::from_col_major(r, c, v).unwrap())
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spmv_is_linear(a in sparse_strategy(12), x in prop::collection::vec(-1.0f64..1.0, 12),
                      y in prop::collection::vec(-1.0f64..1.0, 12), s in -3.0f64..3.0) {
        let comb: Vec<f64> = x.iter().zip(&y).map(|(p, q)| s * p + q).collect();
        let lhs = a.spmv(&comb).unwrap();
        let ax = a.spmv(&x).unwrap();
        let ay = a.spmv(&y).unwrap();
        let rhs: Vec<f64> = ax.iter().zip(&ay).map(|(p, q)| s * p + q).collect();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn spmv_matches_dense(a in sparse_strategy(9), x in prop::collection::vec(-1.0f64..1.0, 9)) {
        let d = a.to_dense();
        prop_assert!(close(&a.spmv(&x).unwrap(), &d.matvec(&x).unwrap(), 1e-13));
    }

    #[test]
    fn frob_squared_is_self_trace_inner(a in sparse_strategy(10)) {
        let f = a.frob_norm();
        let t = a.trace_inner(&a).unwrap();
        prop_assert!((f * f - t).abs() <= 1e-12 * (1.0 + t));
    }

    #[test]
    fn add_scaled_matches_dense(a in sparse_strategy(8), b in sparse_strategy(8),
                                ca in -2.0f64..2.0, cb in -2.0f64..2.0) {
        let s = a.add_scaled(&b, ca, cb).unwrap().to_dense();
        let d = a.to_dense().add_scaled(&b.to_dense(), ca, cb).unwrap();
        prop_assert!(close(s.values(), d.values(), 1e-14));
    }

    #[test]
    fn transpose_is_involution(a in sparse_strategy(7)) {
        prop_assert_eq!(a.transpose().transpose().to_dense(), a.to_dense());
    }

    #[test]
    fn sparse_matmul_matches_dense(a in sparse_strategy(6), b in sparse_strategy(6)) {
        let s = a.matmul(&b).unwrap().to_dense();
        let d = a.to_dense().matmul(&b.to_dense()).unwrap();
        prop_assert!(close(s.values(), d.values(), 1e-12));
    }

    #[test]
    fn qr_reconstructs(a in dense_strategy(10, 4)) {
        let qr = thin_qr(&a).unwrap();
        prop_assume!(qr.deficient.is_empty());
        let back = qr.q.matmul(&qr.r).unwrap();
        prop_assert!(close(back.values(), a.values(), 1e-12));
        let g = qr.q.t_matmul(&qr.q).unwrap();
        let defect = g.sub(&DenseMatrix::identity(4)).unwrap().frob_norm();
        prop_assert!(defect <= 1e-12);
        for i in 0..4 {
            prop_assert!(qr.r[(i, i)] >= 0.0);
            for j in 0..i {
                prop_assert_eq!(qr.r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn dense_solve_matches_nalgebra(a in dense_strategy(6, 6), b in dense_strategy(6, 2)) {
        let mut a = a;
        for i in 0..6 {
            a[(i, i)] += 4.0;
        }
        let x = dense_solve(&a, &b).unwrap();
        let na = nalgebra::DMatrix::from_column_slice(6, 6, a.values());
        let nb = nalgebra::DMatrix::from_column_slice(6, 2, b.values());
        let nx = na.lu().solve(&nb).unwrap();
        prop_assert!(close(x.values(), nx.as_slice(), 1e-11));
    }
}

#[test]
fn qr_flags_dependent_columns() {
    let a = DenseMatrix::from_rows(&[
        vec![1.0, 2.0, 0.0],
        vec![0.0, 0.0, 1.0],
        vec![1.0, 2.0, 0.0],
        vec![0.0, 0.0, 3.0],
    ]);
    let qr = thin_qr(&a).unwrap();
    assert_eq!(qr.deficient, vec![1]);
    assert_eq!(qr.rank, 2);
    assert_eq!(qr.range_basis().ncols(), 2);
}

#[test]
fn triplet_duplicates_are_summed() {
    let a = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.5), (0, 1, 2.5), (1, 0, -1.0)]).unwrap();
    assert_eq!(a.get(0, 1), 4.0);
    assert_eq!(a.get(1, 0), -1.0);
    assert_eq!(a.nnz(), 2);
}
