use airga::krylov::{block_solve, pcg_solve, Identity};
use airga::linalg::{dense_solve, DenseMatrix, SparseMatrix};
use airga::model_io::{beam_generate, ModelSpec};
use airga::spai::{
    build_alpha, chain_quality, chain_residual_exact, spai_build, spai_update, update_alpha,
    PreconditionerChain, SpaiOptions,
};
use proptest::prelude::*;

/// Random diagonally dominant symmetric tridiagonal matrix.
fn spd_band(n: usize) -> impl Strategy<Value = SparseMatrix> {
    (prop::collection::vec(0.1f64..2.0, n), prop::collection::vec(-0.5f64..0.5, n - 1)).prop_map(
        move |(d, e)| {
            let mut t = Vec::new();
            for i in 0..n {
                // Diagonal dominance keeps it SPD.
                t.push((i, i, 1.0 + 2.0 * d[i]));
                if i + 1 < n {
                    t.push((i, i + 1, e[i]));
                    t.push((i + 1, i, e[i]));
                }
            }
            SparseMatrix::from_triplets(n, n, &t).unwrap()
        },
    )
}

fn a_norm_err(a: &DenseMatrix, x: &[f64], xs: &[f64]) -> f64 {
    let e: Vec<f64> = x.iter().zip(xs).map(|(p, q)| p - q).collect();
    let ae = a.matvec(&e).unwrap();
    e.iter().zip(&ae).map(|(p, q)| p * q).sum::<f64>().sqrt()
}

fn shifted(n: usize, s: f64) -> SparseMatrix {
    beam_generate(&ModelSpec::with_n(n)).unwrap().shifted(s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cg_meets_tolerance_and_matches_dense(a in spd_band(30), b in prop::collection::vec(-1.0f64..1.0, 30)) {
        let rep = pcg_solve(&a, &Identity(30), &b, 1e-10, 300).unwrap();
        prop_assert!(rep.converged);
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rn = rep.residual.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(rn <= 1e-10 * bn);
        let x = dense_solve(&a.to_dense(), &DenseMatrix::column_vector(&b)).unwrap();
        for (p, q) in rep.solution.iter().zip(x.col(0)) {
            prop_assert!((p - q).abs() <= 1e-8 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn cg_energy_error_is_monotone(a in spd_band(20), b in prop::collection::vec(-1.0f64..1.0, 20)) {
        let ad = a.to_dense();
        let xs = dense_solve(&ad, &DenseMatrix::column_vector(&b)).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..12 {
            let rep = pcg_solve(&a, &Identity(20), &b, 1e-300, k).unwrap();
            let e = a_norm_err(&ad, &rep.solution, xs.col(0));
            prop_assert!(e <= prev * (1.0 + 1e-10) + 1e-14, "k={k}: {e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn cg_early_residuals_are_orthogonal(a in spd_band(25), b in prop::collection::vec(-1.0f64..1.0, 25)) {
        // r_k ⊥ r_j for the first few steps, before rounding sets in.
        let mut res = Vec::new();
        for k in 0..4 {
            if k == 0 {
                res.push(b.clone());
            } else {
                res.push(pcg_solve(&a, &Identity(25), &b, 1e-300, k).unwrap().recurrence_residual);
            }
        }
        for i in 0..res.len() {
            for j in 0..i {
                let d: f64 = res[i].iter().zip(&res[j]).map(|(p, q)| p * q).sum();
                let ni = res[i].iter().map(|v| v * v).sum::<f64>().sqrt();
                let nj = res[j].iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!(d.abs() <= 1e-10 * ni * nj.max(1e-300));
            }
        }
    }

    #[test]
    fn build_alpha_minimizes_identity_residual(a in spd_band(15)) {
        let alpha = build_alpha(&a);
        let f = |t: f64| {
            let mut d = a.to_dense().scaled(-t);
            for i in 0..15 { d[(i, i)] += 1.0; }
            d.frob_norm()
        };
        let base = f(alpha);
        for t in [alpha * 0.99, alpha * 1.01, alpha * 0.5, alpha * 2.0] {
            prop_assert!(base <= f(t) + 1e-12);
        }
    }

    #[test]
    fn update_alpha_minimizes_pair_residual(a in spd_band(15), b in spd_band(15)) {
        let alpha = update_alpha(&a, &b).unwrap();
        let f = |t: f64| a.add_scaled(&b, 1.0, -t).unwrap().frob_norm();
        let base = f(alpha);
        for t in [alpha - 1e-3, alpha + 1e-3, alpha * 0.5, alpha * 1.5] {
            prop_assert!(base <= f(t) + 1e-12);
        }
    }

    #[test]
    fn spai_columns_meet_tolerance(a in spd_band(40), tol in 0.02f64..0.3) {
        let opts = SpaiOptions { tol, ..SpaiOptions::default() };
        let p = spai_build(&a, &opts).unwrap();
        for r in &p.column_residuals {
            prop_assert!(*r <= tol);
        }
        // Columns are exact residuals of ‖e_j − K p_j‖.
        let kp = a.matmul(&p.matrix).unwrap().to_dense();
        for j in 0..40 {
            let mut s = 0.0;
            for i in 0..40 {
                let e = if i == j { 1.0 } else { 0.0 };
                s += (e - kp[(i, j)]).powi(2);
            }
            prop_assert!((s.sqrt() - p.column_residuals[j]).abs() <= 1e-10);
        }
    }
}

#[test]
fn block_solve_columns_are_independent() {
    let k = shifted(50, 3.0);
    let b = DenseMatrix::from_col_major(50, 2, (0..100).map(|i| ((i * 7) % 11) as f64 - 5.0).collect()).unwrap();
    let bs = block_solve(&k, &Identity(50), &b, 1e-10, 500).unwrap();
    for c in 0..2 {
        let one = pcg_solve(&k, &Identity(50), b.col(c), 1e-10, 500).unwrap();
        assert_eq!(one.solution.as_slice(), bs.x.col(c));
    }
}

#[test]
fn spai_speeds_up_cg() {
    let k = shifted(200, 10.0);
    let b = vec![1.0; 200];
    let plain = pcg_solve(&k, &Identity(200), &b, 1e-10, 2000).unwrap();
    let chain = PreconditionerChain::from_base(spai_build(&k, &SpaiOptions::default()).unwrap());
    let pre = pcg_solve(&k, &chain, &b, 1e-10, 2000).unwrap();
    assert!(pre.converged && plain.converged);
    assert!(pre.iterations <= plain.iterations);
}

#[test]
fn update_of_equal_matrices_is_identity() {
    let k = shifted(60, 12.0);
    let q = spai_update(&k, &k, &SpaiOptions::default()).unwrap();
    assert_eq!(q.alpha, 1.0);
    assert_eq!(q.matrix, SparseMatrix::identity(60));
}

#[test]
fn update_residual_is_bounded() {
    let opts = SpaiOptions::default();
    for (s0, s1) in [(1.0, 1.2), (50.5, 47.0), (0.03, 0.031)] {
        let (ko, kn) = (shifted(120, s0), shifted(120, s1));
        let q = spai_update(&ko, &kn, &opts).unwrap();
        let r = ko.add_scaled(&kn.matmul(&q.matrix).unwrap(), 1.0, -1.0).unwrap();
        assert!(r.frob_norm() <= opts.tol * (120f64).sqrt(), "{s0}->{s1}: {}", r.frob_norm());
    }
}

#[test]
fn chain_quality_tracks_exact_value() {
    let k = shifted(20, 10.0);
    let chain = PreconditionerChain::from_base(spai_build(&k, &SpaiOptions { tol: 0.2, ..SpaiOptions::default() }).unwrap());
    let exact = chain_residual_exact(&chain, &k).unwrap();
    let dense = {
        let p = chain.factors().next().unwrap().matrix.to_dense();
        let mut r = k.to_dense().matmul(&p).unwrap().scaled(-1.0);
        for i in 0..20 { r[(i, i)] += 1.0; }
        r.frob_norm()
    };
    assert!((exact - dense).abs() <= 1e-12 * (1.0 + dense));
    let est = chain_quality(&chain, &k, 2000, 42).unwrap();
    assert!((est - exact).abs() <= 0.3 * exact);
    assert_eq!(est, chain_quality(&chain, &k, 2000, 42).unwrap());
}
