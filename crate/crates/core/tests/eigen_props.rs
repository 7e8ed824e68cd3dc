use airga::eigen::{eig_order, eigenvalues, lyap_solve, quad_eig, quad_eig_checked, real_schur};
use airga::linalg::DenseMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn dense(r: usize, c: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-1.0f64..1.0, r * c)
        .prop_map(move |v| DenseMatrix::from_col_major(r, c, v).unwrap())
}

fn spd(g: &DenseMatrix, shift: f64) -> DenseMatrix {
    let mut a = g.t_matmul(g).unwrap();
    for i in 0..a.nrows() {
        a[(i, i)] += shift;
    }
    a
}

fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
    v.sort_by(eig_order);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn schur_reconstructs(a in dense(7, 7)) {
        let s = real_schur(&a).unwrap();
        let back = s.q.matmul(&s.t).unwrap().matmul(&s.q.transpose()).unwrap();
        prop_assert!(back.sub(&a).unwrap().frob_norm() <= 1e-12 * (1.0 + a.frob_norm()));
        let g = s.q.t_matmul(&s.q).unwrap();
        prop_assert!(g.sub(&DenseMatrix::identity(7)).unwrap().frob_norm() <= 1e-12);
        for i in 0..7usize {
            for j in 0..i.saturating_sub(1) {
                prop_assert_eq!(s.t[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn eigenvalues_match_nalgebra(a in dense(6, 6)) {
        let ours = sorted(eigenvalues(&a).unwrap());
        let na = nalgebra::DMatrix::from_column_slice(6, 6, a.values());
        let theirs = sorted(na.complex_eigenvalues().iter().map(|z| Complex64::new(z.re, z.im)).collect());
        // Multiset comparison by greedy matching; sort order alone is fragile for near-ties.
        let mut used = vec![false; theirs.len()];
        for z in &ours {
            let (k, d) = theirs
                .iter()
                .enumerate()
                .filter(|(k, _)| !used[*k])
                .map(|(k, w)| (k, (z - w).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            used[k] = true;
            prop_assert!(d <= 1e-7 * (1.0 + z.norm()), "{z} vs {}", theirs[k]);
        }
    }

    #[test]
    fn quad_eig_residuals_are_small(gm in dense(6, 6), gd in dense(6, 6), gk in dense(6, 6)) {
        let (m, d, k) = (spd(&gm, 0.5), spd(&gd, 0.1), spd(&gk, 0.5));
        let s = quad_eig_checked(&m, &d, &k).unwrap();
        prop_assert_eq!(s.eigenvalues.len(), 12);
        for r in &s.residual_norms {
            prop_assert!(*r <= 1e-8, "residual {r}");
        }
        // SPD triples are stable.
        for l in &s.eigenvalues {
            prop_assert!(l.re < 0.0);
        }
    }

    #[test]
    fn lyap_solution_is_symmetric_psd(g in dense(5, 5), b in dense(5, 2)) {
        // A = −(GᵀG + I) is stable; W = BBᵀ.
        let a = spd(&g, 1.0).scaled(-1.0);
        let w = b.matmul(&b.transpose()).unwrap();
        let p = lyap_solve(&a, &w).unwrap();
        let mut res = a.matmul(&p).unwrap();
        res.axpy(1.0, &p.matmul(&a.transpose()).unwrap()).unwrap();
        res.axpy(1.0, &w).unwrap();
        prop_assert!(res.frob_norm() <= 1e-9 * (1.0 + w.frob_norm()));
        prop_assert!(p.asymmetry() <= 1e-12 * (1.0 + p.frob_norm()));
        for e in eigenvalues(&p.symmetrized()).unwrap() {
            prop_assert!(e.re >= -1e-10 * (1.0 + p.frob_norm()));
        }
    }
}

#[test]
fn companion_of_scalar_oscillator() {
    // λ² + 2λ + 5 = 0 → λ = −1 ± 2i.
    let one = |v: f64| DenseMatrix::from_rows(&[vec![v]]);
    let s = quad_eig(&one(1.0), &one(2.0), &one(5.0)).unwrap();
    let ev = sorted(s.eigenvalues);
    assert!((ev[0] - Complex64::new(-1.0, -2.0)).norm() < 1e-14 || (ev[0] - Complex64::new(-1.0, 2.0)).norm() < 1e-14);
    assert!((ev[0].conj() - ev[1]).norm() < 1e-14);
}

#[test]
fn lyap_scalar() {
    // −2p + 1 = 0 → p = 1/2 for a = −1, w = 1.
    let p = lyap_solve(&DenseMatrix::from_rows(&[vec![-1.0]]), &DenseMatrix::from_rows(&[vec![1.0]])).unwrap();
    assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
}
