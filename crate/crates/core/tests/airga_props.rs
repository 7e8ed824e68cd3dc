use airga::airga::{
    airga_run, arnoldi_deflate, h2_distance, next_moment, project_reduce, refresh_points, select_point,
    zeroth_moments, AirgaConfig, ExpansionPointSet, H2Method, MomentBlock, OrthonormalBasis, PointOrigin,
    ShiftSolver, SolverKind,
};
use airga::linalg::{dense_solve, DenseMatrix, SparseMatrix};
use airga::model_io::{beam_generate, ModelSpec};
use airga::system::SecondOrderSystem;
use proptest::prelude::*;

/// Taylor coefficients of `(s²M + sD + K)⁻¹F` about `s0` from
/// `𝒦X⁽ʲ⁾ = −𝒦'X⁽ʲ⁻¹⁾ − M X⁽ʲ⁻²⁾`, `𝒦' = 2s0·M + D`.
fn taylor_moments(m: &DenseMatrix, d: &DenseMatrix, k: &DenseMatrix, f: &DenseMatrix, s0: f64, count: usize) -> Vec<DenseMatrix> {
    let kk = k.add_scaled(d, 1.0, s0).unwrap().add_scaled(m, 1.0, s0 * s0).unwrap();
    let kp = m.add_scaled(d, 2.0 * s0, 1.0).unwrap();
    let mut out: Vec<DenseMatrix> = Vec::new();
    for j in 0..count {
        let rhs = match j {
            0 => f.clone(),
            1 => kp.matmul(&out[0]).unwrap().scaled(-1.0),
            _ => kp
                .matmul(&out[j - 1])
                .unwrap()
                .add_scaled(&m.matmul(&out[j - 2]).unwrap(), -1.0, -1.0)
                .unwrap(),
        };
        out.push(dense_solve(&kk, &rhs).unwrap());
    }
    out
}

fn one_point_run(n: usize, s: f64, blocks: usize) -> (SecondOrderSystem, airga::airga::ReducedSystem) {
    let sys = beam_generate(&ModelSpec::with_n(n)).unwrap();
    let cfg = AirgaConfig {
        r_max: blocks,
        fixed_blocks: Some(blocks),
        max_outer: 1,
        initial_points: ExpansionPointSet::new(vec![s], PointOrigin::Initial).unwrap(),
        solver: SolverKind::Direct,
        ..AirgaConfig::default()
    };
    let (red, _) = airga_run(&sys, &cfg).unwrap();
    (sys, red)
}

fn moment_mismatch(sys: &SecondOrderSystem, red: &airga::airga::ReducedSystem, s: f64, count: usize) -> Vec<f64> {
    let full = taylor_moments(&sys.m.to_dense(), &sys.d.to_dense(), &sys.k.to_dense(), &sys.f, s, count);
    let redm = taylor_moments(&red.mh, &red.dh, &red.kh, &red.fh, s, count);
    let v = &red.basis.as_ref().unwrap().assembled;
    full.iter()
        .zip(&redm)
        .map(|(x, xh)| v.matmul(xh).unwrap().sub(x).unwrap().frob_norm() / x.frob_norm())
        .collect()
}

#[test]
fn tiny_full_order_reduction_matches_moments() {
    // The uniform load only excites the 3-dimensional mirror-symmetric
    // subspace, so the space is invariant at r = 3 and every moment matches.
    let (sys, red) = one_point_run(6, 2.0, 6);
    assert_eq!(red.r(), 3);
    for (j, e) in moment_mismatch(&sys, &red, 2.0, 6).iter().enumerate() {
        assert!(*e <= 1e-8, "moment {j}: {e}");
    }
}

#[test]
fn leading_moments_match_at_desk_scale() {
    let (sys, red) = one_point_run(60, 10.0, 4);
    assert_eq!(red.r(), 4);
    for (j, e) in moment_mismatch(&sys, &red, 10.0, 4).iter().enumerate() {
        assert!(*e <= 1e-8, "moment {j}: {e}");
    }
}

#[test]
fn reduced_model_keeps_structure() {
    let sys = beam_generate(&ModelSpec::with_n(150)).unwrap();
    for solver in [SolverKind::Direct, SolverKind::CgSpai] {
        let cfg = AirgaConfig { solver, r_max: 12, ..AirgaConfig::default() };
        let (red, trace) = airga_run(&sys, &cfg).unwrap();
        let basis = red.basis.as_ref().unwrap();
        assert!(red.r() <= 12);
        assert!(basis.orthonormality_defect() <= 1e-10);
        assert!(red.damping_defect() <= 1e-12, "{}", red.damping_defect());
        for a in [&red.mh, &red.kh, &red.dh] {
            assert!(a.asymmetry() <= 1e-12 * a.frob_norm());
        }
        assert_eq!(trace.final_r(), red.r());
        assert!(!trace.cells.is_empty());
    }
}

#[test]
fn runs_are_deterministic() {
    let sys = beam_generate(&ModelSpec::with_n(120)).unwrap();
    let cfg = AirgaConfig { solver: SolverKind::CgSpaiUpdate, r_max: 12, ..AirgaConfig::default() };
    let (a, ta) = airga_run(&sys, &cfg).unwrap();
    let (b, tb) = airga_run(&sys, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta.report(), tb.report());
    assert_eq!(ta.moment_errors_csv(), tb.moment_errors_csv());
}

#[test]
fn carried_blocks_are_bitwise_copies() {
    let sys = beam_generate(&ModelSpec::with_n(80)).unwrap();
    let cfg = AirgaConfig::default();
    let settings = cfg.settings();
    let points = [1.0, 10.0, 40.0];
    let solvers: Vec<ShiftSolver> = points
        .iter()
        .map(|&p| ShiftSolver::prepare(&sys, p, &settings, None, 1).unwrap())
        .collect();
    let (blocks, _, _) = zeroth_moments(&sys, &solvers, &settings).unwrap();
    let v = blocks[1].data.scaled(1.0 / blocks[1].data.frob_norm());
    let (next, entry, _) = next_moment(&sys, &blocks, 1, &v, &solvers[1], &settings).unwrap();
    assert_eq!(next[0], blocks[0]);
    assert_eq!(next[2], blocks[2]);
    assert_eq!(next[1].order, 1);
    assert_eq!(entry.order, 1);
    assert_eq!(entry.x, next[1].data);
    // The ledger identity 𝒦X = B + η holds to rounding for the recorded pair.
    let rhs = sys.m.mul_dense(&v).unwrap().scaled(-1.0);
    let lhs = solvers[1].shifted.mul_dense(&entry.x).unwrap();
    let gap = lhs.sub(&rhs.add_scaled(&entry.eta, 1.0, 1.0).unwrap()).unwrap().frob_norm();
    assert!(gap <= 1e-12 * rhs.frob_norm(), "{gap}");
}

#[test]
fn selection_takes_first_maximum() {
    assert_eq!(select_point(&[1.0, 3.0, 3.0, 2.0]), 1);
    assert_eq!(select_point(&[0.0]), 0);
    // Rounding-level differences do not break a tie.
    assert_eq!(select_point(&[1.0, 1.0 + 4e-15, 0.5]), 0);
    assert_eq!(select_point(&[1.0, 1.0 + 1e-6, 0.5]), 1);
    assert_eq!(select_point(&[0.0, 0.0]), 0);
}

#[test]
fn point_sets_validate() {
    assert!(ExpansionPointSet::new(vec![], PointOrigin::Initial).is_err());
    assert!(ExpansionPointSet::new(vec![1.0, 1.0], PointOrigin::Initial).is_err());
    assert!(ExpansionPointSet::new(vec![1.0, f64::NAN], PointOrigin::Initial).is_err());
    let s = ExpansionPointSet::new(vec![5.0, 1.0], PointOrigin::Initial).unwrap();
    assert_eq!(s.points(), &[1.0, 5.0]);
    let l = ExpansionPointSet::linspace(1.0, 100.0, 3).unwrap();
    assert_eq!(l.points(), &[1.0, 50.5, 100.0]);
}

#[test]
fn refreshed_points_are_positive_and_distinct() {
    let sys = beam_generate(&ModelSpec::with_n(100)).unwrap();
    let cfg = AirgaConfig { solver: SolverKind::Direct, r_max: 10, max_outer: 1, ..AirgaConfig::default() };
    let (red, _) = airga_run(&sys, &cfg).unwrap();
    let prev = cfg.initial_points.clone();
    let next = refresh_points(&red, 3, &prev).unwrap();
    assert_eq!(next.len(), 3);
    assert_eq!(next.origin(), PointOrigin::QuadEig);
    let p = next.points();
    assert!(p.iter().all(|x| *x > 0.0));
    assert!(p.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn identical_models_are_at_distance_zero() {
    let sys = beam_generate(&ModelSpec::with_n(50)).unwrap();
    let v = DenseMatrix::from_col_major(50, 2, (0..100).map(|i| if i % 51 == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
    let basis = OrthonormalBasis::from_blocks(vec![v]).unwrap();
    let red = project_reduce(&sys, &basis).unwrap();
    for method in [H2Method::Lyapunov, H2Method::Quadrature] {
        assert_eq!(h2_distance(&red, &red, method).unwrap().value, 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn deflation_leaves_orthogonal_remainder(
        cols in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 20), 4),
        x in prop::collection::vec(-1.0f64..1.0, 20),
    ) {
        let mut basis: Vec<DenseMatrix> = Vec::new();
        for c in &cols {
            let raw = MomentBlock { point_index: 0, order: 0, data: DenseMatrix::column_vector(c) };
            let (d, _) = arnoldi_deflate(&raw, &basis).unwrap();
            let nrm = d.data.frob_norm();
            prop_assume!(nrm > 1e-6);
            basis.push(d.data.scaled(1.0 / nrm));
        }
        let block = MomentBlock { point_index: 0, order: 0, data: DenseMatrix::column_vector(&x) };
        let (out, gammas) = arnoldi_deflate(&block, &basis).unwrap();
        for v in &basis {
            prop_assert!(v.trace_inner(&out.data).unwrap().abs() <= 1e-13);
        }
        // x = Σ γₜVₜ + remainder.
        let mut back = out.data.clone();
        for (g, v) in gammas.iter().zip(&basis) {
            back.axpy(*g, v).unwrap();
        }
        prop_assert!(back.sub(&block.data).unwrap().frob_norm() <= 1e-12);
    }

    #[test]
    fn projection_preserves_proportional_damping(n in 10usize..60, alpha in 0.01f64..0.9, beta in 0.01f64..0.9, seed in 0u64..1000) {
        let sys = beam_generate(&ModelSpec { alpha, beta, ..ModelSpec::with_n(n) }).unwrap();
        let raw = DenseMatrix::from_col_major(n, 3, (0..3 * n).map(|i| (((i as u64 * 2654435761 + seed) % 1000) as f64) / 500.0 - 1.0).collect()).unwrap();
        let basis = OrthonormalBasis::from_blocks(vec![raw]).unwrap();
        let red = project_reduce(&sys, &basis).unwrap();
        prop_assert!(red.damping_defect() <= 1e-12);
    }
}

#[test]
fn sparse_identity_projection_is_exact() {
    let sys = SecondOrderSystem::proportional(
        SparseMatrix::identity(3),
        SparseMatrix::diag(&[1.0, 2.0, 3.0]),
        DenseMatrix::column_vector(&[1.0, 0.0, 0.0]),
        DenseMatrix::from_rows(&[vec![1.0, 0.0, 0.0]]),
        None,
        0.1,
        0.2,
    )
    .unwrap();
    let basis = OrthonormalBasis::from_blocks(vec![DenseMatrix::identity(3)]).unwrap();
    let red = project_reduce(&sys, &basis).unwrap();
    assert_eq!(red.kh, sys.k.to_dense());
    assert_eq!(red.dh, sys.d.to_dense());
}
