use locclab::linalg::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn seeded(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_gaussian(rows, cols, &mut rng)
}

#[test]
fn svd_of_identity() {
    let d = svd(&ComplexMatrix::identity(2)).unwrap();
    assert_eq!(d.sigma, vec![1.0, 1.0]);
    assert!(d.u.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
    assert!(d.vdag.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
}

#[test]
fn svd_of_rank_one_diagonal() {
    let m = ComplexMatrix::diag_real(&[2.0, 0.0]);
    let d = svd(&m).unwrap();
    assert_eq!(d.sigma, vec![2.0, 0.0]);
    assert!(d.reconstruct().max_abs_diff(&m) < 1e-15);
    assert!(d.u.isometry_defect() < 1e-15);
}

#[test]
fn svd_rejects_non_finite() {
    let m = ComplexMatrix::from_fn(2, 2, |_, _| c(1.0, 0.0));
    let mut bad = m.clone();
    bad[(0, 0)] = c(f64::NAN, 0.0);
    assert!(svd(&bad).is_err());
    assert!(ComplexMatrix::new(1, 1, vec![c(f64::INFINITY, 0.0)]).is_err());
}

#[test]
fn svd_seeded_reconstruction_and_ordering() {
    for (rows, cols) in [(2, 2), (4, 2), (2, 4), (6, 6), (16, 16), (3, 7)] {
        let m = seeded(rows, cols, (rows * 100 + cols) as u64);
        let d = svd(&m).unwrap();
        assert!(d.reconstruct().max_abs_diff(&m) < 1e-12, "{rows}x{cols}");
        assert!(d.u.isometry_defect() < 1e-12);
        assert!(d.vdag.dagger().isometry_defect() < 1e-12);
        assert!(d.sigma.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn svd_phase_convention_fixes_right_vectors() {
    let m = seeded(3, 3, 11);
    let d = svd(&m).unwrap();
    let v = d.vdag.dagger();
    for k in 0..3 {
        let lead = v.column(k).into_iter().find(|z| z.norm() > 1e-12).unwrap();
        assert!(lead.im.abs() < 1e-14 && lead.re > 0.0);
    }
}

#[test]
fn svd_singular_values_match_gram_eigenvalues() {
    // independent oracle: σ² are the eigenvalues of M†M
    let m = seeded(4, 3, 5);
    let d = svd(&m).unwrap();
    let (vals, _) = eigh(&(&m.dagger() * &m)).unwrap();
    let mut sq: Vec<f64> = d.sigma.iter().map(|s| s * s).collect();
    sq.reverse();
    for (a, b) in sq.iter().zip(&vals) {
        assert!((a - b).abs() < 1e-11);
    }
}

#[test]
fn polar_of_unitary_is_trivial() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = random_unitary(4, &mut rng);
    let (iso, root) = polar_decompose(&u).unwrap();
    assert!(iso.max_abs_diff(&u) < 1e-12);
    assert!(root.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-12);
}

#[test]
fn polar_of_degenerate_diagonal_completes_null_direction() {
    let t = ComplexMatrix::diag_real(&[3.0, 0.0]);
    let (iso, root) = polar_decompose(&t).unwrap();
    assert!(root.max_abs_diff(&t) < 1e-15);
    assert!(iso.isometry_defect() < 1e-15);
    assert!((&iso * &root).max_abs_diff(&t) < 1e-15);
    // canonical completion: the undetermined column is real-positive
    assert!(iso[(1, 1)].re > 0.0 && iso[(1, 1)].im.abs() < 1e-15);
}

#[test]
fn polar_seeded_tall_matrix() {
    let t = seeded(4, 2, 42);
    let (iso, root) = polar_decompose(&t).unwrap();
    assert!((&iso * &root).max_abs_diff(&t) < 1e-12);
    assert!(root.hermitian_defect() < 1e-12);
    assert!(iso.isometry_defect() < 1e-12);
    let (vals, _) = eigh(&root).unwrap();
    assert!(vals[0] > -1e-12);
    // root² = T†T
    assert!((&root * &root).max_abs_diff(&(&t.dagger() * &t)) < 1e-12);
}

#[test]
fn polar_rejects_wide_input() {
    assert!(matches!(polar_decompose(&seeded(2, 4, 1)), Err(locclab::Error::Shape(_))));
}

#[test]
fn rank_examples() {
    let tol = Tolerance::default();
    assert_eq!(rank_tol(&ComplexMatrix::zeros(3, 3), tol).unwrap(), 0);
    assert_eq!(rank_tol(&ComplexMatrix::diag_real(&[1.0, 1e-15]), tol).unwrap(), 1);
    // √(Σ_r |a_r⟩⟨a_r|) for collinear a_r
    let a = [c(0.3, 0.1), c(-0.2, 0.7)];
    let b: Vec<C64> = a.iter().map(|z| z * c(-1.4, 0.6)).collect();
    let gram = &ComplexMatrix::outer(&a, &a) + &ComplexMatrix::outer(&b, &b);
    let root = sqrt_psd(&gram, 1e-12).unwrap();
    assert_eq!(rank_tol(&root, tol).unwrap(), 1);
    assert!((&root * &root).max_abs_diff(&gram) < 1e-12);
}

#[test]
fn kron_examples() {
    let id2 = ComplexMatrix::identity(2);
    assert_eq!(kron(&id2, &id2), ComplexMatrix::identity(4));
    let k = kron(&projector(2, 0), &pauli_x());
    let expected = ComplexMatrix::real(&[
        &[0.0, 1.0, 0.0, 0.0],
        &[1.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 0.0],
    ]);
    assert_eq!(k, expected);
    let a = seeded(2, 3, 7);
    let b = seeded(3, 2, 8);
    let x = seeded(3, 1, 9).column(0);
    let y = seeded(2, 1, 10).column(0);
    let lhs = kron(&a, &b).matvec(&kron_vec(&x, &y));
    let rhs = kron_vec(&a.matvec(&x), &b.matvec(&y));
    let diff = lhs.iter().zip(&rhs).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-12);
}

#[test]
fn partial_trace_examples() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let bell = [c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)];
    let rho = ComplexMatrix::outer(&bell, &bell);
    let half = ComplexMatrix::identity(2).scale_real(0.5);
    assert!(partial_trace(&rho, (2, 2), Side::A).unwrap().max_abs_diff(&half) < 1e-15);
    assert!(partial_trace(&rho, (2, 2), Side::B).unwrap().max_abs_diff(&half) < 1e-15);

    let r = seeded(2, 2, 1);
    let sg = seeded(3, 3, 2);
    let prod = kron(&r, &sg);
    let kept = partial_trace(&prod, (2, 3), Side::A).unwrap();
    assert!(kept.max_abs_diff(&r.scale(sg.trace())) < 1e-12);
    assert!(partial_trace(&prod, (3, 3), Side::A).is_err());
}

#[test]
fn partial_trace_matches_index_sum() {
    let g = seeded(4, 4, 77);
    let rho = &g * &g.dagger();
    let rho = rho.scale_real(1.0 / rho.trace().re);
    let mut oracle_a = ComplexMatrix::zeros(2, 2);
    let mut oracle_b = ComplexMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                oracle_a[(i, j)] += rho[(2 * i + k, 2 * j + k)];
                oracle_b[(i, j)] += rho[(2 * k + i, 2 * k + j)];
            }
        }
    }
    let a = partial_trace(&rho, (2, 2), Side::A).unwrap();
    let b = partial_trace(&rho, (2, 2), Side::B).unwrap();
    assert!(a.max_abs_diff(&oracle_a) < 1e-15);
    assert!(b.max_abs_diff(&oracle_b) < 1e-15);
    assert!((a.trace() - rho.trace()).norm() < 1e-14);
}

#[test]
fn conjugation_family() {
    let r = ComplexMatrix::real(&[&[1.0, 2.0], &[3.0, 4.0]]);
    assert_eq!(r.conj(), r);
    let ii = ComplexMatrix::identity(2).scale(I);
    assert_eq!(ii.dagger(), ComplexMatrix::identity(2).scale(-I));
    let m = seeded(3, 2, 4);
    assert_eq!(m.conj().transpose(), m.dagger());
    assert_eq!(m.dagger().dagger(), m);
    assert_eq!(m.conj().conj(), m);
}

#[test]
fn eigh_reconstructs_hermitian() {
    let g = seeded(5, 5, 21);
    let h = hermitize(&g);
    let (vals, v) = eigh(&h).unwrap();
    assert!(v.isometry_defect() < 1e-12);
    let rebuilt = &(&v * &ComplexMatrix::diag_real(&vals)) * &v.dagger();
    assert!(rebuilt.max_abs_diff(&h) < 1e-12);
    assert!(vals.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn inverse_and_determinant() {
    let m = seeded(4, 4, 13);
    let inv = m.inverse().unwrap();
    assert!((&m * &inv).max_abs_diff(&ComplexMatrix::identity(4)) < 1e-12);
    let a = seeded(3, 3, 1);
    let b = seeded(3, 3, 2);
    let lhs = (&a * &b).determinant();
    let rhs = a.determinant() * b.determinant();
    assert!((lhs - rhs).norm() < 1e-10 * rhs.norm().max(1.0));
    assert!(ComplexMatrix::diag_real(&[1.0, 0.0]).inverse().is_err());
}

#[test]
fn serde_round_trip_is_exact() {
    let m = seeded(3, 2, 99).scale(c(1.0 / 3.0, 1e-17));
    let text = serde_json::to_string(&m).unwrap();
    let back: ComplexMatrix = serde_json::from_str(&text).unwrap();
    assert_eq!(back, m);
    assert!(serde_json::from_str::<ComplexMatrix>("[[[1,0]],[[1,0],[2,0]]]").is_err());
}

#[test]
fn svd_and_polar_residuals_on_many_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for trial in 0..1000 {
        let rows = 2 + trial % 4;
        let cols = 1 + trial % rows;
        let m = random_gaussian(rows, cols, &mut rng);
        let d = svd(&m).unwrap();
        worst = worst.max(d.reconstruct().max_abs_diff(&m));
        let (iso, root) = polar_decompose(&m).unwrap();
        worst = worst.max((&iso * &root).max_abs_diff(&m));
    }
    assert!(worst < 1e-12, "worst residual {worst}");
}

fn matrix_strategy(n: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), n * n)
        .prop_map(move |v| ComplexMatrix::from_fn(n, n, |r, c| C64::new(v[r * n + c].0, v[r * n + c].1)))
}

proptest! {
    #[test]
    fn prop_svd_reconstructs(m in matrix_strategy(4)) {
        let d = svd(&m).unwrap();
        prop_assert!(d.reconstruct().max_abs_diff(&m) < 1e-12);
        prop_assert!(d.u.isometry_defect() < 1e-12);
    }

    #[test]
    fn prop_rank_invariant_under_unitaries(m in matrix_strategy(3), seed in 0u64..1000, zero_cols in 0usize..3) {
        let mut m = m;
        for r in 0..3 {
            for c in 0..zero_cols {
                m[(r, c)] = ZERO;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_unitary(3, &mut rng);
        let v = random_unitary(3, &mut rng);
        let tol = Tolerance::default();
        prop_assert_eq!(rank_tol(&m, tol).unwrap(), rank_tol(&(&(&u * &m) * &v), tol).unwrap());
    }

    #[test]
    fn prop_polar_root_psd(m in matrix_strategy(3)) {
        let (iso, root) = polar_decompose(&m).unwrap();
        prop_assert!(root.hermitian_defect() < 1e-12);
        prop_assert!(iso.isometry_defect() < 1e-12);
        let (vals, _) = eigh(&root).unwrap();
        prop_assert!(vals[0] > -1e-12);
    }

    #[test]
    fn prop_kron_associative(a in matrix_strategy(2), b in matrix_strategy(2), c in matrix_strategy(2)) {
        let left = kron(&kron(&a, &b), &c);
        let right = kron(&a, &kron(&b, &c));
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
    }
}
