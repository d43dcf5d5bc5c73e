use std::f64::consts::PI;

use locclab::linalg::{random_gaussian, ComplexMatrix, Tolerance, C64, ONE, ZERO};
use locclab::protocol::{Instrument, LoccProtocol, Party, RegisterDims, Turn};
use locclab::reference::{build_eisert, with_resource};
use locclab::states::{ControlledUnitary, PureState, ResourceState};
use locclab::verifier::{
    check_block_conditions, extract_block_vectors, fit_on_inputs, min_turns_check, rebuild_from_blocks, verify,
    verify_with, BlockViolation, VerifyOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tol() -> Tolerance {
    Tolerance::default()
}

fn identity_protocol() -> LoccProtocol {
    let mut t = Turn::new(Party::Alice);
    t.instruments.insert(vec![], Instrument::new(vec![ComplexMatrix::identity(4)]));
    let mut b = Turn::new(Party::Bob);
    b.instruments.insert(vec![0], Instrument::new(vec![ComplexMatrix::identity(4)]));
    LoccProtocol::new(RegisterDims::qubits((2, 2)), ResourceState::canonical(0.5).unwrap().state, vec![t, b]).unwrap()
}

#[test]
fn eisert_pi_splits_evenly() {
    let report =
        verify(&build_eisert(&ControlledUnitary::canonical(PI)), &ControlledUnitary::canonical(PI), tol()).unwrap();
    assert!(report.pass);
    assert_eq!(report.branches.len(), 4);
    for b in &report.branches {
        assert!((b.c.norm_sqr() - 0.25).abs() < 1e-12);
    }
    assert!((report.prob_sum - 1.0).abs() < 1e-12);
}

#[test]
fn eisert_passes_on_sixteenths() {
    for k in 1..=16 {
        let target = ControlledUnitary::canonical(k as f64 * PI / 16.0);
        let report =
            verify_with(&build_eisert(&target), &target, tol(), VerifyOptions { superposition_inputs: true }).unwrap();
        assert!(report.pass, "k = {k}");
        assert!(report.max_deviation < 1e-10);
        assert!((report.prob_sum - 1.0).abs() < 1e-10);
    }
}

#[test]
fn mismatches_fail() {
    let target = ControlledUnitary::canonical(PI / 2.0);
    let report = verify(&identity_protocol(), &target, tol()).unwrap();
    assert!(!report.pass);
    assert!(report.max_deviation > 0.1);
    let wrong = verify(&build_eisert(&ControlledUnitary::canonical(PI / 3.0)), &target, tol()).unwrap();
    assert!(!wrong.pass);
}

#[test]
fn block_vectors_of_diagonal_operator() {
    // |0⟩⟨0|⊗⟨0| + |1⟩⟨1|⊗⟨1|
    let a = ComplexMatrix::real(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 1.0]]);
    let bv = extract_block_vectors(&a, &a).unwrap();
    assert_eq!(bv.a[0][0], vec![ONE, ZERO]);
    assert_eq!(bv.a[1][1], vec![ZERO, ONE]);
    assert_eq!(bv.a[0][1], vec![ZERO, ZERO]);
    assert_eq!(bv.a[1][0], vec![ZERO, ZERO]);
    assert!(extract_block_vectors(&ComplexMatrix::identity(4), &a).is_err());
}

#[test]
fn block_vectors_rebuild_seeded_operators() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let a = random_gaussian(2, 4, &mut rng);
        let b = random_gaussian(2, 4, &mut rng);
        let bv = extract_block_vectors(&a, &b).unwrap();
        // A = Σ |k⟩⟨i| ⊗ ⟨a_ki|, entry by entry
        let mut rebuilt = ComplexMatrix::zeros(2, 4);
        for k in 0..2 {
            for i in 0..2 {
                for s in 0..2 {
                    rebuilt[(k, 2 * i + s)] = bv.a[k][i][s].conj();
                }
            }
        }
        assert!(rebuilt.max_abs_diff(&a) < 1e-12);
        assert!(rebuild_from_blocks(&bv.b).max_abs_diff(&b) < 1e-12);
    }
}

#[test]
fn eisert_block_structure() {
    for k in [1, 5, 8, 13] {
        let target = ControlledUnitary::canonical(k as f64 * PI / 8.0);
        let p = build_eisert(&target);
        let report = verify(&p, &target, tol()).unwrap();
        for bv in &report.block_vectors {
            for blocks in [&bv.a, &bv.b] {
                assert!(locclab::linalg::norm(&blocks[0][1]) < 1e-12);
                assert!(locclab::linalg::norm(&blocks[1][0]) < 1e-12);
            }
        }
        let check = check_block_conditions(&report, &p.resource.coefficient_matrix(), &target, tol());
        assert!(check.violations.is_empty(), "{:?}", check.violations);
        assert!(!check.degenerate);
    }
}

#[test]
fn forced_block_violation_is_flagged() {
    let target = ControlledUnitary::canonical(PI);
    let p = build_eisert(&target);
    let mut report = verify(&p, &target, tol()).unwrap();
    report.block_vectors[0].a[0][1] = vec![C64::new(0.3, 0.0), ZERO];
    let check = check_block_conditions(&report, &p.resource.coefficient_matrix(), &target, tol());
    assert!(check.violations.iter().any(|v| matches!(v, BlockViolation::Overlap { branch: 0, k: 0, i: 1, .. })));
    assert!(check.violations.iter().any(|v| matches!(v, BlockViolation::NonzeroOffDiagonal { branch: 0, .. })));
}

#[test]
fn degenerate_target_skips_independence() {
    let target = ControlledUnitary::canonical(0.0);
    let p = build_eisert(&target);
    let report = verify(&p, &target, tol()).unwrap();
    assert!(report.pass);
    let check = check_block_conditions(&report, &p.resource.coefficient_matrix(), &target, tol());
    assert!(check.degenerate);
    assert!(check.violations.is_empty());
}

#[test]
fn branch_coefficient_is_input_independent() {
    let target = ControlledUnitary::canonical(0.7);
    let p = build_eisert(&target);
    let u = target.matrix();
    let report = verify(&p, &target, tol()).unwrap();
    for (fit, br) in report.branches.iter().zip(p.effective_branches()) {
        for i in 0..4 {
            for j in i + 1..4 {
                let c = fit_on_inputs(&br.kraus, &u, &[i, j]);
                assert!((c - fit.c).norm() < 1e-8);
            }
        }
    }
}

#[test]
fn dressed_targets_verify() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let mut target = ControlledUnitary::canonical(rng.random::<f64>() * PI);
        target.v1 = locclab::linalg::random_unitary(2, &mut rng);
        target.v2 = locclab::linalg::random_unitary(2, &mut rng);
        target.w1 = locclab::linalg::random_unitary(2, &mut rng);
        target.w2 = locclab::linalg::random_unitary(2, &mut rng);
        let report = verify(&build_eisert(&target), &target, tol()).unwrap();
        assert!(report.pass, "{}", report.max_deviation);
    }
}

#[test]
fn report_serializes() {
    let target = ControlledUnitary::canonical(PI);
    let report = verify(&build_eisert(&target), &target, tol()).unwrap();
    let v: serde_json::Value = serde_json::to_value(&report).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["branches"].as_array().unwrap().len(), 4);
    assert_eq!(v["branches"][0]["c"].as_array().unwrap().len(), 2);
}

#[test]
fn min_turns_holds_for_eisert() {
    let target = ControlledUnitary::canonical(PI / 2.0);
    min_turns_check(&build_eisert(&target), &target, tol()).unwrap();
}

fn schmidt2_resource<R: Rng>(rng: &mut R) -> PureState {
    let mu = 0.5 + 0.49 * rng.random::<f64>();
    let base = ResourceState::canonical(mu).unwrap().state;
    let ua = locclab::linalg::random_unitary(2, rng);
    let ub = locclab::linalg::random_unitary(2, rng);
    let amps = locclab::linalg::kron(&ua, &ub).matvec(base.amplitudes());
    PureState::normalized(amps, (2, 2)).unwrap()
}

#[test]
fn one_turn_protocols_fail() {
    let target = ControlledUnitary::canonical(PI / 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let mut t = Turn::new(Party::Alice);
        t.instruments.insert(vec![], Instrument::random(2, 4, 2, &mut rng));
        let p = LoccProtocol::new(RegisterDims::qubits((2, 2)), schmidt2_resource(&mut rng), vec![t]).unwrap();
        assert!(!verify(&p, &target, tol()).unwrap().pass);
        min_turns_check(&p, &target, tol()).unwrap();
    }
}

#[test]
fn two_turn_protocols_never_pass() {
    let target = ControlledUnitary::canonical(PI / 2.0);
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = if seed % 2 == 0 { Party::Alice } else { Party::Bob };
        let outcomes = 2 + (seed as usize % 3);
        let mut t0 = Turn::new(first);
        t0.instruments.insert(vec![], Instrument::random(outcomes, 4, 2, &mut rng));
        let mut t1 = Turn::new(first.other());
        for r in 0..outcomes {
            t1.instruments.insert(vec![r], Instrument::random(2, 4, 2, &mut rng));
        }
        let p = LoccProtocol::new(RegisterDims::qubits((2, 2)), schmidt2_resource(&mut rng), vec![t0, t1]).unwrap();
        let report = verify(&p, &target, tol()).unwrap();
        assert!(!report.pass, "seed {seed}");
        min_turns_check(&p, &target, tol()).unwrap();
    }
}

#[test]
fn non_maximal_resource_fails_eisert() {
    let target = ControlledUnitary::canonical(PI);
    let p = with_resource(&build_eisert(&target), ResourceState::canonical(0.6).unwrap().state).unwrap();
    assert!(!verify(&p, &target, tol()).unwrap().pass);
}
