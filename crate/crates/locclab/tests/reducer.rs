use std::f64::consts::PI;

use locclab::linalg::{random_unitary, ComplexMatrix, Tolerance, C64, ONE, ZERO};
use locclab::protocol::{History, Instrument, LoccProtocol, Party, RegisterDims, Turn};
use locclab::reducer::{
    check_lemma4, classify_case, complete_with_three_turns, compute_block_elements, delta_prime_phase,
    proportionality_report, reduce_case_a, reduce_case_b, reduce_case_c, reduce_to_three_turns, reduction_form,
    resource_functional, split_measurement, Case,
};
use locclab::reference::build_eisert;
use locclab::states::{ControlledUnitary, ResourceState};
use locclab::verifier::verify;
use locclab::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tol() -> Tolerance {
    Tolerance::default()
}

fn loose() -> Tolerance {
    tol().with_eq(1e-7)
}

fn shifted(h: &History) -> History {
    [&[0][..], h].concat()
}

/// Prepend a single-outcome turn applying `g` and undo it in that party's
/// first existing turn.
fn prepend_unitary(p: &LoccProtocol, party: Party, g: &ComplexMatrix) -> LoccProtocol {
    let mut head = Turn::new(party);
    head.instruments.insert(vec![], Instrument::new(vec![g.clone()]));
    let first = p.turns.iter().position(|t| t.party == party);
    let mut turns = vec![head];
    for (k, t) in p.turns.iter().enumerate() {
        let mut nt = Turn::new(t.party);
        for (h, inst) in &t.instruments {
            let ops = if Some(k) == first {
                inst.operators.iter().map(|m| m * &g.dagger()).collect()
            } else {
                inst.operators.clone()
            };
            nt.instruments.insert(shifted(h), Instrument::new(ops));
        }
        turns.push(nt);
    }
    LoccProtocol::new(p.dims, p.resource.clone(), turns).unwrap()
}

/// Insert an identity turn for `party` before turn `k`.
fn insert_identity(p: &LoccProtocol, k: usize, party: Party) -> LoccProtocol {
    let mut turns: Vec<Turn> = p.turns[..k].to_vec();
    let mut id = Turn::new(party);
    for h in p.turns[k].instruments.keys() {
        let (a, b) = p.accumulated_at(h).unwrap();
        let dim = if party == Party::Alice { a.rows() } else { b.rows() };
        id.instruments.insert(h.clone(), Instrument::identity(dim));
    }
    turns.push(id);
    for t in &p.turns[k..] {
        let mut nt = Turn::new(t.party);
        for (h, inst) in &t.instruments {
            let mut nh = h[..k].to_vec();
            nh.push(0);
            nh.extend_from_slice(&h[k..]);
            nt.instruments.insert(nh, inst.clone());
        }
        turns.push(nt);
    }
    LoccProtocol::new(p.dims, p.resource.clone(), turns).unwrap()
}

fn append_identity(p: &LoccProtocol, party: Party) -> LoccProtocol {
    let mut id = Turn::new(party);
    for leaf in p.leaves() {
        let dim = if party == Party::Alice { leaf.accumulated_a.rows() } else { leaf.accumulated_b.rows() };
        id.instruments.insert(leaf.outcomes, Instrument::identity(dim));
    }
    let mut turns = p.turns.clone();
    turns.push(id);
    LoccProtocol::new(p.dims, p.resource.clone(), turns).unwrap()
}

fn padded4(theta: f64) -> LoccProtocol {
    prepend_unitary(&build_eisert(&ControlledUnitary::canonical(theta)), Party::Bob, &ComplexMatrix::identity(4))
}

fn padded5(theta: f64, seed: u64) -> LoccProtocol {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = build_eisert(&ControlledUnitary::canonical(theta));
    let p = prepend_unitary(&p, Party::Bob, &random_unitary(4, &mut rng));
    prepend_unitary(&p, Party::Alice, &random_unitary(4, &mut rng))
}

fn padded6(theta: f64, seed: u64) -> LoccProtocol {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    prepend_unitary(&padded5(theta, seed), Party::Bob, &random_unitary(4, &mut rng))
}

/// Bob first splits his resource qubit by a weak measurement that depends
/// on his input, then a constructed tail finishes the gate; swapping the
/// parties puts the non-unitary block ratio on Alice's side.
fn weak_prefix_protocol(theta: f64, p: f64) -> LoccProtocol {
    let (s, c) = (p.sqrt(), (1.0 - p).sqrt());
    let weak = |x: f64, y: f64| ComplexMatrix::diag_real(&[x, y]);
    let op = |f: ComplexMatrix, g: ComplexMatrix| ComplexMatrix::block_diag(&[&f, &g]);
    let mut t = Turn::new(Party::Bob);
    t.instruments.insert(vec![], Instrument::new(vec![op(weak(s, c), weak(c, s)), op(weak(c, s), weak(s, c))]));
    let prefix =
        LoccProtocol::new(RegisterDims::qubits((2, 2)), ResourceState::canonical(0.5).unwrap().state, vec![t]).unwrap();
    complete_with_three_turns(&prefix, theta, tol()).unwrap().swap_parties()
}

#[test]
fn padded_protocols_verify() {
    for theta in [PI, PI / 3.0, 2.2] {
        let target = ControlledUnitary::canonical(theta);
        for p in [padded4(theta), padded5(theta, 1), padded6(theta, 2)] {
            assert!(verify(&p, &target, tol()).unwrap().pass);
        }
    }
}

#[test]
fn three_turn_input_is_returned_unchanged() {
    let target = ControlledUnitary::canonical(PI / 2.0);
    let p = build_eisert(&target);
    let r = reduce_to_three_turns(&p, &target, tol()).unwrap();
    assert!(r.steps.is_empty());
    assert_eq!(r.protocol.to_json().unwrap(), p.to_json().unwrap());
}

#[test]
fn padded4_reduces_through_case_c() {
    for theta in [PI, PI / 4.0, 1.3] {
        let target = ControlledUnitary::canonical(theta);
        let r = reduce_to_three_turns(&padded4(theta), &target, tol()).unwrap();
        assert_eq!(r.protocol.turn_count(), 3);
        assert_eq!(r.steps.len(), 1);
        assert_eq!(r.steps[0].case, "c");
        assert!(verify(&r.protocol, &target, loose()).unwrap().pass);
        let ws = &r.steps[0].histories[0];
        // unitary block ratio: the simultaneously diagonal functionals swap eigenvalues
        assert!(ws.eigen_swap_residual.unwrap() < 1e-8);
        assert!((ws.lambda.unwrap() - 1.0).abs() < 1e-9);
        assert!(ws.delta_prime_residual.unwrap() < 1e-8);
        assert!(ws.det_residual < 1e-8);
        assert!(r.steps[0].residuals.channel_distance < 1e-8);
    }
}

#[test]
fn padded5_reduces_to_three_turns() {
    for seed in 0..6 {
        let theta = 0.3 + 0.45 * seed as f64;
        let target = ControlledUnitary::canonical(theta);
        let r = reduce_to_three_turns(&padded5(theta, seed), &target, tol()).unwrap();
        assert_eq!(r.protocol.turn_count(), 3);
        assert_eq!(r.steps.len(), 2);
        assert!(verify(&r.protocol, &target, loose()).unwrap().pass);
        for s in &r.steps {
            assert!(s.residuals.channel_distance < 1e-8, "{}", s.residuals.channel_distance);
        }
    }
}

#[test]
fn six_turns_take_three_steps() {
    let theta = PI / 2.0;
    let target = ControlledUnitary::canonical(theta);
    let r = reduce_to_three_turns(&padded6(theta, 7), &target, tol()).unwrap();
    assert_eq!(r.steps.len(), 3);
    assert_eq!(r.steps.iter().map(|s| s.step).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert_eq!(r.protocol.turn_count(), 3);
    assert!(verify(&r.protocol, &target, loose()).unwrap().pass);
}

#[test]
fn dressed_target_reduces() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut target = ControlledUnitary::canonical(2.0);
    target.v1 = random_unitary(2, &mut rng);
    target.w2 = random_unitary(2, &mut rng);
    target.v2 = random_unitary(2, &mut rng);
    let p = prepend_unitary(&build_eisert(&target), Party::Bob, &random_unitary(4, &mut rng));
    let p = prepend_unitary(&p, Party::Alice, &random_unitary(4, &mut rng));
    assert!(verify(&p, &target, tol()).unwrap().pass);
    let r = reduce_to_three_turns(&p, &target, tol()).unwrap();
    assert_eq!(r.protocol.turn_count(), 3);
    assert!(verify(&r.protocol, &target, loose()).unwrap().pass);
}

#[test]
fn trailing_identity_is_case_a() {
    let theta = 1.1;
    let target = ControlledUnitary::canonical(theta);
    let p = append_identity(&build_eisert(&target), Party::Bob);
    assert!(verify(&p, &target, tol()).unwrap().pass);
    let blocks = compute_block_elements(&p, tol()).unwrap();
    for b in &blocks {
        assert_eq!(classify_case(b).unwrap(), Case::A);
        assert!(b.summation_residual < 1e-10);
    }
    let out = reduce_case_a(&p, theta, tol()).unwrap();
    assert_eq!(out.turn_count(), 3);
    assert!(verify(&out, &target, loose()).unwrap().pass);
    assert!(p.channel_distance(&out).unwrap() < 1e-8);
    assert!(matches!(reduce_case_c(&p, theta, tol()), Err(Error::CaseMismatch { .. })));

    let r = reduce_to_three_turns(&p, &target, tol()).unwrap();
    let ws = &r.steps[0].histories;
    for w in ws {
        assert!(w.construction_residual < 1e-10);
    }
    // the coin over Alice's last outcomes sums to one for each of Bob's two outcomes
    let total: f64 = ws.iter().map(|w| w.probabilities.iter().sum::<f64>()).sum();
    assert!((total - 2.0 * ws.len() as f64).abs() < 1e-10);
}

#[test]
fn rank_one_bob_blocks_are_case_b() {
    let theta = 0.9;
    let target = ControlledUnitary::canonical(theta);
    // Bob measures first, then two identity turns, then the rest of the mirrored protocol
    let base = build_eisert(&target).swap_parties();
    let p = insert_identity(&insert_identity(&base, 1, Party::Bob), 1, Party::Alice);
    assert_eq!(p.turn_count(), 5);
    assert!(verify(&p, &target, tol()).unwrap().pass);
    let (q, _, _) = reduction_form(&p).unwrap();
    for b in compute_block_elements(&q, tol()).unwrap() {
        assert_eq!(b.ranks, [2, 2, 1, 1]);
        assert_eq!(classify_case(&b).unwrap(), Case::B);
    }
    let out = reduce_case_b(&p, theta, tol()).unwrap();
    assert_eq!(out.turn_count(), 4);
    assert!(verify(&out, &target, loose()).unwrap().pass);
    assert!(p.channel_distance(&out).unwrap() < 1e-8);
    let r = reduce_to_three_turns(&p, &target, tol()).unwrap();
    assert_eq!(r.steps[0].case, "b");
    let q_total: f64 = r.steps[0].histories.iter().map(|w| w.probabilities.iter().sum::<f64>()).sum();
    assert!((q_total - r.steps[0].histories.len() as f64).abs() < 1e-10);
    assert_eq!(r.protocol.turn_count(), 3);
}

#[test]
fn non_unitary_block_ratio() {
    for (theta, weak) in [(PI / 2.0, 0.2), (2.5, 0.35), (1.0, 0.1)] {
        let target = ControlledUnitary::canonical(theta);
        let p = weak_prefix_protocol(theta, weak);
        assert_eq!(p.turn_count(), 4);
        assert!(verify(&p, &target, tol()).unwrap().pass);
        let r = reduce_to_three_turns(&p, &target, tol()).unwrap();
        assert_eq!(r.steps.len(), 1);
        assert_eq!(r.steps[0].case, "c");
        for w in &r.steps[0].histories {
            let lambda = w.lambda.unwrap();
            let expected = (1.0 - weak) / weak;
            assert!((lambda - expected).abs() < 1e-8, "{lambda} vs {expected}");
            assert!(w.delta_residual.unwrap() < 1e-8, "{:?}", w.delta_residual);
            assert!(w.det_residual < 1e-8);
        }
        assert!(verify(&r.protocol, &target, loose()).unwrap().pass);
        assert!(r.steps[0].residuals.channel_distance < 1e-8);
    }
}

#[test]
fn delta_prime_relation() {
    for mu in [0.3, 1.0, 2.0, 7.5] {
        for theta in [0.2, 1.0, PI, 4.0] {
            let e = delta_prime_phase(mu, theta);
            assert!((e.norm() - 1.0).abs() < 1e-12);
            let lhs = mu + e;
            let rhs = locclab::linalg::cis(theta) * (1.0 + mu * e);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}

#[test]
fn degenerate_gate_is_rejected() {
    let target = ControlledUnitary::canonical(0.0);
    assert!(matches!(reduce_to_three_turns(&padded4(0.0), &target, tol()), Err(Error::DegenerateGate)));
}

#[test]
fn unverified_input_is_rejected() {
    let p = padded4(PI);
    let wrong = ControlledUnitary::canonical(PI / 2.0);
    assert!(matches!(reduce_to_three_turns(&p, &wrong, tol()), Err(Error::NotVerified(_))));
}

#[test]
fn eisert_block_elements() {
    let target = ControlledUnitary::canonical(PI);
    let (q, _, swapped) = reduction_form(&build_eisert(&target)).unwrap();
    assert!(swapped);
    let blocks = compute_block_elements(&q, tol()).unwrap();
    assert_eq!(blocks.len(), 1);
    let b = &blocks[0];
    // both accumulated operators start as the identity
    for m in [&b.a00, &b.a11, &b.b00, &b.b11] {
        assert!(m.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
    }
    assert!(b.summation_residual < 1e-10);
    assert_eq!(classify_case(b).unwrap(), Case::C);
}

#[test]
fn reduction_trace_serializes() {
    let theta = PI / 2.0;
    let r = reduce_to_three_turns(&padded5(theta, 3), &ControlledUnitary::canonical(theta), tol()).unwrap();
    let v = serde_json::to_value(&r.steps).unwrap();
    for (k, s) in v.as_array().unwrap().iter().enumerate() {
        assert_eq!(s["step"], k + 1);
        for key in ["case", "lambda", "mu", "delta_prime", "residuals"] {
            assert!(s.get(key).is_some(), "{key}");
        }
    }
}

#[test]
fn proportionality_on_reference_protocols() {
    for theta in [PI, 0.4] {
        let r = check_lemma4(&build_eisert(&ControlledUnitary::canonical(theta)), tol()).unwrap();
        assert!(r.proportionality_residual < 1e-10);
        assert!((r.inferred_mu - 0.5).abs() < 1e-12);
    }
    assert!(check_lemma4(&padded4(PI), tol()).is_err());
}

#[test]
fn resource_functional_on_synthetic_resources() {
    let id = ComplexMatrix::identity(2);
    let x = |mu: f64| ComplexMatrix::diag_real(&[mu.sqrt(), (1.0 - mu).sqrt()]);
    let off = proportionality_report(&resource_functional(&id, &x(0.7), &id, &id)).unwrap();
    assert!(off.proportionality_residual > 0.1);
    assert!((off.inferred_mu - 0.7).abs() < 1e-12);
    let on = proportionality_report(&resource_functional(&id, &x(0.5), &id, &id)).unwrap();
    assert!(on.proportionality_residual < 1e-15);
}

#[test]
fn reduced_protocols_have_maximal_resource() {
    for seed in 0..3 {
        let theta = 0.7 + seed as f64;
        let r =
            reduce_to_three_turns(&padded5(theta, 100 + seed), &ControlledUnitary::canonical(theta), tol()).unwrap();
        let l4 = check_lemma4(&r.protocol, tol()).unwrap();
        assert!((l4.inferred_mu - 0.5).abs() < 1e-6);
    }
}

fn random_full_rank(rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let g = locclab::linalg::random_gaussian(3, 2, rng);
    &g.dagger() * &g
}

#[test]
fn split_single_gram_is_isometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = locclab::linalg::random_gaussian(3, 2, &mut rng);
    let gram = &t.dagger() * &t;
    let ops = split_measurement(&t, std::slice::from_ref(&gram), tol()).unwrap();
    let mt = &ops[0] * &t;
    assert!((&mt.dagger() * &mt).max_abs_diff(&gram) < 1e-10);
    // M restricted to range(T) is isometric: M·T = √(T†T)
    let root = locclab::linalg::sqrt_psd(&gram, 1e-15).unwrap();
    assert!(mt.max_abs_diff(&root) < 1e-10);
    assert_complete(&ops, 3);
}

fn assert_complete(ops: &[ComplexMatrix], dim: usize) {
    let mut sum = ComplexMatrix::zeros(dim, dim);
    for m in ops {
        sum = &sum + &(&m.dagger() * m);
    }
    assert!(
        sum.max_abs_diff(&ComplexMatrix::identity(dim)) < 1e-10,
        "{}",
        sum.max_abs_diff(&ComplexMatrix::identity(dim))
    );
}

#[test]
fn split_equal_halves() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let t = locclab::linalg::random_gaussian(2, 2, &mut rng);
        let half = (&t.dagger() * &t).scale_real(0.5);
        let ops = split_measurement(&t, &[half.clone(), half.clone()], tol()).unwrap();
        assert_eq!(ops.len(), 2);
        for m in &ops {
            let mt = m * &t;
            assert!((&mt.dagger() * &mt).max_abs_diff(&half) < 1e-10);
            // √2·M is unitary when T is invertible
            let scaled = m.scale_real(2f64.sqrt());
            assert!((&scaled.dagger() * &scaled).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-10);
        }
        assert_complete(&ops, 2);
    }
}

#[test]
fn split_rank_deficient_completes_off_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let col = locclab::linalg::random_gaussian(4, 1, &mut rng);
    let t = ComplexMatrix::hstack(&[&col, &col.scale(C64::new(0.0, 2.0))]);
    let g = &t.dagger() * &t;
    let ops = split_measurement(&t, &[g.scale_real(0.25), g.scale_real(0.75)], tol()).unwrap();
    assert!(ops.len() > 2);
    assert_complete(&ops, 4);
    let _ = random_full_rank(&mut rng);
    assert!(split_measurement(&t, &[g.scale_real(0.5)], tol()).is_err());
}

#[test]
fn classification_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let theta = 1.7;
    let p = padded5(theta, 9);
    let (q, _, _) = reduction_form(&p).unwrap();
    let base = compute_block_elements(&q, tol()).unwrap();
    // ranks survive resource-basis local unitaries
    let ua = random_unitary(2, &mut rng);
    let ub = random_unitary(2, &mut rng);
    let amps = locclab::linalg::kron(&ua, &ub).matvec(q.resource.amplitudes());
    let moved_resource = locclab::states::PureState::new(amps, (2, 2)).unwrap();
    let ga = locclab::linalg::kron(&ComplexMatrix::identity(2), &ua.dagger());
    let gb = locclab::linalg::kron(&ComplexMatrix::identity(2), &ub.dagger());
    let mut moved = locclab::reference::with_resource(&q, moved_resource).unwrap();
    for party in [Party::Alice, Party::Bob] {
        let k = moved.turns.iter().position(|t| t.party == party).unwrap();
        let g = if party == Party::Alice { &ga } else { &gb };
        for inst in moved.turns[k].instruments.values_mut() {
            inst.operators = inst.operators.iter().map(|m| m * g).collect();
        }
    }
    let after = compute_block_elements(&moved, tol()).unwrap();
    for (x, y) in base.iter().zip(&after) {
        assert_eq!(x.ranks, y.ranks);
    }
    assert!(verify(&moved, &ControlledUnitary::canonical(theta), tol()).unwrap().pass);

    let mut bad = base[0].clone();
    bad.ranks = [1, 2, 2, 2];
    assert!(matches!(classify_case(&bad), Err(Error::InvariantViolation(_))));
    bad.ranks = [2, 2, 1, 2];
    assert!(matches!(classify_case(&bad), Err(Error::InvariantViolation(_))));
    bad.ranks = [1, 1, 2, 1];
    assert_eq!(classify_case(&bad).unwrap(), Case::A);
    let _ = (ONE, ZERO, rng.random::<f64>());
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

    #[test]
    fn prop_reduction_preserves_channel(seed in 0u64..10_000, theta in 0.2f64..6.0) {
        let target = ControlledUnitary::canonical(theta);
        let p = padded6(theta, seed);
        let r = reduce_to_three_turns(&p, &target, tol()).unwrap();
        proptest::prop_assert_eq!(r.protocol.turn_count(), 3);
        proptest::prop_assert!(verify(&r.protocol, &target, loose()).unwrap().pass);
        proptest::prop_assert!(r.protocol.channel_distance(&p).unwrap() < 1e-7);
        for s in &r.steps {
            proptest::prop_assert!(s.residuals.max_deviation <= 1e-7);
        }
    }
}
