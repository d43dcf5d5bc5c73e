//! Turn-count reduction of verified protocols for a controlled-phase gate.
//!
//! A protocol is first brought to reduction form: uniform depth, strictly
//! alternating parties, Bob acting last, and every branch ending on the two
//! input qubits. Each step then rebuilds the last three turns below every
//! history as Alice–Bob–Alice and merges the new Alice turn into the one
//! before it.

mod blocks;
mod cases;
mod split;

use serde::Serialize;

pub use blocks::{classify_case, compute_block_elements, BlockElements, Case};
pub use cases::{delta_prime_phase, ReductionWorkspace};
pub use split::split_measurement;

use crate::error::{Error, Result};
use crate::linalg::{eigh, kron, ComplexMatrix, Tolerance};
use crate::protocol::{Instrument, LoccProtocol, Party, Turn};
use crate::states::ControlledUnitary;
use crate::verifier::verify;
use cases::{Context, Tail};

/// Accumulated error allowed on the reduced protocol.
pub const REDUCTION_BUDGET: f64 = 1e-7;

#[derive(Clone, Debug, Serialize)]
pub struct StepResiduals {
    pub channel_distance: f64,
    pub max_deviation: f64,
    pub construction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub turns_before: usize,
    pub turns_after: usize,
    /// Case shared by all reached histories, or "mixed".
    pub case: String,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub delta_prime: Option<f64>,
    pub residuals: StepResiduals,
    /// Outcomes added to complete measurements off the reachable support.
    pub completion_outcomes: usize,
    pub near_threshold: bool,
    pub histories: Vec<ReductionWorkspace>,
}

#[derive(Clone, Debug)]
pub struct Reduction {
    pub protocol: LoccProtocol,
    pub steps: Vec<StepRecord>,
    /// Same-party turns merged while bringing the input to reduction form.
    pub normalization_merges: usize,
}

fn check_theta(theta: f64) -> Result<()> {
    if (crate::linalg::cis(theta) - 1.0).norm() < 1e-9 {
        return Err(Error::DegenerateGate);
    }
    Ok(())
}

fn check_resource(p: &LoccProtocol, tol: Tolerance) -> Result<ComplexMatrix> {
    if p.dims.input != 2 || p.dims.resource != (2, 2) {
        return Err(Error::Shape(format!("reduction needs qubit inputs and a qubit pair resource, got {:?}", p.dims)));
    }
    let psi = p.resource.coefficient_matrix();
    let rank = crate::linalg::rank_tol(&psi, tol)?;
    if rank != 2 {
        return Err(Error::UnsupportedRank(rank));
    }
    Ok(psi)
}

/// Uniform depth, alternating turns, final registers on the inputs, Bob last.
/// Returns the protocol, the merge count and whether the parties were swapped.
pub fn reduction_form(p: &LoccProtocol) -> Result<(LoccProtocol, usize, bool)> {
    let padded = p.pad_to_uniform_depth();
    let (merged, merges) = padded.merge_same_party_runs()?;
    let trimmed = merged.discard_leftovers()?;
    match trimmed.turns.last() {
        Some(t) if t.party == Party::Alice => Ok((trimmed.swap_parties(), merges, true)),
        _ => Ok((trimmed, merges, false)),
    }
}

fn map_ops(turn: &mut Turn, f: impl Fn(&ComplexMatrix) -> ComplexMatrix) {
    for inst in turn.instruments.values_mut() {
        let ops = inst.operators.iter().map(&f).collect();
        *inst = Instrument::new(ops);
    }
}

/// Fold the target's local dressings into each party's first and last turn;
/// `inverse` removes them, otherwise they are applied.
fn dress(p: &LoccProtocol, target: &ControlledUnitary, inverse: bool) -> Result<LoccProtocol> {
    let mut q = p.pad_to_uniform_depth();
    for (party, w, v) in [(Party::Alice, &target.w1, &target.v1), (Party::Bob, &target.w2, &target.v2)] {
        let (Some(first), Some(last)) =
            (q.turns.iter().position(|t| t.party == party), q.turns.iter().rposition(|t| t.party == party))
        else {
            continue;
        };
        let (w, v) = if inverse { (w.dagger(), v.dagger()) } else { (w.clone(), v.clone()) };
        map_ops(&mut q.turns[first], |m| m * &kron(&w, &ComplexMatrix::identity(m.cols() / 2)));
        map_ops(&mut q.turns[last], |m| &kron(&v, &ComplexMatrix::identity(m.rows() / 2)) * m);
    }
    LoccProtocol::new(q.dims, q.resource.clone(), q.turns)
}

/// One reduction step on a protocol in reduction form with n ≥ 4 turns.
/// The result has n−1 turns and Alice acts last.
pub fn reduce_step(p: &LoccProtocol, theta: f64, tol: Tolerance) -> Result<(LoccProtocol, StepRecord)> {
    reduce_step_checked(p, theta, tol, None)
}

fn reduce_step_checked(
    p: &LoccProtocol,
    theta: f64,
    tol: Tolerance,
    only: Option<Case>,
) -> Result<(LoccProtocol, StepRecord)> {
    check_theta(theta)?;
    let psi = check_resource(p, tol)?;
    let n = p.turn_count();
    let alternating = p.turns.windows(2).all(|w| w[0].party != w[1].party);
    if n < 4 || !alternating || p.turns[n - 1].party != Party::Bob || !p.is_uniform() {
        return Err(Error::Structural(
            "reduction step needs an alternating uniform protocol of at least four turns ending with Bob".into(),
        ));
    }
    let mut tails = Vec::new();
    let mut histories = Vec::new();
    let mut near_threshold = false;
    for h in p.turns[n - 3].instruments.keys() {
        let (pa, qb) = p.accumulated_at(h)?;
        let blocks = blocks::blocks_from_operators(h, &pa, &qb, tol)?;
        let Some(blocks) = blocks else {
            tails.push((h.clone(), cases::tail_null(pa.rows(), qb.rows())));
            continue;
        };
        near_threshold |= blocks.near_threshold;
        let case = classify_case(&blocks)?;
        if let Some(expected) = only {
            if expected != case {
                return Err(Error::CaseMismatch { expected: expected.to_string(), found: case.to_string() });
            }
        }
        let cx = Context { p, history: h, pa, qb, psi: psi.clone(), theta, tol };
        let (tail, mut ws) = match case {
            Case::A => cases::tail_a(&cx)?,
            Case::B => cases::tail_b(&cx)?,
            Case::C => {
                let (tail, mut ws) = cases::tail_c(&cx.pa, &cx.qb, &blocks, &psi, theta, tol)?;
                if ws.lambda.is_some_and(|l| (l - 1.0).abs() > 1e-6) {
                    cases::delta_from_branches(&cx, &blocks, &mut ws)?;
                }
                (tail, ws)
            }
        };
        ws.history = h.clone();
        tails.push((h.clone(), tail));
        histories.push(ws);
    }
    let out = assemble(p, &tails)?;

    let target = ControlledUnitary::canonical(theta);
    let report = verify(&out, &target, tol.with_eq(REDUCTION_BUDGET))?;
    let channel_distance = p.channel_distance(&out)?;
    let construction = histories.iter().map(|w| w.construction_residual).fold(0.0, f64::max);
    let first_c = histories.iter().find(|w| w.case == Some(Case::C));
    let mut kinds: Vec<Case> = histories.iter().filter_map(|w| w.case).collect();
    kinds.dedup();
    let case = match kinds.as_slice() {
        [one] => one.to_string(),
        [] => "none".into(),
        _ if kinds.iter().all(|k| *k == kinds[0]) => kinds[0].to_string(),
        _ => "mixed".into(),
    };
    let record = StepRecord {
        step: 0,
        turns_before: n,
        turns_after: out.turn_count(),
        case,
        lambda: first_c.and_then(|w| w.lambda),
        mu: first_c.and_then(|w| w.mu),
        delta_prime: first_c.and_then(|w| w.delta_prime),
        residuals: StepResiduals { channel_distance, max_deviation: report.max_deviation, construction },
        completion_outcomes: histories.iter().map(|w| w.completion_outcomes).sum(),
        near_threshold,
        histories,
    };
    if !report.pass || channel_distance > REDUCTION_BUDGET {
        return Err(Error::Reduction {
            step: 0,
            reason: format!(
                "rebuilt protocol misses the gate (deviation {:e}, channel distance {:e}, construction {:e})",
                report.max_deviation, channel_distance, construction
            ),
        });
    }
    Ok((out, record))
}

/// Replace the last three turns by the tails and merge the new first Alice
/// turn into the previous one.
fn assemble(p: &LoccProtocol, tails: &[(crate::protocol::History, Tail)]) -> Result<LoccProtocol> {
    let n = p.turn_count();
    let mut t1 = Turn::new(Party::Alice);
    let mut t2 = Turn::new(Party::Bob);
    let mut t3 = Turn::new(Party::Alice);
    for (h, tail) in tails {
        t1.instruments.insert(h.clone(), Instrument::new(tail.first.clone()));
        for (x, ops) in tail.second.iter().enumerate() {
            let hx = [h.as_slice(), &[x]].concat();
            t2.instruments.insert(hx.clone(), Instrument::new(ops.clone()));
            for (y, fin) in tail.third[x].iter().enumerate() {
                t3.instruments.insert([hx.as_slice(), &[y]].concat(), Instrument::new(fin.clone()));
            }
        }
    }
    let mut turns = p.turns[..n - 3].to_vec();
    turns.extend([t1, t2, t3]);
    LoccProtocol::new(p.dims, p.resource.clone(), turns)?.merge_adjacent_turns(n - 4)
}

fn reduce_single_case(p: &LoccProtocol, theta: f64, tol: Tolerance, case: Case) -> Result<LoccProtocol> {
    let (q, _, swapped) = reduction_form(p)?;
    let (out, _) = reduce_step_checked(&q, theta, tol, Some(case))?;
    Ok(if swapped { out.swap_parties() } else { out })
}

/// One step where every reached history is in case a.
pub fn reduce_case_a(p: &LoccProtocol, theta: f64, tol: Tolerance) -> Result<LoccProtocol> {
    reduce_single_case(p, theta, tol, Case::A)
}

/// One step where every reached history is in case b.
pub fn reduce_case_b(p: &LoccProtocol, theta: f64, tol: Tolerance) -> Result<LoccProtocol> {
    reduce_single_case(p, theta, tol, Case::B)
}

/// One step where every reached history is in case c.
pub fn reduce_case_c(p: &LoccProtocol, theta: f64, tol: Tolerance) -> Result<LoccProtocol> {
    reduce_single_case(p, theta, tol, Case::C)
}

/// Reduce a verified protocol to three turns.
pub fn reduce_to_three_turns(p: &LoccProtocol, target: &ControlledUnitary, tol: Tolerance) -> Result<Reduction> {
    check_theta(target.theta)?;
    let report = verify(p, target, tol)?;
    if !report.pass {
        return Err(Error::NotVerified(format!("input deviates by {:e}", report.max_deviation)));
    }
    check_resource(p, tol)?;
    if p.turn_count() <= 3 {
        return Ok(Reduction { protocol: p.clone(), steps: Vec::new(), normalization_merges: 0 });
    }
    let bare = dress(p, target, true)?;
    let (mut q, normalization_merges, mut swapped) = reduction_form(&bare)?;
    let mut steps = Vec::new();
    while q.turn_count() > 3 {
        let step = steps.len() + 1;
        let (next, mut record) = reduce_step(&q, target.theta, tol).map_err(|e| match e {
            Error::Reduction { reason, .. } => Error::Reduction { step, reason },
            other => other,
        })?;
        record.step = step;
        steps.push(record);
        // Alice now acts last; swap back into reduction form.
        q = next.swap_parties();
        swapped = !swapped;
    }
    let oriented = if swapped { q.swap_parties() } else { q };
    let protocol = dress(&oriented, target, false)?;
    let check = verify(&protocol, target, tol.with_eq(REDUCTION_BUDGET))?;
    if !check.pass {
        return Err(Error::Reduction {
            step: steps.len(),
            reason: format!("reduced protocol deviates by {:e}", check.max_deviation),
        });
    }
    Ok(Reduction { protocol, steps, normalization_merges })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProportionalityReport {
    pub proportionality_residual: f64,
    pub inferred_mu: f64,
}

/// Σ_l (A00·Ψ·B̄_ll)(A00·Ψ·B̄_ll)†
pub fn resource_functional(
    a00: &ComplexMatrix,
    psi: &ComplexMatrix,
    b00: &ComplexMatrix,
    b11: &ComplexMatrix,
) -> ComplexMatrix {
    let mut sum = ComplexMatrix::zeros(2, 2);
    for b in [b00, b11] {
        let part = &(a00 * psi) * &b.conj();
        sum = &sum + &(&part * &part.dagger());
    }
    sum
}

/// Distance of the functional from a multiple of the identity and the larger
/// normalized eigenvalue.
pub fn proportionality_report(functional: &ComplexMatrix) -> Result<ProportionalityReport> {
    let tr = functional.trace().re;
    if tr <= 0.0 {
        return Err(Error::Domain("functional has no weight".into()));
    }
    let normalized = functional.scale_real(2.0 / tr);
    let residual = normalized.max_abs_diff(&ComplexMatrix::identity(2));
    let (vals, _) = eigh(functional)?;
    Ok(ProportionalityReport { proportionality_residual: residual, inferred_mu: vals[1] / tr })
}

/// For a three-turn protocol the first accumulated operators are the
/// identity, so the functional only sees the resource.
pub fn check_lemma4(p: &LoccProtocol, tol: Tolerance) -> Result<ProportionalityReport> {
    if p.turn_count() != 3 {
        return Err(Error::Structural(format!("proportionality check needs 3 turns, got {}", p.turn_count())));
    }
    check_resource(p, tol)?;
    let (q, _, _) = reduction_form(p)?;
    let psi = q.resource.coefficient_matrix();
    let blocks = compute_block_elements(&q, tol)?;
    let b = blocks.first().ok_or_else(|| Error::Structural("no reachable history".into()))?;
    proportionality_report(&resource_functional(&b.a00, &psi, &b.b00, &b.b11))
}

/// Append an Alice–Bob–Alice tail to every leaf of `prefix` so that the whole
/// implements diag(1, 1, 1, e^{iθ}); needs full-rank block elements at every
/// leaf. A trailing Alice turn of the prefix is merged with the tail.
pub fn complete_with_three_turns(prefix: &LoccProtocol, theta: f64, tol: Tolerance) -> Result<LoccProtocol> {
    check_theta(theta)?;
    let psi = check_resource(prefix, tol)?;
    if !prefix.is_uniform() {
        return Err(Error::Structural("prefix must have uniform depth".into()));
    }
    let mut tails = Vec::new();
    for leaf in prefix.leaves() {
        let (pa, qb) = (leaf.accumulated_a, leaf.accumulated_b);
        let blocks = blocks::blocks_from_operators(&leaf.outcomes, &pa, &qb, tol)?;
        let tail = match blocks {
            None => cases::tail_null(pa.rows(), qb.rows()),
            Some(b) if b.ranks == [2; 4] => cases::tail_c(&pa, &qb, &b, &psi, theta, tol)?.0,
            Some(b) => return Err(Error::CaseMismatch { expected: "c".into(), found: format!("ranks {:?}", b.ranks) }),
        };
        tails.push((leaf.outcomes, tail));
    }
    let n = prefix.turn_count();
    let mut turns = prefix.turns.clone();
    let mut t1 = Turn::new(Party::Alice);
    let mut t2 = Turn::new(Party::Bob);
    let mut t3 = Turn::new(Party::Alice);
    for (h, tail) in &tails {
        t1.instruments.insert(h.clone(), Instrument::new(tail.first.clone()));
        for (x, ops) in tail.second.iter().enumerate() {
            let hx = [h.as_slice(), &[x]].concat();
            t2.instruments.insert(hx.clone(), Instrument::new(ops.clone()));
            for (y, fin) in tail.third[x].iter().enumerate() {
                t3.instruments.insert([hx.as_slice(), &[y]].concat(), Instrument::new(fin.clone()));
            }
        }
    }
    turns.extend([t1, t2, t3]);
    let out = LoccProtocol::new(prefix.dims, prefix.resource.clone(), turns)?;
    if n > 0 && prefix.turns[n - 1].party == Party::Alice {
        out.merge_adjacent_turns(n - 1)
    } else {
        Ok(out)
    }
}
