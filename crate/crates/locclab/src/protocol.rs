//! History-indexed measurement trees for two-party LOCC protocols.
//!
//! Register convention: each party holds its input qubit and its half of the
//! resource, ordered (input ⊗ resource), so Alice's basis index is
//! `i·d_res + s`. Operators may shrink the resource factor (down to
//! dimension 1) but always keep the input qubit as the leading factor.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{basis, kron, ComplexMatrix, Tolerance, C64, ONE, ZERO};
use crate::states::PureState;

pub const INPUT_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn other(self) -> Self {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

/// Outcome sequence of the preceding turns.
pub type History = Vec<usize>;

/// One party's measurement for a given history.
#[derive(Clone, Debug, PartialEq)]
pub struct Instrument {
    pub operators: Vec<ComplexMatrix>,
    /// Single-outcome identity inserted only to equalize branch lengths.
    pub identity_fill: bool,
}

impl Instrument {
    pub fn new(operators: Vec<ComplexMatrix>) -> Self {
        Self { operators, identity_fill: false }
    }

    pub fn identity(dim: usize) -> Self {
        Self { operators: vec![ComplexMatrix::identity(dim)], identity_fill: true }
    }

    /// ‖Σ M†M − I‖_max
    pub fn completeness_defect(&self) -> f64 {
        let dim = self.operators[0].cols();
        let mut sum = ComplexMatrix::zeros(dim, dim);
        for m in &self.operators {
            sum = &sum + &(&m.dagger() * m);
        }
        sum.max_abs_diff(&ComplexMatrix::identity(dim))
    }

    /// Haar-like random instrument: rows of a random isometry split into blocks.
    ///
    /// Panics unless `outcomes * out_dim >= in_dim`; no complete instrument exists otherwise.
    pub fn random<R: rand::Rng + ?Sized>(outcomes: usize, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        assert!(
            outcomes * out_dim >= in_dim,
            "{outcomes} outcomes of dimension {out_dim} cannot be complete on {in_dim}"
        );
        let v = crate::linalg::random_isometry(outcomes * out_dim, in_dim, rng);
        let operators = (0..outcomes).map(|r| v.submatrix(r * out_dim, 0, out_dim, in_dim)).collect();
        Self::new(operators)
    }

    /// Projective measurement of the resource factor in the computational basis.
    pub fn resource_projective(input: usize, res: usize) -> Self {
        Self::new((0..res).map(|t| kron(&ComplexMatrix::identity(input), &crate::linalg::projector(res, t))).collect())
    }

    pub fn is_trivial_identity(&self, eps: f64) -> bool {
        self.operators.len() == 1 && {
            let m = &self.operators[0];
            m.is_square() && m.max_abs_diff(&ComplexMatrix::identity(m.rows())) <= eps
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Turn {
    pub party: Party,
    pub instruments: BTreeMap<History, Instrument>,
}

impl Turn {
    pub fn new(party: Party) -> Self {
        Self { party, instruments: BTreeMap::new() }
    }

    pub fn is_identity_fill(&self) -> bool {
        !self.instruments.is_empty() && self.instruments.values().all(|i| i.identity_fill)
    }
}

/// Resource register dimensions per party.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterDims {
    pub input: usize,
    pub resource: (usize, usize),
}

impl RegisterDims {
    pub fn qubits(resource: (usize, usize)) -> Self {
        Self { input: INPUT_DIM, resource }
    }

    pub fn initial(&self, party: Party) -> usize {
        self.input
            * match party {
                Party::Alice => self.resource.0,
                Party::Bob => self.resource.1,
            }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoccProtocol {
    pub dims: RegisterDims,
    pub resource: PureState,
    pub turns: Vec<Turn>,
}

/// A leaf of the outcome tree with both parties' accumulated operators.
#[derive(Clone, Debug)]
pub struct Branch {
    pub outcomes: History,
    pub accumulated_a: ComplexMatrix,
    pub accumulated_b: ComplexMatrix,
}

/// A branch after tracing out leftover resource: `kraus` maps the two input
/// qubits to the two output qubits with the resource state folded in.
#[derive(Clone, Debug)]
pub struct EffectiveBranch {
    pub outcomes: History,
    pub leftover: (usize, usize),
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    pub kraus: ComplexMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Completeness { turn: usize, history: History, defect: f64 },
    InputDimension { turn: usize, history: History, expected: usize, found: usize },
    OutputDimension { turn: usize, history: History, found: usize },
    EmptyInstrument { turn: usize, history: History },
}

impl LoccProtocol {
    pub fn new(dims: RegisterDims, resource: PureState, turns: Vec<Turn>) -> Result<Self> {
        if resource.dims() != dims.resource {
            return Err(Error::Shape(format!(
                "resource dims {:?} differ from register dims {:?}",
                resource.dims(),
                dims.resource
            )));
        }
        if dims.input != INPUT_DIM {
            return Err(Error::Shape("input registers must be qubits".into()));
        }
        let p = Self { dims, resource, turns };
        p.check_structure()?;
        Ok(p)
    }

    pub fn turn_count(&self) -> usize {
        self.turns.len()
    }

    fn check_structure(&self) -> Result<()> {
        let mut producible: Vec<History> = vec![vec![]];
        for (k, turn) in self.turns.iter().enumerate() {
            let mut next = Vec::new();
            for (h, inst) in &turn.instruments {
                if h.len() != k {
                    return Err(Error::Structural(format!("turn {k} references history {h:?} of wrong length")));
                }
                if !producible.contains(h) {
                    return Err(Error::Structural(format!("turn {k} references unreachable history {h:?}")));
                }
                for r in 0..inst.operators.len() {
                    let mut e = h.clone();
                    e.push(r);
                    next.push(e);
                }
            }
            producible = next;
        }
        Ok(())
    }

    /// Completeness and shape checks; structural errors are returned as `Err`.
    pub fn validate(&self, tol: Tolerance) -> Result<Vec<Violation>> {
        self.check_structure()?;
        let mut out = Vec::new();
        let mut stack = vec![(0usize, History::new(), self.dims.initial(Party::Alice), self.dims.initial(Party::Bob))];
        while let Some((k, h, da, db)) = stack.pop() {
            let Some(turn) = self.turns.get(k) else { continue };
            let Some(inst) = turn.instruments.get(&h) else { continue };
            if inst.operators.is_empty() {
                out.push(Violation::EmptyInstrument { turn: k, history: h });
                continue;
            }
            let cur = if turn.party == Party::Alice { da } else { db };
            let mut ok = true;
            for m in &inst.operators {
                if m.cols() != cur {
                    out.push(Violation::InputDimension { turn: k, history: h.clone(), expected: cur, found: m.cols() });
                    ok = false;
                    break;
                }
                if m.rows() % self.dims.input != 0 || m.rows() == 0 {
                    out.push(Violation::OutputDimension { turn: k, history: h.clone(), found: m.rows() });
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let defect = inst.completeness_defect();
            if defect > tol.eps_eq {
                out.push(Violation::Completeness { turn: k, history: h.clone(), defect });
            }
            for (r, m) in inst.operators.iter().enumerate() {
                let mut e = h.clone();
                e.push(r);
                let (na, nb) = if turn.party == Party::Alice { (m.rows(), db) } else { (da, m.rows()) };
                stack.push((k + 1, e, na, nb));
            }
        }
        Ok(out)
    }

    /// Every leaf of the tree, including branches that end early.
    pub fn leaves(&self) -> Vec<Branch> {
        let mut out = Vec::new();
        let a0 = ComplexMatrix::identity(self.dims.initial(Party::Alice));
        let b0 = ComplexMatrix::identity(self.dims.initial(Party::Bob));
        self.walk(0, Vec::new(), a0, b0, &mut out);
        out
    }

    fn walk(&self, k: usize, h: History, a: ComplexMatrix, b: ComplexMatrix, out: &mut Vec<Branch>) {
        let inst = self.turns.get(k).and_then(|t| t.instruments.get(&h));
        let Some(inst) = inst else {
            out.push(Branch { outcomes: h, accumulated_a: a, accumulated_b: b });
            return;
        };
        let party = self.turns[k].party;
        for (r, m) in inst.operators.iter().enumerate() {
            let mut e = h.clone();
            e.push(r);
            match party {
                Party::Alice => self.walk(k + 1, e, m * &a, b.clone(), out),
                Party::Bob => self.walk(k + 1, e, a.clone(), m * &b, out),
            }
        }
    }

    pub fn is_uniform(&self) -> bool {
        let n = self.turns.len();
        self.leaves().iter().all(|l| l.outcomes.len() == n)
    }

    /// Accumulated operators per leaf; requires uniform depth.
    pub fn accumulated_operators(&self) -> Result<Vec<Branch>> {
        let leaves = self.leaves();
        let n = self.turns.len();
        if let Some(l) = leaves.iter().find(|l| l.outcomes.len() != n) {
            return Err(Error::Structural(format!("branch {:?} is shorter than {n} turns", l.outcomes)));
        }
        Ok(leaves)
    }

    /// Branches split over leftover resource basis states, each with its
    /// 4×4 effective Kraus operator on the input qubits.
    pub fn effective_branches(&self) -> Vec<EffectiveBranch> {
        let psi = self.resource.coefficient_matrix();
        let mut out = Vec::new();
        for leaf in self.leaves() {
            let ma = leaf.accumulated_a.rows() / self.dims.input;
            let mb = leaf.accumulated_b.rows() / self.dims.input;
            for ra in 0..ma {
                let a = &crate::linalg::discard_row(self.dims.input, ma, ra) * &leaf.accumulated_a;
                for rb in 0..mb {
                    let b = &crate::linalg::discard_row(self.dims.input, mb, rb) * &leaf.accumulated_b;
                    let kraus = effective_kraus(&a, &b, &psi);
                    out.push(EffectiveBranch {
                        outcomes: leaf.outcomes.clone(),
                        leftover: (ra, rb),
                        a: a.clone(),
                        b,
                        kraus,
                    });
                }
            }
        }
        out
    }

    /// ρ ↦ Σ Tr_res[(A⊗B)(ρ⊗ρ_r)(A⊗B)†].
    pub fn apply_channel(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_density(rho)?;
        let mut out = ComplexMatrix::zeros(4, 4);
        for br in self.effective_branches() {
            out = &out + &(&(&br.kraus * rho) * &br.kraus.dagger());
        }
        Ok(out)
    }

    /// Single-outcome identity turns fill the short branches.
    pub fn pad_to_uniform_depth(&self) -> Self {
        let n = self.turns.len();
        let mut p = self.clone();
        for leaf in self.leaves() {
            let mut h = leaf.outcomes.clone();
            let (mut da, mut db) = (leaf.accumulated_a.rows(), leaf.accumulated_b.rows());
            for k in h.len()..n {
                let party = p.turns[k].party;
                let dim = if party == Party::Alice { da } else { db };
                p.turns[k].instruments.insert(h.clone(), Instrument::identity(dim));
                h.push(0);
                if party == Party::Alice {
                    da = dim;
                } else {
                    db = dim;
                }
            }
        }
        p
    }

    /// Merge same-party turns `k` and `k+1`; the joint outcome (r_k, r_{k+1})
    /// gets a fresh label.
    pub fn merge_adjacent_turns(&self, k: usize) -> Result<Self> {
        if k + 1 >= self.turns.len() {
            return Err(Error::Structural(format!("no turn after {k}")));
        }
        let (t1, t2) = (&self.turns[k], &self.turns[k + 1]);
        if t1.party != t2.party {
            return Err(Error::Structural(format!("turns {k} and {} belong to different parties", k + 1)));
        }
        let mut merged = Turn::new(t1.party);
        // (history prefix, r_k, r_{k+1}) -> new label
        let mut relabel: BTreeMap<(History, usize, usize), usize> = BTreeMap::new();
        for (h, i1) in &t1.instruments {
            let mut ops = Vec::new();
            let mut fill = i1.identity_fill;
            for (r1, m1) in i1.operators.iter().enumerate() {
                let mut e = h.clone();
                e.push(r1);
                match t2.instruments.get(&e) {
                    Some(i2) => {
                        fill &= i2.identity_fill;
                        for (r2, m2) in i2.operators.iter().enumerate() {
                            relabel.insert((h.clone(), r1, r2), ops.len());
                            ops.push(m2 * m1);
                        }
                    }
                    None => {
                        relabel.insert((h.clone(), r1, usize::MAX), ops.len());
                        ops.push(m1.clone());
                    }
                }
            }
            merged.instruments.insert(h.clone(), Instrument { operators: ops, identity_fill: fill });
        }
        let mut turns: Vec<Turn> = self.turns[..k].to_vec();
        turns.push(merged);
        for t in &self.turns[k + 2..] {
            let mut nt = Turn::new(t.party);
            for (h, inst) in &t.instruments {
                let label = relabel[&(h[..k].to_vec(), h[k], h[k + 1])];
                let mut nh = h[..k].to_vec();
                nh.push(label);
                nh.extend_from_slice(&h[k + 2..]);
                nt.instruments.insert(nh, inst.clone());
            }
            turns.push(nt);
        }
        Self::new(self.dims, self.resource.clone(), turns)
    }

    /// Exchange the roles of Alice and Bob (the resource is transposed).
    pub fn swap_parties(&self) -> Self {
        let (da, db) = self.dims.resource;
        let psi = self.resource.coefficient_matrix().transpose();
        let resource = PureState::new(psi.entries().to_vec(), (db, da)).expect("transposed state stays normalized");
        let turns =
            self.turns.iter().map(|t| Turn { party: t.party.other(), instruments: t.instruments.clone() }).collect();
        Self { dims: RegisterDims { input: self.dims.input, resource: (db, da) }, resource, turns }
    }

    /// Largest output difference over the 16 product-basis input densities.
    pub fn channel_distance(&self, other: &Self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for rho in basis_densities() {
            worst = worst.max(self.apply_channel(&rho)?.max_abs_diff(&other.apply_channel(&rho)?));
        }
        Ok(worst)
    }

    /// ‖Σ (A⊗B)†(A⊗B) − I‖ over the accumulated operators.
    pub fn global_completeness_defect(&self) -> f64 {
        let leaves = self.leaves();
        let da = self.dims.initial(Party::Alice);
        let db = self.dims.initial(Party::Bob);
        let mut sum = ComplexMatrix::zeros(da * db, da * db);
        for l in &leaves {
            let k = kron(&l.accumulated_a, &l.accumulated_b);
            sum = &sum + &(&k.dagger() * &k);
        }
        sum.max_abs_diff(&ComplexMatrix::identity(da * db))
    }
}

/// K|ij⟩ = Σ_{s,t} ψ[s,t] · A|i,s⟩ ⊗ B|j,t⟩ for output-qubit operators A, B.
pub fn effective_kraus(a: &ComplexMatrix, b: &ComplexMatrix, psi: &ComplexMatrix) -> ComplexMatrix {
    let (dra, drb) = psi.shape();
    let (oa, ob) = (a.rows(), b.rows());
    let mut k = ComplexMatrix::zeros(oa * ob, 4);
    for i in 0..2 {
        for j in 0..2 {
            let col = i * 2 + j;
            for s in 0..dra {
                for t in 0..drb {
                    let w = psi[(s, t)];
                    if w == ZERO {
                        continue;
                    }
                    let ca = i * dra + s;
                    let cb = j * drb + t;
                    for x in 0..oa {
                        let ax = a[(x, ca)];
                        if ax == ZERO {
                            continue;
                        }
                        for y in 0..ob {
                            k[(x * ob + y, col)] += w * ax * b[(y, cb)];
                        }
                    }
                }
            }
        }
    }
    k
}

fn check_density(rho: &ComplexMatrix) -> Result<()> {
    if rho.shape() != (4, 4) {
        return Err(Error::Shape(format!("input density must be 4x4, got {:?}", rho.shape())));
    }
    if rho.hermitian_defect() > 1e-9 || (rho.trace() - ONE).norm() > 1e-9 {
        return Err(Error::Domain("input is not a trace-one Hermitian matrix".into()));
    }
    let (vals, _) = crate::linalg::eigh(rho)?;
    if vals[0] < -1e-9 {
        return Err(Error::Domain("input density is not positive semidefinite".into()));
    }
    Ok(())
}

/// Product states of {|0⟩, |1⟩, |+⟩, |+i⟩} on both qubits (an
/// informationally complete set of 16 densities).
pub fn basis_densities() -> Vec<ComplexMatrix> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let singles: Vec<Vec<C64>> = vec![
        basis(2, 0),
        basis(2, 1),
        vec![C64::new(h, 0.0), C64::new(h, 0.0)],
        vec![C64::new(h, 0.0), C64::new(0.0, h)],
    ];
    let mut out = Vec::new();
    for a in &singles {
        for b in &singles {
            let v = crate::linalg::kron_vec(a, b);
            out.push(ComplexMatrix::outer(&v, &v));
        }
    }
    out
}

impl LoccProtocol {
    /// Accumulated operators of both parties after the turns covered by `history`.
    pub fn accumulated_at(&self, history: &[usize]) -> Result<(ComplexMatrix, ComplexMatrix)> {
        let mut a = ComplexMatrix::identity(self.dims.initial(Party::Alice));
        let mut b = ComplexMatrix::identity(self.dims.initial(Party::Bob));
        for k in 0..history.len() {
            let inst = self.turns.get(k).and_then(|t| t.instruments.get(&history[..k]));
            let op = inst
                .and_then(|i| i.operators.get(history[k]))
                .ok_or_else(|| Error::Structural(format!("history {history:?} leaves the tree at turn {k}")))?;
            match self.turns[k].party {
                Party::Alice => a = op * &a,
                Party::Bob => b = op * &b,
            }
        }
        Ok((a, b))
    }

    /// Replace every operator of turn `k` by a list of operators; each new
    /// outcome inherits the subtree of the operator it came from.
    pub fn refine_outcomes(
        &self,
        k: usize,
        split: impl Fn(&History, usize, &ComplexMatrix) -> Vec<ComplexMatrix>,
    ) -> Result<Self> {
        let mut relabel: BTreeMap<(History, usize), Vec<usize>> = BTreeMap::new();
        let mut refined = Turn::new(self.turns[k].party);
        for (h, inst) in &self.turns[k].instruments {
            let mut ops = Vec::new();
            for (r, m) in inst.operators.iter().enumerate() {
                let pieces = split(h, r, m);
                relabel.insert((h.clone(), r), (ops.len()..ops.len() + pieces.len()).collect());
                ops.extend(pieces);
            }
            refined.instruments.insert(h.clone(), Instrument { operators: ops, identity_fill: inst.identity_fill });
        }
        let mut turns: Vec<Turn> = self.turns[..k].to_vec();
        turns.push(refined);
        for t in &self.turns[k + 1..] {
            let mut nt = Turn::new(t.party);
            for (h, inst) in &t.instruments {
                for &label in &relabel[&(h[..k].to_vec(), h[k])] {
                    let mut nh = h.clone();
                    nh[k] = label;
                    nt.instruments.insert(nh, inst.clone());
                }
            }
            turns.push(nt);
        }
        Self::new(self.dims, self.resource.clone(), turns)
    }

    /// Merge every run of consecutive same-party turns; returns the merge count.
    pub fn merge_same_party_runs(&self) -> Result<(Self, usize)> {
        let mut p = self.clone();
        let mut merges = 0;
        while let Some(k) = (0..p.turns.len().saturating_sub(1)).find(|&k| p.turns[k].party == p.turns[k + 1].party) {
            p = p.merge_adjacent_turns(k)?;
            merges += 1;
        }
        Ok((p, merges))
    }

    /// Index of the last turn taken by `party`.
    pub fn last_turn_of(&self, party: Party) -> Option<usize> {
        self.turns.iter().rposition(|t| t.party == party)
    }

    /// Split each party's final operators over the leftover resource basis so
    /// that every branch ends on the input qubits alone.
    pub fn discard_leftovers(&self) -> Result<Self> {
        let mut p = self.clone();
        for party in [Party::Alice, Party::Bob] {
            let Some(k) = p.last_turn_of(party) else { continue };
            let input = p.dims.input;
            p = p.refine_outcomes(k, |_, _, m| {
                let rest = m.rows() / input;
                if rest <= 1 {
                    return vec![m.clone()];
                }
                (0..rest).map(|t| &crate::linalg::discard_row(input, rest, t) * m).collect()
            })?;
        }
        Ok(p)
    }
}

// ---------- JSON file format ----------

#[derive(Serialize, Deserialize)]
struct ProtocolFile {
    dims: RegisterDims,
    resource: ResourceSpec,
    turns: Vec<TurnFile>,
}

#[derive(Serialize, Deserialize)]
struct ResourceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitudes: Option<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct TurnFile {
    party: Party,
    instruments: Vec<InstrumentFile>,
}

#[derive(Serialize, Deserialize)]
struct InstrumentFile {
    history: History,
    operators: Vec<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    fill: bool,
}

impl LoccProtocol {
    pub fn to_json(&self) -> Result<String> {
        let file = ProtocolFile {
            dims: self.dims,
            resource: ResourceSpec {
                mu: None,
                amplitudes: Some(self.resource.amplitudes().iter().map(|z| [z.re, z.im]).collect()),
            },
            turns: self
                .turns
                .iter()
                .map(|t| TurnFile {
                    party: t.party,
                    instruments: t
                        .instruments
                        .iter()
                        .map(|(h, i)| InstrumentFile {
                            history: h.clone(),
                            operators: i.operators.clone(),
                            fill: i.identity_fill,
                        })
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProtocolFile = serde_json::from_str(text)?;
        let resource = match (file.resource.mu, file.resource.amplitudes) {
            (Some(mu), None) => {
                if file.dims.resource != (2, 2) {
                    return Err(Error::Parse("a mu-specified resource needs resource dims (2, 2)".into()));
                }
                crate::states::ResourceState::canonical(mu)?.state
            }
            (None, Some(a)) => {
                PureState::new(a.iter().map(|&[re, im]| C64::new(re, im)).collect(), file.dims.resource)?
            }
            _ => return Err(Error::Parse("resource needs exactly one of mu or amplitudes".into())),
        };
        let mut turns = Vec::new();
        for t in file.turns {
            let mut turn = Turn::new(t.party);
            for i in t.instruments {
                if turn.instruments.contains_key(&i.history) {
                    return Err(Error::Structural(format!("duplicate history {:?}", i.history)));
                }
                turn.instruments.insert(i.history, Instrument { operators: i.operators, identity_fill: i.fill });
            }
            turns.push(turn);
        }
        Self::new(file.dims, resource, turns)
    }
}
