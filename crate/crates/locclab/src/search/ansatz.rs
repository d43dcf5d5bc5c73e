use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cis, discard_row, eigh, kron, partial_trace, svd, ComplexMatrix, Side, C64, ZERO};
use crate::protocol::{Instrument, LoccProtocol, Party, RegisterDims, Turn};
use crate::states::{shannon_bits, PureState};

/// Three-turn Alice–Bob–Alice template over a `d×d` resource.
///
/// Alice rotates input⊗resource by `V_A` and measures her resource factor
/// (outcome m). Bob rotates his resource by `G_m` (identity for m = 0), then
/// input⊗resource by `V_B`, and measures his resource factor (outcome n).
/// Alice finishes with a unitary correction on her qubit. The corrections
/// are not free parameters: each is the polar factor that best aligns its
/// branch with the target, so they depend on the target angle.
///
/// Local unitaries on the resource are absorbed into `V_A` and `V_B`, so the
/// resource is fixed to `Σ_k √c_k |kk⟩` with Schmidt coefficients `c`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtocolAnsatz {
    pub resource_rank: usize,
    /// Schmidt coefficients are pulled back to this entropy (ebits) when
    /// they exceed it.
    pub entropy_cap: Option<f64>,
}

/// Parameter vector layout. Unitaries are `exp(iH)` with `H` traceless
/// Hermitian, encoded by [`hermitian_from`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamLayout {
    /// Spherical angles of the square roots of the Schmidt coefficients.
    pub schmidt: Range<usize>,
    pub alice_rotation: Range<usize>,
    pub bob_rotation: Range<usize>,
    /// `G_m` for m = 1..d.
    pub bob_conditional: Vec<Range<usize>>,
    pub len: usize,
}

/// Operators of a realized ansatz.
#[derive(Clone, Debug)]
pub struct Realization {
    pub schmidt: Vec<f64>,
    pub resource: ComplexMatrix,
    /// Alice's first-turn operators, by outcome m.
    pub alice: Vec<ComplexMatrix>,
    /// Bob's operators, `bob[m][n]`.
    pub bob: Vec<Vec<ComplexMatrix>>,
    /// Alice's corrections, `corrections[m][n]`.
    pub corrections: Vec<Vec<ComplexMatrix>>,
    /// Effective Kraus operators after correction, `kraus[m][n]`.
    pub kraus: Vec<Vec<ComplexMatrix>>,
}

impl ProtocolAnsatz {
    pub fn new(resource_rank: usize) -> Result<Self> {
        if !(2..=3).contains(&resource_rank) {
            return Err(Error::Domain(format!("resource rank {resource_rank} outside {{2, 3}}")));
        }
        Ok(Self { resource_rank, entropy_cap: None })
    }

    pub fn with_entropy_cap(mut self, cap: f64) -> Result<Self> {
        let max = (self.resource_rank as f64).log2();
        if !(cap > 0.0 && cap <= max + 1e-12) {
            return Err(Error::Domain(format!("entropy cap {cap} outside (0, {max}]")));
        }
        self.entropy_cap = Some(cap);
        Ok(self)
    }

    pub fn layout(&self) -> ParamLayout {
        let d = self.resource_rank;
        let big = (2 * d) * (2 * d) - 1;
        let small = d * d - 1;
        let schmidt = 0..d - 1;
        let alice_rotation = schmidt.end..schmidt.end + big;
        let bob_rotation = alice_rotation.end..alice_rotation.end + big;
        let mut at = bob_rotation.end;
        let bob_conditional = (1..d)
            .map(|_| {
                at += small;
                at - small..at
            })
            .collect();
        ParamLayout { schmidt, alice_rotation, bob_rotation, bob_conditional, len: at }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }

    /// Schmidt coefficients, descending order not enforced.
    pub fn schmidt_coefficients(&self, angles: &[f64]) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.resource_rank);
        let mut rest = 1.0;
        for a in angles {
            c.push(rest * a.cos().powi(2));
            rest *= a.sin().powi(2);
        }
        c.push(rest);
        match self.entropy_cap {
            Some(cap) => cap_entropy(&c, cap),
            None => c,
        }
    }

    /// Operators for a parameter vector, with corrections fitted to `target`.
    pub fn realize(&self, params: &[f64], target: &ComplexMatrix) -> Result<Realization> {
        let lay = self.layout();
        if params.len() != lay.len {
            return Err(Error::Shape(format!("{} parameters, layout needs {}", params.len(), lay.len)));
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        let d = self.resource_rank;
        let schmidt = self.schmidt_coefficients(&params[lay.schmidt.clone()]);
        let resource = ComplexMatrix::diag_real(&schmidt.iter().map(|c| c.sqrt()).collect::<Vec<_>>());
        let va = special_unitary(&params[lay.alice_rotation.clone()], 2 * d)?;
        let vb = special_unitary(&params[lay.bob_rotation.clone()], 2 * d)?;
        let id2 = ComplexMatrix::identity(2);
        let mut conditioned = vec![vb.clone()];
        for r in &lay.bob_conditional {
            conditioned.push(&vb * &kron(&id2, &special_unitary(&params[r.clone()], d)?));
        }
        let alice: Vec<ComplexMatrix> = (0..d).map(|m| &discard_row(2, d, m) * &va).collect();
        let bob: Vec<Vec<ComplexMatrix>> =
            conditioned.iter().map(|v| (0..d).map(|n| &discard_row(2, d, n) * v).collect()).collect();
        let udag = target.dagger();
        let mut corrections = Vec::with_capacity(d);
        let mut kraus = Vec::with_capacity(d);
        for (a, row) in alice.iter().zip(&bob) {
            let mut cs = Vec::with_capacity(d);
            let mut ks = Vec::with_capacity(d);
            for b in row {
                let raw = crate::protocol::effective_kraus(a, b, &resource);
                let c = best_correction(&raw, &udag)?;
                ks.push(&kron(&c, &id2) * &raw);
                cs.push(c);
            }
            corrections.push(cs);
            kraus.push(ks);
        }
        Ok(Realization { schmidt, resource, alice, bob, corrections, kraus })
    }

    /// The realized three-turn protocol.
    pub fn protocol(&self, params: &[f64], target: &ComplexMatrix) -> Result<LoccProtocol> {
        let r = self.realize(params, target)?;
        let d = self.resource_rank;
        let mut first = Turn::new(Party::Alice);
        first.instruments.insert(vec![], Instrument::new(r.alice.clone()));
        let mut second = Turn::new(Party::Bob);
        let mut third = Turn::new(Party::Alice);
        for m in 0..d {
            second.instruments.insert(vec![m], Instrument::new(r.bob[m].clone()));
            for n in 0..d {
                third.instruments.insert(vec![m, n], Instrument::new(vec![r.corrections[m][n].clone()]));
            }
        }
        let amps: Vec<C64> =
            (0..d * d).map(|k| if k % (d + 1) == 0 { r.resource[(k / d, k / d)] } else { ZERO }).collect();
        let resource = PureState::new(amps, (d, d))?;
        LoccProtocol::new(RegisterDims::qubits((d, d)), resource, vec![first, second, third])
    }

    pub fn resource_entropy(&self, params: &[f64]) -> f64 {
        shannon_bits(&self.schmidt_coefficients(&params[self.layout().schmidt]))
    }
}

/// Unitary `C` on Alice's qubit maximizing `|Tr(U†(C⊗I)K)|`.
fn best_correction(kraus: &ComplexMatrix, udag: &ComplexMatrix) -> Result<ComplexMatrix> {
    let m = partial_trace(&(kraus * udag), (2, 2), Side::A)?;
    let d = svd(&m)?;
    Ok(&d.vdag.dagger() * &d.u.dagger())
}

/// Moves coefficients toward their largest entry until the entropy equals
/// `cap`. Left unchanged when already at or below it.
pub fn cap_entropy(c: &[f64], cap: f64) -> Vec<f64> {
    if shannon_bits(c) <= cap {
        return c.to_vec();
    }
    let top = (0..c.len()).fold(0, |b, i| if c[i] > c[b] { i } else { b });
    let mix = |t: f64| -> Vec<f64> {
        c.iter().enumerate().map(|(i, &x)| (1.0 - t) * x + if i == top { t } else { 0.0 }).collect()
    };
    // entropy is concave along the segment, so the level set is crossed once
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if shannon_bits(&mix(mid)) > cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mix(hi)
}

/// Traceless Hermitian matrix: the first n−1 parameters are diagonal entries
/// (the last diagonal entry balances the trace), then the real and imaginary
/// parts of each upper-triangular entry in row-major order.
pub fn hermitian_from(params: &[f64], n: usize) -> Result<ComplexMatrix> {
    if params.len() != n * n - 1 {
        return Err(Error::Shape(format!("{} parameters for a {n}x{n} traceless Hermitian", params.len())));
    }
    let mut h = ComplexMatrix::zeros(n, n);
    let mut last = 0.0;
    for k in 0..n - 1 {
        h[(k, k)] = C64::new(params[k], 0.0);
        last -= params[k];
    }
    h[(n - 1, n - 1)] = C64::new(last, 0.0);
    let mut at = n - 1;
    for i in 0..n {
        for j in i + 1..n {
            let z = C64::new(params[at], params[at + 1]);
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
            at += 2;
        }
    }
    Ok(h)
}

/// Inverse of [`hermitian_from`] on traceless Hermitian input.
pub fn hermitian_params(h: &ComplexMatrix) -> Vec<f64> {
    let n = h.rows();
    let mut p: Vec<f64> = (0..n - 1).map(|k| h[(k, k)].re).collect();
    for i in 0..n {
        for j in i + 1..n {
            p.push(h[(i, j)].re);
            p.push(h[(i, j)].im);
        }
    }
    p
}

/// `exp(iH)` for the traceless Hermitian `H` encoded by `params`.
pub fn special_unitary(params: &[f64], n: usize) -> Result<ComplexMatrix> {
    let h = hermitian_from(params, n)?;
    let (vals, vecs) = eigh(&h)?;
    let phases: Vec<C64> = vals.iter().map(|&x| cis(x)).collect();
    Ok(&(&vecs * &ComplexMatrix::diag(&phases)) * &vecs.dagger())
}

/// Parameters whose [`special_unitary`] equals `u` up to a global phase.
pub fn unitary_params(u: &ComplexMatrix) -> Result<Vec<f64>> {
    let n = u.rows();
    if !u.is_square() || u.isometry_defect() > 1e-9 {
        return Err(Error::Domain("expected a unitary".into()));
    }
    let herm = (u + &u.dagger()).scale_real(0.5);
    let anti = (u - &u.dagger()).scale(C64::new(0.0, -0.5));
    // A generic mix of the commuting parts separates the eigenspaces of u.
    for mix in [0.613_7, 1.387_2, 0.274_1] {
        let (_, v) = eigh(&(&herm + &anti.scale_real(mix)))?;
        let diag = &(&v.dagger() * u) * &v;
        let off = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| diag[(i, j)].norm())
            .fold(0.0, f64::max);
        if off > 1e-9 {
            continue;
        }
        let mut phases: Vec<f64> = (0..n).map(|k| diag[(k, k)].arg()).collect();
        let mean = phases.iter().sum::<f64>() / n as f64;
        phases.iter_mut().for_each(|p| *p -= mean);
        let h = &(&v * &ComplexMatrix::diag_real(&phases)) * &v.dagger();
        return Ok(hermitian_params(&h));
    }
    Err(Error::InvariantViolation("could not diagonalize unitary".into()))
}

/// Ansatz parameters reproducing the teleportation-style protocol with a
/// maximally entangled qubit pair: CNOT onto Alice's resource, Bob's
/// flip-undo, controlled-phase from his resource qubit, and an X-basis
/// measurement.
pub fn teleportation_params(theta: f64) -> Result<Vec<f64>> {
    let ansatz = ProtocolAnsatz::new(2)?;
    let lay = ansatz.layout();
    let mut p = vec![0.0; lay.len];
    p[lay.schmidt.start] = std::f64::consts::FRAC_PI_4;
    let cnot = crate::states::controlled(&crate::linalg::pauli_x());
    p[lay.alice_rotation.clone()].copy_from_slice(&unitary_params(&cnot)?);
    let id2 = ComplexMatrix::identity(2);
    // diag(1,1,1,e^{iθ}) is symmetric in its factors, so it serves as the
    // resource-controlled phase on Bob's register as is
    let vb = &kron(&id2, &crate::linalg::hadamard()) * &crate::states::u_theta(theta);
    p[lay.bob_rotation.clone()].copy_from_slice(&unitary_params(&vb)?);
    p[lay.bob_conditional[0].clone()].copy_from_slice(&unitary_params(&crate::linalg::pauli_x())?);
    Ok(p)
}
