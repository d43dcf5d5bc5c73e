//! Known-good constructions and entanglement benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{basis, kron, pauli_x, pauli_z, ComplexMatrix, Tolerance, C64, ONE, ZERO};
use crate::protocol::{Instrument, LoccProtocol, Party, RegisterDims, Turn};
use crate::states::{schmidt_decompose, shannon_bits, ControlledUnitary, PureState, ResourceState};

/// Three-turn teleportation-style protocol with a maximally entangled pair.
///
/// Alice copies her input onto her resource qubit and measures it (outcome m);
/// Bob undoes the flip, applies the controlled `u` from his resource qubit,
/// measures it in the X basis (outcome n); Alice applies Z^n. Local dressings
/// of the target are folded into the first and last operators.
pub fn build_eisert(target: &ControlledUnitary) -> LoccProtocol {
    let id = ComplexMatrix::identity(2);
    let cnot = crate::states::controlled(&pauli_x());
    let flip = [id.clone(), pauli_x()];
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let x_basis = [vec![C64::new(h, 0.0), C64::new(h, 0.0)], vec![C64::new(h, 0.0), C64::new(-h, 0.0)]];
    // control on the resource (second) factor of Bob's register
    let cu = &kron(&id, &ComplexMatrix::diag(&[ONE, ZERO])) + &kron(&target.u, &ComplexMatrix::diag(&[ZERO, ONE]));

    let mut first = Turn::new(Party::Alice);
    let pre_a = kron(&target.w1, &id);
    let ops_a: Vec<ComplexMatrix> = (0..2).map(|m| &(&crate::linalg::discard_row(2, 2, m) * &cnot) * &pre_a).collect();
    first.instruments.insert(vec![], Instrument::new(ops_a));

    let mut second = Turn::new(Party::Bob);
    let pre_b = kron(&target.w2, &id);
    for (m, f) in flip.iter().enumerate() {
        let ops: Vec<ComplexMatrix> = x_basis
            .iter()
            .map(|xv| {
                let bra = kron(&id, &ComplexMatrix::row_vector(&xv.iter().map(|z| z.conj()).collect::<Vec<_>>()));
                &(&(&(&target.v2 * &bra) * &cu) * &kron(&id, f)) * &pre_b
            })
            .collect();
        second.instruments.insert(vec![m], Instrument::new(ops));
    }

    let mut third = Turn::new(Party::Alice);
    let corrections = [target.v1.clone(), &target.v1 * &pauli_z()];
    for m in 0..2 {
        for (n, c) in corrections.iter().enumerate() {
            third.instruments.insert(vec![m, n], Instrument::new(vec![c.clone()]));
        }
    }
    let resource = ResourceState::canonical(0.5).expect("μ = 1/2 is valid").state;
    LoccProtocol::new(RegisterDims::qubits((2, 2)), resource, vec![first, second, third])
        .expect("Eisert protocol is well formed")
}

/// Replace the shared state of a protocol (same register dimensions).
pub fn with_resource(p: &LoccProtocol, resource: PureState) -> Result<LoccProtocol> {
    LoccProtocol::new(p.dims, resource, p.turns.clone())
}

#[derive(Clone, Debug, Serialize)]
pub struct EntanglingPower {
    pub ebits: f64,
    /// (amplitude angle, phase) of Alice's and Bob's optimal input qubits.
    pub argmax: [f64; 4],
    pub evaluations: usize,
}

const STARTS: usize = 16;
const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// cos(a)|0⟩ + e^{ib} sin(a)|1⟩
pub fn qubit(amp: f64, phase: f64) -> [C64; 2] {
    [C64::new(amp.cos(), 0.0), C64::from_polar(amp.sin(), phase)]
}

/// Output entropy of the gate on a product input, via the 2×2 determinant.
pub fn product_output_entropy(gate: &ComplexMatrix, angles: &[f64; 4]) -> f64 {
    let a = qubit(angles[0], angles[1]);
    let b = qubit(angles[2], angles[3]);
    let v = gate.matvec(&crate::linalg::kron_vec(&a, &b));
    let det = (v[0] * v[3] - v[1] * v[2]).norm();
    let disc = (1.0 - 4.0 * det * det).max(0.0).sqrt();
    shannon_bits(&[(1.0 + disc) / 2.0, (1.0 - disc) / 2.0])
}

/// Maximal entanglement generated from product inputs, by multi-start
/// coordinate descent with golden-section line searches.
pub fn entangling_power(target: &ControlledUnitary, budget: usize) -> EntanglingPower {
    let gate = target.matrix();
    let per_start = (budget / STARTS).max(40);
    let results: Vec<(f64, [f64; 4], usize)> = (0..STARTS)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed + s as u64);
            let mut x = [0.0; 4];
            for (i, xi) in x.iter_mut().enumerate() {
                let span = if i % 2 == 0 { std::f64::consts::FRAC_PI_2 } else { 2.0 * std::f64::consts::PI };
                *xi = rng.random::<f64>() * span;
            }
            coordinate_ascent(&gate, x, per_start)
        })
        .collect();
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.0 > results[best].0 {
            best = i;
        }
    }
    let evaluations = results.iter().map(|r| r.2).sum();
    EntanglingPower { ebits: results[best].0.clamp(0.0, 1.0), argmax: results[best].1, evaluations }
}

fn coordinate_ascent(gate: &ComplexMatrix, mut x: [f64; 4], budget: usize) -> (f64, [f64; 4], usize) {
    let mut evals = 1;
    let mut fx = product_output_entropy(gate, &x);
    let mut width = std::f64::consts::FRAC_PI_2;
    while evals + 4 * 30 <= budget && width > 1e-10 {
        let before = fx;
        for i in 0..4 {
            let f = |t: f64| {
                let mut y = x;
                y[i] = t;
                product_output_entropy(gate, &y)
            };
            let (t, ft, used) = golden_max(f, x[i] - width, x[i] + width, 30);
            evals += used;
            if ft > fx {
                x[i] = t;
                fx = ft;
            }
        }
        if fx - before < 1e-14 {
            width *= 0.5;
        }
    }
    (fx, x, evals)
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64, usize) {
    let mut c = hi - GOLDEN * (hi - lo);
    let mut d = lo + GOLDEN * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - GOLDEN * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + GOLDEN * (hi - lo);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc, iters + 2)
    } else {
        (d, fd, iters + 2)
    }
}

#[derive(Clone, Debug)]
pub struct ConvertibilityQuery {
    pub input: PureState,
    pub target_gate: ControlledUnitary,
    pub resource: ResourceState,
}

#[derive(Clone, Debug, Serialize)]
pub struct MajorizationRecord {
    pub resource_coefficients: [f64; 2],
    pub target_coefficients: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct Convertibility {
    pub feasible: bool,
    pub required_entropy: f64,
    pub comparison: MajorizationRecord,
}

/// Whether the resource can be spent to apply the gate to one known product input.
pub fn known_input_feasible(q: &ConvertibilityQuery, tol: Tolerance) -> Result<Convertibility> {
    if q.input.dims() != (2, 2) {
        return Err(Error::Shape("known input must be a two-qubit state".into()));
    }
    let input_entropy = crate::states::entanglement_entropy(&q.input)?;
    if input_entropy > tol.eps_eq.max(1e-9) {
        return Err(Error::Domain(format!("input is not a product state (entropy {input_entropy:e})")));
    }
    let out = PureState::normalized(q.target_gate.matrix().matvec(q.input.amplitudes()), (2, 2))?;
    let probs = |s: &PureState| -> Result<[f64; 2]> {
        let d = schmidt_decompose(s)?;
        let mut p: Vec<f64> = d.coeffs.iter().map(|c| c * c).collect();
        p.resize(2, 0.0);
        Ok([p[0], p[1]])
    };
    let target = probs(&out)?;
    let resource = probs(&q.resource.state)?;
    Ok(Convertibility {
        feasible: resource[0] <= target[0] + tol.eps_eq,
        required_entropy: shannon_bits(&target),
        comparison: MajorizationRecord { resource_coefficients: resource, target_coefficients: target },
    })
}

/// Computational basis product state |i⟩|j⟩.
pub fn basis_product(i: usize, j: usize) -> PureState {
    PureState::product(&basis(2, i), &basis(2, j)).expect("basis states are normalized")
}

/// Random product input, for sampling.
pub fn random_product<R: Rng + ?Sized>(rng: &mut R) -> PureState {
    let a = qubit(rng.random::<f64>() * std::f64::consts::PI, rng.random::<f64>() * std::f64::consts::TAU);
    let b = qubit(rng.random::<f64>() * std::f64::consts::PI, rng.random::<f64>() * std::f64::consts::TAU);
    PureState::product(&a, &b).expect("unit qubits")
}
