//! Pure bipartite states, Schmidt analysis and canonical forms for
//! resources and controlled-unitary gates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, eigh, kron, norm, rank_tol, svd, ComplexMatrix, Tolerance, C64, ONE, ZERO};

const NORM_TOL: f64 = 1e-9;

/// Normalized pure state on C^{dA} ⊗ C^{dB}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawState", into = "RawState")]
pub struct PureState {
    amplitudes: Vec<C64>,
    dims: (usize, usize),
}

#[derive(Serialize, Deserialize)]
struct RawState {
    dims: (usize, usize),
    amplitudes: Vec<[f64; 2]>,
}

impl TryFrom<RawState> for PureState {
    type Error = Error;
    fn try_from(r: RawState) -> Result<Self> {
        PureState::new(r.amplitudes.iter().map(|&[re, im]| C64::new(re, im)).collect(), r.dims)
    }
}

impl From<PureState> for RawState {
    fn from(p: PureState) -> Self {
        RawState { dims: p.dims, amplitudes: p.amplitudes.iter().map(|z| [z.re, z.im]).collect() }
    }
}

impl PureState {
    pub fn new(amplitudes: Vec<C64>, dims: (usize, usize)) -> Result<Self> {
        if dims.0 == 0 || dims.1 == 0 || amplitudes.len() != dims.0 * dims.1 {
            return Err(Error::Shape(format!("{} amplitudes for dims ({}, {})", amplitudes.len(), dims.0, dims.1)));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("non-finite amplitude".into()));
        }
        let n = norm(&amplitudes);
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::Domain(format!("state norm {n} is not 1")));
        }
        Ok(Self { amplitudes, dims })
    }

    /// Normalizes the given vector first.
    pub fn normalized(amplitudes: Vec<C64>, dims: (usize, usize)) -> Result<Self> {
        let n = norm(&amplitudes);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Domain("cannot normalize a zero vector".into()));
        }
        Self::new(amplitudes.iter().map(|z| z / n).collect(), dims)
    }

    /// |a⟩ ⊗ |b⟩ (both normalized here).
    pub fn product(a: &[C64], b: &[C64]) -> Result<Self> {
        Self::normalized(crate::linalg::kron_vec(a, b), (a.len(), b.len()))
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    /// dA×dB matrix with entries ⟨st|ψ⟩.
    pub fn coefficient_matrix(&self) -> ComplexMatrix {
        let (da, db) = self.dims;
        ComplexMatrix::from_fn(da, db, |s, t| self.amplitudes[s * db + t])
    }

    pub fn from_coefficient_matrix(c: &ComplexMatrix) -> Result<Self> {
        Self::new(c.entries().to_vec(), c.shape())
    }

    pub fn density(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.amplitudes, &self.amplitudes)
    }
}

/// ψ = Σ_k coeffs_k |a_k⟩|b_k⟩ with the basis vectors as matrix columns.
#[derive(Clone, Debug)]
pub struct SchmidtDecomposition {
    pub coeffs: Vec<f64>,
    pub basis_a: ComplexMatrix,
    pub basis_b: ComplexMatrix,
}

impl SchmidtDecomposition {
    pub fn reconstruct(&self) -> Vec<C64> {
        let da = self.basis_a.rows();
        let db = self.basis_b.rows();
        let mut out = vec![ZERO; da * db];
        for (k, &c) in self.coeffs.iter().enumerate() {
            for s in 0..da {
                for t in 0..db {
                    out[s * db + t] += c * self.basis_a[(s, k)] * self.basis_b[(t, k)];
                }
            }
        }
        out
    }
}

pub fn schmidt_decompose(psi: &PureState) -> Result<SchmidtDecomposition> {
    let d = svd(&psi.coefficient_matrix())?;
    Ok(SchmidtDecomposition { coeffs: d.sigma, basis_a: d.u, basis_b: d.vdag.transpose() })
}

pub fn schmidt_number(psi: &PureState, tol: Tolerance) -> Result<usize> {
    rank_tol(&psi.coefficient_matrix(), tol)
}

/// Shannon entropy in bits of a probability vector.
pub fn shannon_bits(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum::<f64>().max(0.0)
}

/// Entanglement entropy in ebits.
pub fn entanglement_entropy(psi: &PureState) -> Result<f64> {
    let s = schmidt_decompose(psi)?;
    let probs: Vec<f64> = s.coeffs.iter().map(|c| c * c).collect();
    Ok(shannon_bits(&probs))
}

/// Schmidt-2 resource in canonical form `(localA·X ⊗ localB)|Φ⁺⟩` with
/// X = diag(√μ, √(1−μ)) and |Φ⁺⟩ = |00⟩ + |11⟩ unnormalized.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResourceState {
    pub state: PureState,
    pub mu: f64,
    pub local_a: ComplexMatrix,
    pub local_b: ComplexMatrix,
}

impl ResourceState {
    /// The canonical state √μ|00⟩ + √(1−μ)|11⟩.
    pub fn canonical(mu: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&mu) {
            return Err(Error::Domain(format!("mu = {mu} outside [1/2, 1]")));
        }
        let amps = vec![C64::new(mu.sqrt(), 0.0), ZERO, ZERO, C64::new((1.0 - mu).sqrt(), 0.0)];
        Ok(Self {
            state: PureState::new(amps, (2, 2))?,
            mu,
            local_a: ComplexMatrix::identity(2),
            local_b: ComplexMatrix::identity(2),
        })
    }

    /// X = diag(√μ, √(1−μ)).
    pub fn choi_matrix(&self) -> ComplexMatrix {
        choi_matrix(self.mu)
    }

    /// (localA·X ⊗ localB)|Φ⁺⟩
    pub fn rebuild(&self) -> Vec<C64> {
        let x = self.choi_matrix();
        let m = kron(&(&self.local_a * &x), &self.local_b);
        let phi = [ONE, ZERO, ZERO, ONE];
        m.matvec(&phi)
    }

    pub fn entropy(&self) -> f64 {
        shannon_bits(&[self.mu, 1.0 - self.mu])
    }
}

/// X = diag(√μ, √(1−μ)).
pub fn choi_matrix(mu: f64) -> ComplexMatrix {
    ComplexMatrix::diag_real(&[mu.sqrt(), (1.0 - mu).max(0.0).sqrt()])
}

pub fn canonical_resource(psi: &PureState) -> Result<ResourceState> {
    if psi.dims() != (2, 2) {
        return Err(Error::Shape(format!("resource dims {:?}, expected (2, 2)", psi.dims())));
    }
    let rank = schmidt_number(psi, Tolerance::default())?;
    if rank != 2 {
        return Err(Error::UnsupportedRank(rank));
    }
    let d = svd(&psi.coefficient_matrix())?;
    // ψ = Σ_k σ_k |u_k⟩ ⊗ |v_k*⟩; keep Alice's vectors phase-fixed and push
    // the remaining phase into Bob's dressing.
    let mut cols_a = Vec::new();
    let mut cols_b = Vec::new();
    for k in 0..2 {
        let u = d.u.column(k);
        let vb: Vec<C64> = d.vdag.row(k);
        let lead = u.iter().find(|z| z.norm() > 1e-12).copied().unwrap_or(ONE);
        let ph = lead / lead.norm();
        cols_a.push(u.iter().map(|z| z * ph.conj()).collect::<Vec<_>>());
        cols_b.push(vb.iter().map(|z| z * ph).collect::<Vec<_>>());
    }
    let mu = d.sigma[0] * d.sigma[0];
    Ok(ResourceState {
        state: psi.clone(),
        mu: mu.clamp(0.5, 1.0),
        local_a: ComplexMatrix::from_columns(&cols_a),
        local_b: ComplexMatrix::from_columns(&cols_b),
    })
}

/// Dressed controlled unitary `(v1⊗v2)·(|0⟩⟨0|⊗I + |1⟩⟨1|⊗u)·(w1⊗w2)` with
/// u = diag(1, e^{iθ}).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlledUnitary {
    pub theta: f64,
    pub v1: ComplexMatrix,
    pub v2: ComplexMatrix,
    pub w1: ComplexMatrix,
    pub w2: ComplexMatrix,
    pub u: ComplexMatrix,
}

impl ControlledUnitary {
    /// U_θ = diag(1, 1, 1, e^{iθ}) with trivial dressings.
    pub fn canonical(theta: f64) -> Self {
        let id = ComplexMatrix::identity(2);
        Self {
            theta,
            v1: id.clone(),
            v2: id.clone(),
            w1: id.clone(),
            w2: id,
            u: ComplexMatrix::diag(&[ONE, cis(theta)]),
        }
    }

    /// Full 4×4 matrix of the dressed gate.
    pub fn matrix(&self) -> ComplexMatrix {
        let core = controlled(&self.u);
        &(&kron(&self.v1, &self.v2) * &core) * &kron(&self.w1, &self.w2)
    }

    /// diag(1, 1, 1, e^{iθ})
    pub fn canonical_matrix(&self) -> ComplexMatrix {
        u_theta(self.theta)
    }

    /// The gate acts locally (θ ≈ 0).
    pub fn is_degenerate(&self, eps: f64) -> bool {
        (cis(self.theta) - ONE).norm() < eps
    }
}

/// diag(1, 1, 1, e^{iθ})
pub fn u_theta(theta: f64) -> ComplexMatrix {
    ComplexMatrix::diag(&[ONE, ONE, ONE, cis(theta)])
}

/// |0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ u
pub fn controlled(u: &ComplexMatrix) -> ComplexMatrix {
    let id = ComplexMatrix::identity(2);
    ComplexMatrix::block_diag(&[&id, u])
}

/// How a gate matrix is presented.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateForm {
    /// Block-diagonal in the computational basis of the first qubit.
    Raw,
    /// Arbitrary local dressing of a controlled gate.
    Dressed,
}

/// Gate file contents: a 4×4 matrix and how it is presented.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateFile {
    pub form: GateForm,
    pub matrix: ComplexMatrix,
}

/// Bring a controlled-type two-qubit gate to the form
/// `(v1⊗v2)·U_θ·(w1⊗w2)` with θ ∈ [0, π].
pub fn canonicalize_controlled_unitary(gate: &ComplexMatrix, form: GateForm) -> Result<ControlledUnitary> {
    if gate.shape() != (4, 4) {
        return Err(Error::Shape(format!("gate must be 4x4, got {:?}", gate.shape())));
    }
    if gate.isometry_defect() > 1e-8 {
        return Err(Error::Domain("gate is not unitary".into()));
    }
    let (control_in, control_out) = match form {
        GateForm::Raw => (ComplexMatrix::identity(2), ComplexMatrix::identity(2)),
        GateForm::Dressed => control_bases(gate)?,
    };
    // G' = (control_out† ⊗ I)·G·(control_in† ⊗ I) is block-diagonal: |k⟩⟨k| ⊗ P_k.
    let id = ComplexMatrix::identity(2);
    let g = &(&kron(&control_out.dagger(), &id) * gate) * &kron(&control_in.dagger(), &id);
    let off = g.submatrix(0, 2, 2, 2).max_abs().max(g.submatrix(2, 0, 2, 2).max_abs());
    if off > 1e-8 {
        return Err(Error::Shape("gate is not a controlled unitary in any product basis".into()));
    }
    let p0 = g.submatrix(0, 0, 2, 2);
    let p1 = g.submatrix(2, 2, 2, 2);
    let rel = &p0.dagger() * &p1;
    let (phases, vecs) = unitary_eigen(&rel)?;
    let (mut alpha, mut beta) = (phases[0], phases[1]);
    let mut w = vecs;
    let mut theta = wrap_phase(beta - alpha);
    if theta < 0.0 {
        std::mem::swap(&mut alpha, &mut beta);
        w = ComplexMatrix::from_columns(&[w.column(1), w.column(0)]);
        theta = -theta;
    }
    let _ = beta;
    // |0⟩⟨0|⊗I + |1⟩⟨1|⊗rel = (diag(1, e^{iα}) ⊗ W)·U_θ·(I ⊗ W†)
    Ok(ControlledUnitary {
        theta,
        v1: &control_out * &ComplexMatrix::diag(&[ONE, cis(alpha)]),
        v2: &p0 * &w,
        w1: control_in,
        w2: w.dagger(),
        u: ComplexMatrix::diag(&[ONE, cis(theta)]),
    })
}

/// Wrap a phase into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::PI;
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Eigenphases and eigenvectors of a 2×2 (or small) unitary.
fn unitary_eigen(u: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let herm = (u + &u.dagger()).scale_real(0.5);
    let anti = (u - &u.dagger()).scale(C64::new(0.0, -0.5));
    let mix = &herm + &anti.scale_real(0.577_215_664_901_532_9);
    let (_, vecs) = eigh(&mix)?;
    let mut pairs: Vec<(f64, Vec<C64>)> = (0..u.cols())
        .map(|k| {
            let mut v = vecs.column(k);
            let lead = v.iter().find(|z| z.norm() > 1e-12).copied().unwrap_or(ONE);
            let ph = lead / lead.norm();
            for z in v.iter_mut() {
                *z *= ph.conj();
            }
            let uv = u.matvec(&v);
            (crate::linalg::inner(&v, &uv).arg(), v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let phases = pairs.iter().map(|p| p.0).collect();
    let cols: Vec<Vec<C64>> = pairs.into_iter().map(|p| p.1).collect();
    Ok((phases, ComplexMatrix::from_columns(&cols)))
}

/// Find unitaries `(a, b)` such that `gate = Σ_k b|k⟩⟨k|a ⊗ P_k`, via the
/// operator-Schmidt span of the first tensor factor.
fn control_bases(gate: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    // realignment: R[(i1 j1), (i2 j2)] = G[(i1 i2), (j1 j2)]
    let r = ComplexMatrix::from_fn(4, 4, |row, col| {
        let (i1, j1) = (row / 2, row % 2);
        let (i2, j2) = (col / 2, col % 2);
        gate[(i1 * 2 + i2, j1 * 2 + j2)]
    });
    let d = svd(&r)?;
    let scale = d.sigma[0];
    let rank = d.sigma.iter().filter(|&&s| s > 1e-9 * scale).count();
    if rank == 1 {
        return Ok((ComplexMatrix::identity(2), ComplexMatrix::identity(2)));
    }
    if rank > 2 {
        return Err(Error::Shape(format!("operator Schmidt rank {rank}: not a controlled unitary")));
    }
    let op = |k: usize| ComplexMatrix::from_fn(2, 2, |i, j| d.u[(i * 2 + j, k)]);
    let (a1, a2) = (op(0), op(1));
    let g1 = &a1 + &a2.scale(C64::new(0.372_9, 0.127_3));
    let g2 = &a1 + &a2.scale(C64::new(-0.691_4, 0.411_2));
    let g1inv = g1.inverse()?;
    // g1⁻¹g2 = a† D a and g2 g1⁻¹ = b D b† share the eigenvalue order
    let (ev_in, vin) = eig2(&(&g1inv * &g2))?;
    let (ev_out, vout) = eig2(&(&g2 * &g1inv))?;
    let vout = if (ev_in[0] - ev_out[0]).norm() > (ev_in[0] - ev_out[1]).norm() {
        ComplexMatrix::from_columns(&[vout.column(1), vout.column(0)])
    } else {
        vout
    };
    let a = crate::linalg::nearest_isometry(&vin)?.dagger();
    let b = crate::linalg::nearest_isometry(&vout)?;
    Ok((a, b))
}

/// Eigen-decomposition of a diagonalizable 2×2 matrix (columns normalized).
pub fn eig2(m: &ComplexMatrix) -> Result<(Vec<C64>, ComplexMatrix)> {
    let (a, b, c, dd) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let tr = a + dd;
    let det = a * dd - b * c;
    let disc = (tr * tr - det * 4.0).sqrt();
    let l1 = (tr + disc) / 2.0;
    let l2 = (tr - disc) / 2.0;
    let vec_for = |l: C64| -> Vec<C64> {
        let v1 = vec![b, l - a];
        let v2 = vec![l - dd, c];
        let v = if norm(&v1) >= norm(&v2) { v1 } else { v2 };
        let n = norm(&v);
        if n < 1e-300 {
            return vec![ONE, ZERO];
        }
        v.iter().map(|z| z / n).collect()
    };
    let mut c1 = vec_for(l1);
    let mut c2 = vec_for(l2);
    if (l1 - l2).norm() < 1e-12 * (l1.norm() + l2.norm()).max(1e-300) && norm(&[b, c]) < 1e-12 {
        c1 = vec![ONE, ZERO];
        c2 = vec![ZERO, ONE];
    }
    Ok((vec![l1, l2], ComplexMatrix::from_columns(&[c1, c2])))
}
