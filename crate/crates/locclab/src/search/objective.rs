use crate::error::Result;
use crate::linalg::{ComplexMatrix, C64};

use super::ansatz::ProtocolAnsatz;

/// `|K⟩⟩ = (K ⊗ I)|Φ⟩` with `|Φ⟩ = Σ_i |i⟩|i⟩`, row-major in (output, reference).
fn vectorize(k: &ComplexMatrix) -> Vec<C64> {
    let (rows, cols) = k.shape();
    let mut v = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            v.push(k[(r, c)]);
        }
    }
    v
}

/// Normalized Choi matrix `(1/d) Σ_k |K_k⟩⟩⟨⟨K_k|` of a channel on `d` dimensions.
pub fn choi_of_kraus(kraus: &[ComplexMatrix]) -> ComplexMatrix {
    let d = kraus.first().map_or(1, |k| k.cols());
    let mut j = ComplexMatrix::zeros(d * d, d * d);
    for k in kraus {
        let v = vectorize(k);
        j = &j + &ComplexMatrix::outer(&v, &v);
    }
    j.scale_real(1.0 / d as f64)
}

/// `Tr(J_Φ J_U)` between a channel's Choi matrix and that of conjugation by `u`.
pub fn process_fidelity(choi: &ComplexMatrix, u: &ComplexMatrix) -> f64 {
    let v = vectorize(u);
    let d = u.cols() as f64;
    let jv = choi.matvec(&v);
    let overlap: C64 = v.iter().zip(&jv).map(|(a, b)| a.conj() * b).sum();
    overlap.re / d
}

/// `1 − F` between the realized channel and conjugation by `target`.
pub fn objective(ansatz: &ProtocolAnsatz, params: &[f64], target: &ComplexMatrix) -> Result<f64> {
    let r = ansatz.realize(params, target)?;
    let kraus: Vec<ComplexMatrix> = r.kraus.into_iter().flatten().collect();
    let f = process_fidelity(&choi_of_kraus(&kraus), target);
    Ok((1.0 - f).clamp(0.0, 1.0))
}
