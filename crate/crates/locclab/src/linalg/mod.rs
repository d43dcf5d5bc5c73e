//! Dense complex linear algebra for small matrices.

mod decomp;
mod matrix;

pub use decomp::{
    complete_orthonormal, eigh, gram_root, hermitize, nearest_isometry, partial_trace, pinv, polar_decompose, rank_tol,
    sqrt_psd, svd, Side, Svd, Tolerance,
};
pub use matrix::{basis, cis, inner, kron_vec, norm, ComplexMatrix, C64, I, ONE, ZERO};

/// Kronecker product `a ⊗ b` (Alice factor first).
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kron(b)
}

/// Pauli X.
pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::real(&[&[0.0, 1.0], &[1.0, 0.0]])
}

/// Pauli Z.
pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::real(&[&[1.0, 0.0], &[0.0, -1.0]])
}

pub fn hadamard() -> ComplexMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::real(&[&[h, h], &[h, -h]])
}

/// |k⟩⟨k| on dimension `dim`.
pub fn projector(dim: usize, k: usize) -> ComplexMatrix {
    let v = basis(dim, k);
    ComplexMatrix::outer(&v, &v)
}

/// (I_keep ⊗ ⟨t|) mapping C^{keep·dim_t} to C^{keep}.
pub fn discard_row(keep: usize, dim_t: usize, t: usize) -> ComplexMatrix {
    let bra = ComplexMatrix::row_vector(&basis(dim_t, t));
    ComplexMatrix::identity(keep).kron(&bra)
}

/// Haar-random unitary from a seeded generator (QR of a Ginibre matrix via Gram–Schmidt).
pub fn random_unitary<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let g = random_gaussian(n, n, rng);
    orthonormalize_columns(&g)
}

/// Matrix with independent standard complex Gaussian entries.
pub fn random_gaussian<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| C64::new(gaussian(rng), gaussian(rng)))
}

fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box–Muller
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Modified Gram–Schmidt on the columns (rows >= cols, full column rank).
pub fn orthonormalize_columns(m: &ComplexMatrix) -> ComplexMatrix {
    let mut cols = m.columns();
    for j in 0..cols.len() {
        for _ in 0..2 {
            for k in 0..j {
                let proj = inner(&cols[k], &cols[j]);
                let ck = cols[k].clone();
                for (x, y) in cols[j].iter_mut().zip(&ck) {
                    *x -= proj * y;
                }
            }
        }
        let n = norm(&cols[j]);
        for x in cols[j].iter_mut() {
            *x /= n;
        }
    }
    ComplexMatrix::from_columns(&cols)
}

/// Haar-random isometry C^cols → C^rows.
pub fn random_isometry<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    orthonormalize_columns(&random_gaussian(rows, cols, rng))
}
