use super::matrix::{inner, norm, ComplexMatrix, C64, ONE, ZERO};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `M = U·diag(sigma)·Vdag`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub sigma: Vec<f64>,
    pub vdag: ComplexMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let s = ComplexMatrix::diag_real(&self.sigma);
        &(&self.u * &s) * &self.vdag
    }
}

/// Singular value decomposition by one-sided Jacobi rotations.
///
/// `U` is m×k and `Vdag` is k×n with k = min(m, n). Each right singular
/// vector has its first nonzero entry real-positive; left vectors for zero
/// singular values are completed to an orthonormal set the same way.
pub fn svd(m: &ComplexMatrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::Domain("svd of non-finite matrix".into()));
    }
    if m.rows() < m.cols() {
        let t = svd(&m.dagger())?;
        return Ok(Svd { u: t.vdag.dagger(), sigma: t.sigma, vdag: t.u.dagger() });
    }
    let (rows, cols) = m.shape();
    let mut a: Vec<Vec<C64>> = m.columns();
    let mut v: Vec<Vec<C64>> = (0..cols).map(|j| super::matrix::basis(cols, j)).collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = a[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = a[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma = inner(&a[p], &a[q]);
                let g = gamma.norm();
                if g == 0.0 || g <= 1e-16 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut a, p, q, phase, c, s);
                rotate_pair(&mut v, p, q, phase, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = a.iter().map(|col| norm(col)).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let mut sigma = Vec::with_capacity(cols);
    let mut ucols: Vec<Vec<C64>> = Vec::with_capacity(cols);
    let mut vcols: Vec<Vec<C64>> = Vec::with_capacity(cols);
    let mut missing = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let mut vj = v[j].clone();
        let mut uj = a[j].clone();
        let ph = leading_phase(&vj);
        for z in vj.iter_mut().chain(uj.iter_mut()) {
            *z *= ph.conj();
        }
        let s = norms[j];
        if s > 0.0 && s > 1e-14 * scale {
            for z in uj.iter_mut() {
                *z /= s;
            }
            sigma.push(s);
        } else {
            sigma.push(0.0);
            missing.push(slot);
        }
        ucols.push(uj);
        vcols.push(vj);
    }
    if !missing.is_empty() {
        let known: Vec<Vec<C64>> =
            ucols.iter().enumerate().filter(|(i, _)| !missing.contains(i)).map(|(_, c)| c.clone()).collect();
        let extra = complete_orthonormal(&known, rows);
        for (slot, col) in missing.iter().zip(extra) {
            ucols[*slot] = col;
        }
    }
    Ok(Svd { u: ComplexMatrix::from_columns(&ucols), sigma, vdag: ComplexMatrix::from_columns(&vcols).dagger() })
}

fn rotate_pair(cols: &mut [Vec<C64>], p: usize, q: usize, phase: C64, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let yq = *y * phase.conj();
        let xp = *x;
        *x = xp * c - yq * s;
        *y = xp * s + yq * c;
    }
}

/// Unit-modulus phase of the first entry that is not negligible.
fn leading_phase(v: &[C64]) -> C64 {
    let scale = norm(v);
    for z in v {
        if z.norm() > 1e-12 * scale.max(1e-300) {
            return z / z.norm();
        }
    }
    ONE
}

/// Extend orthonormal `known` vectors to a basis of dimension `dim`, adding
/// standard basis directions in order; each new vector has its first
/// nonzero entry real-positive.
pub fn complete_orthonormal(known: &[Vec<C64>], dim: usize) -> Vec<Vec<C64>> {
    let mut basis: Vec<Vec<C64>> = known.to_vec();
    let mut extra = Vec::new();
    for k in 0..dim {
        if basis.len() >= dim {
            break;
        }
        let mut w = super::matrix::basis(dim, k);
        for _ in 0..2 {
            for b in &basis {
                let proj = inner(b, &w);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= proj * bi;
                }
            }
        }
        let n = norm(&w);
        if n > 1e-6 {
            let ph = leading_phase(&w);
            for z in w.iter_mut() {
                *z *= ph.conj() / n;
            }
            basis.push(w.clone());
            extra.push(w);
        }
    }
    extra
}

/// Polar decomposition `T = isometry·root` with `root = √(T†T)`.
pub fn polar_decompose(t: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if t.rows() < t.cols() {
        return Err(Error::Shape(format!("polar decomposition needs rows >= cols, got {}x{}", t.rows(), t.cols())));
    }
    let d = svd(t)?;
    let v = d.vdag.dagger();
    let root = &(&v * &ComplexMatrix::diag_real(&d.sigma)) * &d.vdag;
    let root = hermitize(&root);
    let iso = &d.u * &d.vdag;
    Ok((iso, root))
}

/// Nearest isometry (the unitary polar factor).
pub fn nearest_isometry(t: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(polar_decompose(t)?.0)
}

/// Tolerances for rank and equality decisions.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerance {
    pub eps_rank: f64,
    pub eps_eq: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { eps_rank: 1e-9, eps_eq: 1e-9 }
    }
}

impl Tolerance {
    pub fn new(eps_rank: f64, eps_eq: f64) -> Result<Self> {
        for (name, v) in [("eps_rank", eps_rank), ("eps_eq", eps_eq)] {
            if !(v > 0.0 && v <= 1e-6) {
                return Err(Error::Domain(format!("{name} = {v} outside (0, 1e-6]")));
            }
        }
        Ok(Self { eps_rank, eps_eq })
    }

    /// Same rank cutoff, looser equality budget (used for reduced protocols).
    pub fn with_eq(self, eps_eq: f64) -> Self {
        Self { eps_eq, ..self }
    }
}

/// Number of singular values above `eps_rank·max(1, σ_max)`.
pub fn rank_tol(m: &ComplexMatrix, tol: Tolerance) -> Result<usize> {
    let d = svd(m)?;
    let smax = d.sigma.first().copied().unwrap_or(0.0);
    let cut = tol.eps_rank * smax.max(1.0);
    Ok(d.sigma.iter().filter(|&&s| s > cut).count())
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
/// Eigenvalues ascending; eigenvectors are the columns of the returned matrix.
pub fn eigh(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !h.is_square() {
        return Err(Error::Shape("eigh needs a square matrix".into()));
    }
    if !h.is_finite() {
        return Err(Error::Domain("eigh of non-finite matrix".into()));
    }
    let n = h.rows();
    let mut a = hermitize(h);
    let mut v = ComplexMatrix::identity(n);
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)].norm_sqr())
            .sum();
        let total: f64 = a.entries().iter().map(|z| z.norm_sqr()).sum();
        if off <= 1e-32 * total.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let b = a[(p, q)];
                let bn = b.norm();
                if bn == 0.0 {
                    continue;
                }
                let phase = b / bn;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * bn);
                let t = if tau == 0.0 { 1.0 } else { tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt()) };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                // J = diag(1, conj(phase)) · [[c, s], [-s, c]] on the (p, q) plane
                let j_pp = C64::new(c, 0.0);
                let j_pq = C64::new(s, 0.0);
                let j_qp = -phase.conj() * s;
                let j_qq = phase.conj() * c;
                for r in 0..n {
                    let (x, y) = (a[(r, p)], a[(r, q)]);
                    a[(r, p)] = x * j_pp + y * j_qp;
                    a[(r, q)] = x * j_pq + y * j_qq;
                    let (x, y) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = x * j_pp + y * j_qp;
                    v[(r, q)] = x * j_pq + y * j_qq;
                }
                for c2 in 0..n {
                    let (x, y) = (a[(p, c2)], a[(q, c2)]);
                    a[(p, c2)] = j_pp.conj() * x + j_qp.conj() * y;
                    a[(q, c2)] = j_pq.conj() * x + j_qq.conj() * y;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
    let vals = order.iter().map(|&i| a[(i, i)].re).collect();
    let cols: Vec<Vec<C64>> = order.iter().map(|&i| v.column(i)).collect();
    Ok((vals, ComplexMatrix::from_columns(&cols)))
}

/// (H + H†)/2
pub fn hermitize(h: &ComplexMatrix) -> ComplexMatrix {
    (h + &h.dagger()).scale_real(0.5)
}

/// Principal square root of a positive semidefinite matrix; eigenvalues
/// below `cut·λ_max` are set to zero.
pub fn sqrt_psd(h: &ComplexMatrix, cut: f64) -> Result<ComplexMatrix> {
    let (vals, v) = eigh(h)?;
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let roots: Vec<f64> = vals.iter().map(|&x| if x > cut * top { x.sqrt() } else { 0.0 }).collect();
    Ok(hermitize(&(&(&v * &ComplexMatrix::diag_real(&roots)) * &v.dagger())))
}

/// √(F†F) computed from the SVD of F, which keeps rank-deficient factors
/// exactly rank-deficient.
pub fn gram_root(f: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d = svd(f)?;
    let v = d.vdag.dagger();
    let k = d.sigma.len();
    let n = f.cols();
    let mut root = ComplexMatrix::zeros(n, n);
    for j in 0..k {
        let col = v.column(j);
        root = &root + &ComplexMatrix::outer(&col, &col).scale_real(d.sigma[j]);
    }
    Ok(hermitize(&root))
}

/// Moore–Penrose pseudo-inverse with relative cutoff.
pub fn pinv(m: &ComplexMatrix, cut: f64) -> Result<ComplexMatrix> {
    let d = svd(m)?;
    let smax = d.sigma.first().copied().unwrap_or(0.0);
    let inv: Vec<f64> = d.sigma.iter().map(|&s| if s > cut * smax.max(1e-300) { 1.0 / s } else { 0.0 }).collect();
    Ok(&(&d.vdag.dagger() * &ComplexMatrix::diag_real(&inv)) * &d.u.dagger())
}

/// Which tensor factor to keep in a partial trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// Partial trace of an operator on C^{dA} ⊗ C^{dB}.
pub fn partial_trace(m: &ComplexMatrix, dims: (usize, usize), keep: Side) -> Result<ComplexMatrix> {
    let (da, db) = dims;
    if !m.is_square() || m.rows() != da * db {
        return Err(Error::Shape(format!("partial trace of {}x{} over dims ({da}, {db})", m.rows(), m.cols())));
    }
    Ok(match keep {
        Side::A => ComplexMatrix::from_fn(da, da, |i, j| (0..db).map(|k| m[(i * db + k, j * db + k)]).sum()),
        Side::B => ComplexMatrix::from_fn(db, db, |i, j| (0..da).map(|k| m[(k * db + i, k * db + j)]).sum()),
    })
}
