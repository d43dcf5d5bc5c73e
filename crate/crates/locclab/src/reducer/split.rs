use crate::error::{Error, Result};
use crate::linalg::{complete_orthonormal, pinv, sqrt_psd, svd, ComplexMatrix, Tolerance, ONE, ZERO};

/// Measurement `{M_i}` with `(M_i·T)†(M_i·T) = grams[i]`, complete on the
/// range of `T` and completed off it by projections onto a canonical basis of
/// the complement, grouped `t.cols()` rows at a time.
pub fn split_measurement(t: &ComplexMatrix, grams: &[ComplexMatrix], tol: Tolerance) -> Result<Vec<ComplexMatrix>> {
    let target = &t.dagger() * t;
    let mut sum = ComplexMatrix::zeros(t.cols(), t.cols());
    for g in grams {
        if g.shape() != target.shape() {
            return Err(Error::Shape(format!("gram {:?} against T†T {:?}", g.shape(), target.shape())));
        }
        sum = &sum + g;
    }
    let scale = target.max_abs().max(1.0);
    let defect = sum.max_abs_diff(&target);
    if defect > tol.eps_eq.max(1e-12) * 10.0 * scale {
        return Err(Error::InvariantViolation(format!("grams do not sum to T†T (defect {defect:e})")));
    }
    let t_plus = pinv(t, tol.eps_rank)?;
    let mut ops = Vec::with_capacity(grams.len() + 1);
    for g in grams {
        ops.push(&sqrt_psd(g, tol.eps_rank)? * &t_plus);
    }
    ops.extend(off_support(t, t.cols(), tol)?);
    Ok(ops)
}

/// Operators `Y_i·T⁺` reproducing `Y_i` on the range of `T`, plus the
/// off-support completion. Returns the operators, the number of completion
/// outcomes, and the relative defect of `Σ Y_i†Y_i = T†T`.
pub(crate) fn realize(
    t: &ComplexMatrix,
    targets: &[ComplexMatrix],
    out_dim: usize,
    tol: Tolerance,
) -> Result<(Vec<ComplexMatrix>, usize, f64)> {
    let gram = &t.dagger() * t;
    let mut sum = ComplexMatrix::zeros(t.cols(), t.cols());
    for y in targets {
        sum = &sum + &(&y.dagger() * y);
    }
    let defect = sum.max_abs_diff(&gram) / gram.max_abs().max(1e-300);
    let t_plus = pinv(t, tol.eps_rank)?;
    let mut ops: Vec<ComplexMatrix> = targets.iter().map(|y| y * &t_plus).collect();
    let extra = off_support(t, out_dim, tol)?;
    let n_extra = extra.len();
    ops.extend(extra);
    Ok((ops, n_extra, defect))
}

/// Projections onto the orthogonal complement of range(T), `out_dim` basis
/// vectors per operator.
pub(crate) fn off_support(t: &ComplexMatrix, out_dim: usize, tol: Tolerance) -> Result<Vec<ComplexMatrix>> {
    let d = svd(t)?;
    let smax = d.sigma.first().copied().unwrap_or(0.0);
    let range: Vec<_> =
        (0..d.sigma.len()).filter(|&j| d.sigma[j] > tol.eps_rank * smax.max(1e-300)).map(|j| d.u.column(j)).collect();
    let complement = complete_orthonormal(&range, t.rows());
    Ok(complement
        .chunks(out_dim)
        .map(|chunk| ComplexMatrix::from_fn(out_dim, t.rows(), |r, c| chunk.get(r).map_or(ZERO, |v| v[c].conj())))
        .collect())
}

/// Operators summing to the identity on a `dim`-dimensional register that
/// each keep `out` of its basis directions.
pub(crate) fn discard_to(dim: usize, out: usize) -> Vec<ComplexMatrix> {
    (0..dim.div_ceil(out))
        .map(|c| ComplexMatrix::from_fn(out, dim, |r, col| if c * out + r == col { ONE } else { ZERO }))
        .collect()
}
