use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{rank_tol, sqrt_psd, svd, ComplexMatrix, Tolerance};
use crate::protocol::{History, LoccProtocol};
use crate::verifier::extract_block_vectors;

/// Square roots of the diagonal Gram blocks of both accumulated operators
/// three turns before the end.
#[derive(Clone, Debug, Serialize)]
pub struct BlockElements {
    pub history: History,
    pub a00: ComplexMatrix,
    pub a11: ComplexMatrix,
    pub b00: ComplexMatrix,
    pub b11: ComplexMatrix,
    /// Ranks of a00, a11, b00, b11.
    pub ranks: [usize; 4],
    /// Largest difference from the same blocks summed over branch vectors.
    pub summation_residual: f64,
    /// Smallest nonzero singular value sits within 1e3 of the rank cutoff.
    pub near_threshold: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    A,
    B,
    C,
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Case::A => "a",
            Case::B => "b",
            Case::C => "c",
        })
    }
}

/// Diagonal 2×2 blocks of `op†op` and the largest off-diagonal block entry.
pub(crate) fn gram_blocks(op: &ComplexMatrix) -> ([ComplexMatrix; 2], f64) {
    let g = &op.dagger() * op;
    let d = g.cols() / 2;
    let off = g.submatrix(0, d, d, d).max_abs();
    ([g.submatrix(0, 0, d, d), g.submatrix(d, d, d, d)], off)
}

fn psd_rank(m: &ComplexMatrix, tol: Tolerance) -> Result<(usize, bool)> {
    let r = rank_tol(m, tol)?;
    let s = svd(m)?.sigma;
    let cut = tol.eps_rank * s[0].max(1.0);
    let near = s.iter().any(|&x| x > cut && x < 1e3 * cut);
    Ok((r, near))
}

/// Block elements for every history three turns before the end of a
/// protocol in reduction form (alternating, Bob last, final registers are the
/// input qubits). Histories whose accumulated operators vanish are skipped.
pub fn compute_block_elements(p: &LoccProtocol, tol: Tolerance) -> Result<Vec<BlockElements>> {
    let n = p.turn_count();
    if n < 3 {
        return Err(Error::Structural(format!("{n} turns, block elements need at least 3")));
    }
    let mut out = Vec::new();
    for h in p.turns[n - 3].instruments.keys() {
        if let Some(b) = block_elements_at(p, h, tol)? {
            out.push(b);
        }
    }
    Ok(out)
}

pub(crate) fn block_elements_at(p: &LoccProtocol, h: &History, tol: Tolerance) -> Result<Option<BlockElements>> {
    let n = p.turn_count();
    let (pa, qb) = p.accumulated_at(h)?;
    let Some(mut blocks) = blocks_from_operators(h, &pa, &qb, tol)? else {
        return Ok(None);
    };
    let scale = pa.max_abs().max(qb.max_abs());
    let ga = [&blocks.a00 * &blocks.a00, &blocks.a11 * &blocks.a11];
    let gb = [&blocks.b00 * &blocks.b00, &blocks.b11 * &blocks.b11];

    // Same blocks summed over branch vectors: Alice's over her last outcomes
    // for a fixed Bob outcome, Bob's over his outcomes for a fixed Alice one.
    let bob1 = &p.turns[n - 3].instruments[h];
    let mut sum_a = [ComplexMatrix::zeros(2, 2), ComplexMatrix::zeros(2, 2)];
    let mut sum_b = [ComplexMatrix::zeros(2, 2), ComplexMatrix::zeros(2, 2)];
    for s in 0..bob1.operators.len() {
        let hs = [h.as_slice(), &[s]].concat();
        let alice = &p.turns[n - 2].instruments[&hs];
        for t in 0..alice.operators.len() {
            let ht = [hs.as_slice(), &[t]].concat();
            let bob2 = &p.turns[n - 1].instruments[&ht];
            for u in 0..bob2.operators.len() {
                let hu = [ht.as_slice(), &[u]].concat();
                let (a, b) = p.accumulated_at(&hu)?;
                let bv = extract_block_vectors(&a, &b)?;
                if s == 0 && u == 0 {
                    for (k, acc) in sum_a.iter_mut().enumerate() {
                        *acc = &*acc + &ComplexMatrix::outer(&bv.a[k][k], &bv.a[k][k]);
                    }
                }
                if t == 0 {
                    for (l, acc) in sum_b.iter_mut().enumerate() {
                        *acc = &*acc + &ComplexMatrix::outer(&bv.b[l][l], &bv.b[l][l]);
                    }
                }
            }
        }
    }
    let mut summation_residual: f64 = 0.0;
    for (g, direct) in ga.iter().chain(&gb).zip(sum_a.iter().chain(&sum_b)) {
        summation_residual = summation_residual.max(g.max_abs_diff(direct) / scale.powi(2).max(1e-300));
    }
    blocks.summation_residual = summation_residual;
    Ok(Some(blocks))
}

/// Block elements straight from a pair of accumulated operators; `None` when
/// either operator vanishes.
pub(crate) fn blocks_from_operators(
    h: &History,
    pa: &ComplexMatrix,
    qb: &ComplexMatrix,
    tol: Tolerance,
) -> Result<Option<BlockElements>> {
    if pa.cols() != 4 || qb.cols() != 4 {
        return Err(Error::Shape("block elements need qubit resources".into()));
    }
    if pa.max_abs() < tol.eps_eq || qb.max_abs() < tol.eps_eq {
        return Ok(None);
    }
    let ([ga0, ga1], off_a) = gram_blocks(pa);
    let ([gb0, gb1], off_b) = gram_blocks(qb);
    let gscale = (&pa.dagger() * pa).max_abs().max((&qb.dagger() * qb).max_abs());
    if off_a.max(off_b) > 1e3 * tol.eps_eq.max(1e-12) * gscale.max(1.0) {
        return Err(Error::NotVerified(format!(
            "accumulated operators at {h:?} mix the inputs (off-diagonal Gram {:e})",
            off_a.max(off_b)
        )));
    }
    let cut = tol.eps_rank * tol.eps_rank;
    let (a00, a11, b00, b11) = (sqrt_psd(&ga0, cut)?, sqrt_psd(&ga1, cut)?, sqrt_psd(&gb0, cut)?, sqrt_psd(&gb1, cut)?);
    let mut ranks = [0; 4];
    let mut near_threshold = false;
    for (i, m) in [&a00, &a11, &b00, &b11].into_iter().enumerate() {
        let (r, near) = psd_rank(m, tol)?;
        ranks[i] = r;
        near_threshold |= near;
    }
    Ok(Some(BlockElements { history: h.clone(), a00, a11, b00, b11, ranks, summation_residual: 0.0, near_threshold }))
}

/// Case of a history from the ranks of its block elements.
pub fn classify_case(blocks: &BlockElements) -> Result<Case> {
    let [ra0, ra1, rb0, rb1] = blocks.ranks;
    if ra0 != ra1 {
        return Err(Error::InvariantViolation(format!(
            "rank A00 = {ra0} but rank A11 = {ra1} at {:?}",
            blocks.history
        )));
    }
    match ra0 {
        1 => Ok(Case::A),
        2 if rb0 != rb1 => {
            Err(Error::InvariantViolation(format!("rank B00 = {rb0} but rank B11 = {rb1} at {:?}", blocks.history)))
        }
        2 if rb0 == 1 => Ok(Case::B),
        2 if rb0 == 2 => Ok(Case::C),
        r => Err(Error::InvariantViolation(format!("block rank {r} at {:?}", blocks.history))),
    }
}
