//! Deterministic-implementation check against a controlled-unitary target.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{inner, norm, rank_tol, svd, ComplexMatrix, Tolerance, C64, ZERO};
use crate::protocol::{History, LoccProtocol, Violation};
use crate::states::ControlledUnitary;

#[derive(Clone, Debug, Serialize)]
pub struct BranchFit {
    pub outcomes: History,
    pub leftover: (usize, usize),
    pub c: C64,
    pub deviation: f64,
}

/// The unnormalized vectors with `A = Σ_{k,i} |k⟩⟨i| ⊗ ⟨a_ki|`, indexed `[k][i]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockVectors {
    pub a: [[Vec<C64>; 2]; 2],
    pub b: [[Vec<C64>; 2]; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub pass: bool,
    pub branches: Vec<BranchFit>,
    pub prob_sum: f64,
    pub block_vectors: Vec<BlockVectors>,
    pub max_deviation: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Also test the four product superpositions |±⟩|±⟩.
    pub superposition_inputs: bool,
}

pub fn verify(p: &LoccProtocol, target: &ControlledUnitary, tol: Tolerance) -> Result<VerificationReport> {
    verify_with(p, target, tol, VerifyOptions::default())
}

pub fn verify_with(
    p: &LoccProtocol,
    target: &ControlledUnitary,
    tol: Tolerance,
    opts: VerifyOptions,
) -> Result<VerificationReport> {
    for v in p.validate(tol)? {
        if let Violation::InputDimension { .. }
        | Violation::OutputDimension { .. }
        | Violation::EmptyInstrument { .. } = v
        {
            return Err(Error::Shape(format!("protocol has inconsistent shapes: {v:?}")));
        }
    }
    let u = target.matrix();
    let probes = if opts.superposition_inputs { superposition_probes() } else { Vec::new() };
    let mut branches = Vec::new();
    let mut block_vectors = Vec::new();
    for br in p.effective_branches() {
        if br.kraus.rows() != 4 {
            return Err(Error::Shape(format!("branch {:?} does not end on two qubits", br.outcomes)));
        }
        let (c, mut deviation) = fit_branch(&br.kraus, &u);
        for v in &probes {
            let got = br.kraus.matvec(v);
            let want = u.matvec(v);
            let diff: Vec<C64> = got.iter().zip(&want).map(|(g, w)| g - c * w).collect();
            deviation = deviation.max(norm(&diff));
        }
        block_vectors.push(extract_block_vectors(&br.a, &br.b)?);
        branches.push(BranchFit { outcomes: br.outcomes, leftover: br.leftover, c, deviation });
    }
    let prob_sum = branches.iter().map(|b| b.c.norm_sqr()).sum::<f64>();
    let max_deviation = branches.iter().map(|b| b.deviation).fold(0.0, f64::max);
    let pass = max_deviation <= tol.eps_eq && (prob_sum - 1.0).abs() <= tol.eps_eq;
    Ok(VerificationReport { pass, branches, prob_sum, block_vectors, max_deviation })
}

/// Least-squares `c` minimizing ‖K − c·U‖_F over the four basis columns, with
/// the residual norm.
pub fn fit_branch(kraus: &ComplexMatrix, u: &ComplexMatrix) -> (C64, f64) {
    let (mut num, mut den) = (ZERO, 0.0);
    for col in 0..4 {
        let uc = u.column(col);
        num += inner(&uc, &kraus.column(col));
        den += norm(&uc).powi(2);
    }
    let c = num / den;
    let resid = (kraus - &u.scale(c)).frobenius_norm();
    (c, resid)
}

/// Fit `c` using only the listed basis columns (for input-independence checks).
pub fn fit_on_inputs(kraus: &ComplexMatrix, u: &ComplexMatrix, inputs: &[usize]) -> C64 {
    let (mut num, mut den) = (ZERO, 0.0);
    for &col in inputs {
        let uc = u.column(col);
        num += inner(&uc, &kraus.column(col));
        den += norm(&uc).powi(2);
    }
    num / den
}

fn superposition_probes() -> Vec<Vec<C64>> {
    let mut out = Vec::new();
    for sa in [1.0, -1.0] {
        for sb in [1.0, -1.0] {
            let a = [C64::new(1.0, 0.0), C64::new(sa, 0.0)];
            let b = [C64::new(1.0, 0.0), C64::new(sb, 0.0)];
            out.push(crate::linalg::kron_vec(&a, &b).iter().map(|z| z * 0.5).collect());
        }
    }
    out
}

/// Read off the block vectors of 2×(2·d) operators.
pub fn extract_block_vectors(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<BlockVectors> {
    Ok(BlockVectors { a: blocks_of(a)?, b: blocks_of(b)? })
}

fn blocks_of(m: &ComplexMatrix) -> Result<[[Vec<C64>; 2]; 2]> {
    if m.rows() != 2 || !m.cols().is_multiple_of(2) || m.cols() == 0 {
        return Err(Error::Shape(format!("block extraction needs a 2×2d operator, got {:?}", m.shape())));
    }
    let d = m.cols() / 2;
    let vec_of = |k: usize, i: usize| -> Vec<C64> { (0..d).map(|s| m[(k, i * d + s)].conj()).collect() };
    Ok([[vec_of(0, 0), vec_of(0, 1)], [vec_of(1, 0), vec_of(1, 1)]])
}

/// Inverse of [`extract_block_vectors`] for one side.
pub fn rebuild_from_blocks(blocks: &[[Vec<C64>; 2]; 2]) -> ComplexMatrix {
    let d = blocks[0][0].len();
    ComplexMatrix::from_fn(2, 2 * d, |k, col| blocks[k][col / d][col % d].conj())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockViolation {
    /// ⟨a_ki|Ψ|b*_lj⟩ differs from c·⟨kl|U|ij⟩.
    Overlap {
        branch: usize,
        k: usize,
        l: usize,
        i: usize,
        j: usize,
        error: f64,
    },
    NonzeroOffDiagonal {
        branch: usize,
        side: char,
        k: usize,
        i: usize,
        norm: f64,
    },
    Dependent {
        branch: usize,
        side: char,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockCheck {
    pub violations: Vec<BlockViolation>,
    /// Target is (numerically) the identity; independence checks skipped.
    pub degenerate: bool,
}

/// Check the block-vector consequences of a passing report. `psi` is the
/// resource coefficient matrix, `|r⟩ = Σ ψ[s,t] |s⟩|t⟩`.
pub fn check_block_conditions(
    report: &VerificationReport,
    psi: &ComplexMatrix,
    target: &ControlledUnitary,
    tol: Tolerance,
) -> BlockCheck {
    let u = target.matrix();
    let degenerate = target.is_degenerate(tol.eps_rank);
    let diagonal = (0..4).all(|r| (0..4).all(|c| r == c || u[(r, c)].norm() < tol.eps_eq));
    let full_rank =
        rank_tol(psi, tol).map(|r| r == psi.rows().min(psi.cols())).unwrap_or(false) && psi.rows() == psi.cols();
    let smin = svd(psi).map(|d| d.sigma.last().copied().unwrap_or(0.0)).unwrap_or(0.0);
    let zero_cut = 10.0 * tol.eps_eq / smin.max(tol.eps_rank);
    let mut violations = Vec::new();
    for (idx, (fit, bv)) in report.branches.iter().zip(&report.block_vectors).enumerate() {
        for k in 0..2 {
            for l in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        let bconj: Vec<C64> = bv.b[l][j].iter().map(|z| z.conj()).collect();
                        let lhs = inner(&bv.a[k][i], &psi.matvec(&bconj));
                        let rhs = fit.c * u[(2 * k + l, 2 * i + j)];
                        let error = (lhs - rhs).norm();
                        if error > 10.0 * tol.eps_eq {
                            violations.push(BlockViolation::Overlap { branch: idx, k, l, i, j, error });
                        }
                    }
                }
            }
        }
        if diagonal && full_rank && !degenerate {
            for (side, blocks) in [('a', &bv.a), ('b', &bv.b)] {
                for (k, i) in [(0, 1), (1, 0)] {
                    let n = norm(&blocks[k][i]);
                    if n > zero_cut {
                        violations.push(BlockViolation::NonzeroOffDiagonal { branch: idx, side, k, i, norm: n });
                    }
                }
            }
        }
        if !degenerate && fit.c.norm() > tol.eps_eq {
            for (side, blocks) in [('a', &bv.a), ('b', &bv.b)] {
                let pair = ComplexMatrix::from_columns(&[blocks[0][0].clone(), blocks[1][1].clone()]);
                let independent = rank_tol(&pair, tol).map(|r| r == 2).unwrap_or(false);
                if !independent {
                    violations.push(BlockViolation::Dependent { branch: idx, side });
                }
            }
        }
    }
    BlockCheck { violations, degenerate }
}

/// A verified implementation of a non-trivial gate needs at least three turns.
pub fn min_turns_check(p: &LoccProtocol, target: &ControlledUnitary, tol: Tolerance) -> Result<()> {
    if target.is_degenerate(tol.eps_rank) {
        return Ok(());
    }
    let report = verify(p, target, tol)?;
    if report.pass && p.turn_count() < 3 {
        return Err(Error::InvariantViolation(format!(
            "a {}-turn protocol verified for a non-trivial gate",
            p.turn_count()
        )));
    }
    Ok(())
}
