use serde::Serialize;

use super::blocks::{BlockElements, Case};
use super::split::{discard_to, realize};
use crate::error::{Error, Result};
use crate::linalg::{
    cis, eigh, hadamard, inner, nearest_isometry, norm, svd, ComplexMatrix, Tolerance, C64, ONE, ZERO,
};
use crate::protocol::{History, LoccProtocol};
use crate::verifier::extract_block_vectors;

/// Replacement for the last three turns below one history: Alice, Bob, Alice.
#[derive(Clone, Debug)]
pub(crate) struct Tail {
    pub first: Vec<ComplexMatrix>,
    pub second: Vec<Vec<ComplexMatrix>>,
    pub third: Vec<Vec<Vec<ComplexMatrix>>>,
}

impl Tail {
    fn finish_with_identity(first: Vec<ComplexMatrix>, second: Vec<Vec<ComplexMatrix>>) -> Self {
        let third = second.iter().map(|ops| vec![vec![ComplexMatrix::identity(2)]; ops.len()]).collect();
        Self { first, second, third }
    }
}

/// Intermediate quantities of one history's reduction.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ReductionWorkspace {
    pub history: History,
    pub case: Option<Case>,
    /// Outcome probabilities of the simulated random unitary (cases a, b).
    pub probabilities: Vec<f64>,
    /// Squared larger singular value of A11·A00⁻¹.
    pub lambda: Option<f64>,
    /// Squared larger singular value of B11·B00⁻¹.
    pub mu: Option<f64>,
    pub delta: Option<f64>,
    pub delta_prime: Option<f64>,
    /// Alice's splitting phases.
    pub phases: Option<[f64; 2]>,
    /// Largest |σ₁σ₂ − 1| over both block ratios.
    pub det_residual: f64,
    /// |μ + e^{−iδ′} − e^{iθ}(1 + μe^{−iδ′})|
    pub delta_prime_residual: Option<f64>,
    /// |e^{−iδ} − (λ − e^{−iθ})/(λe^{−iθ} − 1)|
    pub delta_residual: Option<f64>,
    /// For unitary A11·A00⁻¹: max(|e₀ − f₁|, |e₁ − f₀|) of the two
    /// simultaneously diagonal block functionals.
    pub eigen_swap_residual: Option<f64>,
    /// Largest relative defect met while building the replacement turns.
    pub construction_residual: f64,
    pub completion_outcomes: usize,
}

pub(crate) struct Context<'a> {
    pub p: &'a LoccProtocol,
    pub history: &'a History,
    pub pa: ComplexMatrix,
    pub qb: ComplexMatrix,
    pub psi: ComplexMatrix,
    pub theta: f64,
    pub tol: Tolerance,
}

fn ext(h: &[usize], tail: &[usize]) -> History {
    [h, tail].concat()
}

impl Context<'_> {
    /// Operators of turn `k` (counted from the end, 1 = last) below `suffix`.
    fn ops(&self, from_end: usize, suffix: &[usize]) -> &[ComplexMatrix] {
        let n = self.p.turn_count();
        &self.p.turns[n - from_end].instruments[&ext(self.history, suffix)].operators
    }
}

fn rel_gram_defect(x: &ComplexMatrix, y: &ComplexMatrix, scale: f64) -> f64 {
    (&x.dagger() * x).max_abs_diff(&(&y.dagger() * y)) / (&y.dagger() * y).max_abs().max(1e-300) * scale
}

fn probability(part: &ComplexMatrix, whole: &ComplexMatrix) -> f64 {
    part.frobenius_norm().powi(2) / whole.frobenius_norm().powi(2)
}

/// Nothing reaches this history: any complete operations will do.
pub(crate) fn tail_null(pa_rows: usize, qb_rows: usize) -> Tail {
    let first = discard_to(pa_rows, 2);
    let second = vec![discard_to(qb_rows, 2); first.len()];
    Tail::finish_with_identity(first, second)
}

/// Alice's last measurement is a random unitary; its choice moves into Bob's
/// preceding turn.
pub(crate) fn tail_a(cx: &Context) -> Result<(Tail, ReductionWorkspace)> {
    let mut ws = ReductionWorkspace { history: cx.history.clone(), case: Some(Case::A), ..Default::default() };
    let mut bob = Vec::new();
    let mut finals = Vec::new();
    let kick = cx.ops(3, &[]);
    for (s, ks) in kick.iter().enumerate() {
        let mut total = 0.0;
        for (t, m) in cx.ops(2, &[s]).iter().enumerate() {
            let at = m * &cx.pa;
            let pt = probability(&at, &cx.pa);
            total += pt;
            if pt < cx.tol.eps_eq * cx.tol.eps_eq {
                continue;
            }
            ws.probabilities.push(pt);
            let scaled = at.scale_real(1.0 / pt.sqrt());
            ws.construction_residual = ws.construction_residual.max(rel_gram_defect(&scaled, &cx.pa, 1.0));
            let (unitary, extra, defect) = realize(&cx.pa, &[scaled], 2, cx.tol)?;
            ws.construction_residual = ws.construction_residual.max(defect);
            ws.completion_outcomes += extra;
            for ku in cx.ops(1, &[s, t]) {
                bob.push((ku * ks).scale_real(pt.sqrt()));
                finals.push(unitary.clone());
            }
        }
        ws.construction_residual = ws.construction_residual.max((total - 1.0).abs());
    }
    let tail = Tail { first: vec![ComplexMatrix::identity(cx.pa.rows())], second: vec![bob], third: vec![finals] };
    Ok((tail, ws))
}

/// Bob's first measurement of the three is a random unitary; its choice
/// moves into Alice's following turn, which now goes first.
pub(crate) fn tail_b(cx: &Context) -> Result<(Tail, ReductionWorkspace)> {
    let mut ws = ReductionWorkspace { history: cx.history.clone(), case: Some(Case::B), ..Default::default() };
    let mut first = Vec::new();
    let mut second = Vec::new();
    let mut total = 0.0;
    for (s, ks) in cx.ops(3, &[]).iter().enumerate() {
        let bs = ks * &cx.qb;
        let qs = probability(&bs, &cx.qb);
        total += qs;
        if qs < cx.tol.eps_eq * cx.tol.eps_eq {
            continue;
        }
        ws.probabilities.push(qs);
        let scaled = bs.scale_real(1.0 / qs.sqrt());
        ws.construction_residual = ws.construction_residual.max(rel_gram_defect(&scaled, &cx.qb, 1.0));
        for (t, m) in cx.ops(2, &[s]).iter().enumerate() {
            first.push(m.scale_real(qs.sqrt()));
            let targets: Vec<ComplexMatrix> = cx.ops(1, &[s, t]).iter().map(|k| k * &scaled).collect();
            let (ops, extra, defect) = realize(&cx.qb, &targets, 2, cx.tol)?;
            ws.construction_residual = ws.construction_residual.max(defect);
            ws.completion_outcomes += extra;
            second.push(ops);
        }
    }
    ws.construction_residual = ws.construction_residual.max((total - 1.0).abs());
    Ok((Tail::finish_with_identity(first, second), ws))
}

fn col(v: [C64; 2]) -> Vec<C64> {
    v.to_vec()
}

fn unit(v: &[C64]) -> Vec<C64> {
    let n = norm(v);
    v.iter().map(|z| z / n).collect()
}

/// `Σ_i |i⟩⟨i| ⊗ row_i` as a 2×4 operator.
fn block_rows(rows: [&[C64]; 2]) -> ComplexMatrix {
    ComplexMatrix::from_fn(2, 4, |i, c| if c / 2 == i { rows[i][c % 2] } else { ZERO })
}

fn row_times(v: &[C64], m: &ComplexMatrix) -> Vec<C64> {
    (0..m.cols()).map(|c| (0..v.len()).map(|s| v[s] * m[(s, c)]).sum()).collect()
}

/// e^{−iδ′} from μ + e^{−iδ′} = e^{iθ}(1 + μe^{−iδ′}).
pub fn delta_prime_phase(mu: f64, theta: f64) -> C64 {
    (cis(theta) - mu) / (ONE - cis(theta) * mu)
}

/// All four block elements have rank 2. Alice splits her operator into two
/// outcomes that leave Bob's resource in a state on which a single unitary
/// intertwines his two inputs up to the gate phase; Bob then measures and
/// Alice fixes a phase.
pub(crate) fn tail_c(
    pa: &ComplexMatrix,
    qb: &ComplexMatrix,
    blocks: &BlockElements,
    psi: &ComplexMatrix,
    theta: f64,
    tol: Tolerance,
) -> Result<(Tail, ReductionWorkspace)> {
    let mut ws = ReductionWorkspace { history: blocks.history.clone(), case: Some(Case::C), ..Default::default() };
    let singular =
        |what: &str| Error::Reduction { step: 0, reason: format!("{what} is singular at {:?}", blocks.history) };
    let alpha = [&blocks.a00, &blocks.a11];
    let a0_inv = blocks.a00.inverse().map_err(|_| singular("A00"))?;
    let b0_inv = blocks.b00.inverse().map_err(|_| singular("B00"))?;
    let psi_inv = psi.inverse().map_err(|_| singular("the resource"))?;

    let ta = svd(&(&blocks.a11 * &a0_inv))?;
    ws.lambda = Some(ta.sigma[0].powi(2));
    let tb_mat = &blocks.b11 * &b0_inv;
    let tb = svd(&tb_mat)?;
    let mu = tb.sigma[0].powi(2);
    ws.mu = Some(mu);
    ws.det_residual = (ta.sigma[0] * ta.sigma[1] - 1.0).abs().max((tb.sigma[0] * tb.sigma[1] - 1.0).abs());

    // Gram matrices of Bob's reachable resource vectors, one per Alice input.
    let h: Vec<ComplexMatrix> = alpha
        .iter()
        .map(|a| {
            let ga = (*a * *a).conj();
            &(&(&(&blocks.b00 * &psi.transpose()) * &ga) * &psi.conj()) * &blocks.b00.dagger()
        })
        .collect();
    let frame = if (mu - 1.0).abs() > 1e-6 {
        tb.vdag.clone()
    } else {
        let (_, v) = eigh(&(&h[0] - &h[1]))?;
        &hadamard() * &v.dagger()
    };
    let phase = delta_prime_phase(mu, theta);
    ws.delta_prime = Some(wrap(-phase.arg()));
    ws.delta_prime_residual = Some((mu + phase - cis(theta) * (1.0 + mu * phase)).norm());
    let phi = ComplexMatrix::diag(&[ONE, phase]);
    let ht0 = &(&frame * &h[0]) * &frame.dagger();
    let ht1 = &(&frame * &h[1]) * &frame.dagger();
    let hscale = ht0.max_abs().max(1e-300);
    let mut residual = ht1.max_abs_diff(&(&(&phi * &ht0) * &phi.dagger())) / hscale;
    residual = residual.max((ht0[(1, 1)].re - mu * ht0[(0, 0)].re).abs() / hscale);

    let weight = ht0[(0, 0)].re / 2.0;
    let z = ht0[(0, 1)] / (weight * mu.sqrt());
    let spread = (z.norm() / 2.0).min(1.0).acos();
    let zeta = z.arg();
    let phases = [-(zeta + spread), -(zeta - spread)];
    ws.phases = Some(phases.map(wrap));

    // e[r][i]: Bob's resource vector (in his B00 frame) for Alice outcome r, input i.
    let frame_inv = frame.dagger();
    let e: Vec<[Vec<C64>; 2]> = phases
        .iter()
        .map(|&ph| {
            let chi = col([C64::new(weight.sqrt(), 0.0), C64::from_polar(weight.sqrt() * mu.sqrt(), ph)]);
            [frame_inv.matvec(&chi), frame_inv.matvec(&phi.matvec(&chi))]
        })
        .collect();
    let alice_targets: Vec<ComplexMatrix> = e
        .iter()
        .map(|er| {
            let rows = [row_times(&b0_inv.matvec(&er[0]), &psi_inv), row_times(&b0_inv.matvec(&er[1]), &psi_inv)];
            block_rows([&rows[0], &rows[1]])
        })
        .collect();
    let (first, extra_a, defect) = realize(pa, &alice_targets, 2, tol)?;
    residual = residual.max(defect);
    ws.completion_outcomes += extra_a;

    let mut second = Vec::new();
    let mut third = Vec::new();
    for er in &e {
        let f = [tb_mat.matvec(&er[0]), tb_mat.matvec(&er[1])];
        let fm = ComplexMatrix::from_columns(&[f[0].clone(), f[1].clone()]);
        let target_cols: Vec<C64> = er[1].iter().map(|z| z * cis(theta)).collect();
        let em = ComplexMatrix::from_columns(&[er[0].clone(), target_cols]);
        let raw = &em * &fm.inverse().map_err(|_| singular("Bob's intertwiner input"))?;
        let intertwiner = nearest_isometry(&raw)?;
        residual = residual.max((&intertwiner * &fm).max_abs_diff(&em) / em.max_abs().max(1e-300));

        let (u0, u1) = (unit(&er[0]), unit(&er[1]));
        let ov = inner(&u0, &u1);
        let rot = if ov.norm() > 1e-14 { (ov / ov.norm()).conj() } else { ONE };
        let basis: Vec<Vec<C64>> = [1.0, -1.0]
            .iter()
            .map(|&sgn| unit(&u0.iter().zip(&u1).map(|(a, b)| a + rot * b * sgn).collect::<Vec<_>>()))
            .collect();
        let mut bob_targets = Vec::new();
        let mut corrections = Vec::new();
        for m in &basis {
            let bra: Vec<C64> = m.iter().map(|z| z.conj()).collect();
            let r0 = row_times(&bra, &blocks.b00);
            let r1 = row_times(&row_times(&bra, &intertwiner), &blocks.b11);
            bob_targets.push(block_rows([&r0, &r1]));
            let c0 = inner(m, &er[0]);
            let c1 = inner(m, &er[1]);
            let fix = if c1.norm() > 1e-14 && c0.norm() > 1e-14 { (c0 / c1) / (c0 / c1).norm() } else { ONE };
            corrections.push(vec![ComplexMatrix::diag(&[ONE, fix])]);
        }
        let (ops, extra_b, defect) = realize(qb, &bob_targets, 2, tol)?;
        residual = residual.max(defect);
        ws.completion_outcomes += extra_b;
        corrections.resize(ops.len(), vec![ComplexMatrix::identity(2)]);
        second.push(ops);
        third.push(corrections);
    }
    for _ in 0..extra_a {
        let ops = discard_to(qb.rows(), 2);
        third.push(vec![vec![ComplexMatrix::identity(2)]; ops.len()]);
        second.push(ops);
    }
    ws.construction_residual = residual;

    // Simultaneously diagonal functionals for unitary A11·A00⁻¹.
    if (ws.lambda.unwrap_or(1.0) - 1.0).abs() <= 1e-6 {
        let functional = |b: &ComplexMatrix| {
            let inner_part = &(&(&blocks.a00 * psi) * &(b * b).conj()) * &psi.dagger();
            &inner_part * &blocks.a00
        };
        let m0 = functional(&blocks.b00);
        let m1 = functional(&blocks.b11);
        let (vals0, v) = eigh(&m0)?;
        let m1v = &(&v.dagger() * &m1) * &v;
        let (e0, f0) = (vals0[0], vals0[1]);
        let (e1, f1) = (m1v[(0, 0)].re, m1v[(1, 1)].re);
        let scale = m0.trace().re.abs().max(1e-300);
        ws.eigen_swap_residual = Some((e0 - f1).abs().max((e1 - f0).abs()) / scale);
    }
    Ok((Tail { first, second, third }, ws))
}

fn wrap(x: f64) -> f64 {
    crate::states::wrap_phase(x)
}

/// δ read off the original protocol's branch vectors three turns from the
/// end, with the residual against the closed form in λ and θ.
pub(crate) fn delta_from_branches(cx: &Context, blocks: &BlockElements, ws: &mut ReductionWorkspace) -> Result<()> {
    // strongest leaf below the history
    let mut best: Option<(f64, ComplexMatrix)> = None;
    for (s, _) in cx.ops(3, &[]).iter().enumerate() {
        for (t, _) in cx.ops(2, &[s]).iter().enumerate() {
            for (u, _) in cx.ops(1, &[s, t]).iter().enumerate() {
                let (_, b) = cx.p.accumulated_at(&ext(cx.history, &[s, t, u]))?;
                let w = b.frobenius_norm();
                if best.as_ref().is_none_or(|(bw, _)| w > *bw) {
                    best = Some((w, b));
                }
            }
        }
    }
    let Some((_, b_acc)) = best else { return Ok(()) };
    let bv = extract_block_vectors(&ComplexMatrix::zeros(2, 4), &b_acc)?;
    let bbar = |l: usize| -> Vec<C64> { bv.b[l][l].iter().map(|z| z.conj()).collect() };
    let psi = &cx.psi;
    let w0 = psi.matvec(&bbar(0));
    let w1 = psi.matvec(&bbar(1));
    let lhs = ComplexMatrix::from_columns(&[
        blocks.a11.matvec(&w0),
        blocks.a11.matvec(&w1).iter().map(|z| z * cis(-cx.theta)).collect(),
    ]);
    let rhs = ComplexMatrix::from_columns(&[blocks.a00.matvec(&w0), blocks.a00.matvec(&w1)]);
    let u = &lhs * &rhs.inverse()?;
    let t = &(&u.dagger() * &blocks.a11) * &blocks.a00.inverse()?;
    let d = svd(&t)?;
    let lambda = d.sigma[0].powi(2);
    let tilde = &d.vdag * &blocks.a00;
    let v0 = tilde.matvec(&w0);
    let v1 = tilde.matvec(&w1);
    // Relative phase as it enters the overlap <v0|v1>, so that e^{-iδ}
    // matches the closed form.
    let delta = wrap((v0[0] / v0[1]).arg() - (v1[0] / v1[1]).arg());
    let closed = (lambda - cis(-cx.theta)) / (cis(-cx.theta) * lambda - 1.0);
    ws.delta = Some(delta);
    ws.delta_residual = Some((cis(-delta) - closed).norm());
    Ok(())
}
