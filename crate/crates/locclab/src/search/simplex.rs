/// Result of one simplex run.
#[derive(Clone, Debug)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Counts evaluations against the budget and remembers the best point seen.
struct Budgeted<F> {
    f: F,
    left: usize,
    used: usize,
    best: (Vec<f64>, f64),
}

impl<F: FnMut(&[f64]) -> f64> Budgeted<F> {
    fn eval(&mut self, x: Vec<f64>) -> Option<(Vec<f64>, f64)> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        self.used += 1;
        let v = (self.f)(&x);
        if v < self.best.1 {
            self.best = (x.clone(), v);
        }
        Some((x, v))
    }
}

/// Nelder–Mead minimization with dimension-adaptive coefficients.
///
/// The start point is always evaluated; `budget` bounds the evaluations
/// after it. A collapsed simplex is rebuilt around the best point with the
/// initial `step`. Stops early once the value reaches `target`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    budget: usize,
    target: f64,
) -> SimplexOutcome {
    let n = x0.len();
    let v0 = f(x0);
    let mut run = Budgeted { f, left: budget, used: 1, best: (x0.to_vec(), v0) };
    if n > 0 {
        let _ = search(&mut run, n, step, target);
    }
    SimplexOutcome { x: run.best.0, value: run.best.1, evaluations: run.used }
}

fn search<F: FnMut(&[f64]) -> f64>(run: &mut Budgeted<F>, n: usize, step: f64, target: f64) -> Option<()> {
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    while run.best.1 > target {
        let mut simplex = vec![run.best.clone()];
        for i in 0..n {
            let mut x = run.best.0.clone();
            x[i] += step;
            simplex.push(run.eval(x)?);
        }
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if simplex[0].1 <= target {
                return Some(());
            }
            let size = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if size < 1e-12 || simplex[n].1 - simplex[0].1 <= f64::EPSILON * simplex[0].1.abs() {
                break;
            }
            let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / nf).collect();
            let toward = |coef: f64, worst: &[f64]| -> Vec<f64> {
                centroid.iter().zip(worst).map(|(c, w)| c + coef * (c - w)).collect()
            };
            let worst = simplex[n].0.clone();
            let reflected = run.eval(toward(alpha, &worst))?;
            if reflected.1 < simplex[0].1 {
                let expanded = run.eval(toward(gamma, &worst))?;
                simplex[n] = if expanded.1 < reflected.1 { expanded } else { reflected };
            } else if reflected.1 < simplex[n - 1].1 {
                simplex[n] = reflected;
            } else {
                let coef = if reflected.1 < simplex[n].1 { alpha * rho } else { -rho };
                let contracted = run.eval(toward(coef, &worst))?;
                if contracted.1 < reflected.1.min(simplex[n].1) {
                    simplex[n] = contracted;
                } else {
                    let anchor = simplex[0].0.clone();
                    for v in simplex.iter_mut().skip(1) {
                        let x = anchor.iter().zip(&v.0).map(|(a, b)| a + sigma * (b - a)).collect();
                        *v = run.eval(x)?;
                    }
                }
            }
        }
    }
    Some(())
}
