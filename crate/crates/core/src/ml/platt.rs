//! Platt scaling: `P(disease | f) = 1 / (1 + exp(A f + B))`, fitted by
//! Newton's method with backtracking on regularized targets.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::svm::{fit_linear_svm, SvmParams};
use super::MlError;
use crate::seed;

pub const INNER_FOLDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigmoid {
    pub a: f64,
    pub b: f64,
}

impl Sigmoid {
    pub fn probability(&self, decision: f64) -> f64 {
        let z = self.a * decision + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }

    /// Fit on decision values; the result is nondecreasing in the decision
    /// value (`a <= 0`), falling back to the class prior otherwise.
    pub fn fit(decisions: &[f64], y: &[bool]) -> Self {
        let prior1 = y.iter().filter(|&&b| b).count() as f64;
        let prior0 = y.len() as f64 - prior1;
        let hi = (prior1 + 1.0) / (prior1 + 2.0);
        let lo = 1.0 / (prior0 + 2.0);
        let targets: Vec<f64> = y.iter().map(|&b| if b { hi } else { lo }).collect();
        let prior = Sigmoid { a: 0.0, b: ((prior0 + 1.0) / (prior1 + 1.0)).ln() };

        let objective = |a: f64, b: f64| -> f64 {
            decisions
                .iter()
                .zip(&targets)
                .map(|(&d, &t)| {
                    let z = d * a + b;
                    if z >= 0.0 {
                        t * z + (-z).exp().ln_1p()
                    } else {
                        (t - 1.0) * z + z.exp().ln_1p()
                    }
                })
                .sum()
        };

        const MAX_ITER: usize = 100;
        const MIN_STEP: f64 = 1e-10;
        const SIGMA: f64 = 1e-12;
        let (mut a, mut b) = (prior.a, prior.b);
        let mut fval = objective(a, b);
        for _ in 0..MAX_ITER {
            let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
            for (&d, &t) in decisions.iter().zip(&targets) {
                let z = d * a + b;
                let (p, q) = if z >= 0.0 {
                    let e = (-z).exp();
                    (e / (1.0 + e), 1.0 / (1.0 + e))
                } else {
                    let e = z.exp();
                    (1.0 / (1.0 + e), e / (1.0 + e))
                };
                let d2 = p * q;
                h11 += d * d * d2;
                h22 += d2;
                h21 += d * d2;
                let d1 = t - p;
                g1 += d * d1;
                g2 += d1;
            }
            if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
                break;
            }
            let det = h11 * h22 - h21 * h21;
            let da = -(h22 * g1 - h21 * g2) / det;
            let db = -(-h21 * g1 + h11 * g2) / det;
            let gd = g1 * da + g2 * db;
            let mut step = 1.0;
            while step >= MIN_STEP {
                let (na, nb) = (a + step * da, b + step * db);
                let nf = objective(na, nb);
                if nf < fval + 1e-4 * step * gd {
                    a = na;
                    b = nb;
                    fval = nf;
                    break;
                }
                step /= 2.0;
            }
            if step < MIN_STEP {
                break;
            }
        }
        if a > 0.0 || !a.is_finite() || !b.is_finite() {
            prior
        } else {
            Sigmoid { a, b }
        }
    }
}

/// Out-of-fold decision values from a stratified 3-fold split of the
/// training rows. Rows whose inner training split lacks a class fall back
/// to a model trained on all rows.
pub fn inner_decision_values(
    x: &[Vec<f64>],
    y: &[bool],
    params: &SvmParams,
    seed: u64,
) -> Result<(Vec<f64>, bool), MlError> {
    let n = x.len();
    let mut fold_of = vec![0usize; n];
    let mut offset = 0;
    for (tag, class) in [(0u64, true), (1u64, false)] {
        let mut idx: Vec<usize> = (0..n).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut seed::rng(seed, &[seed::tag("platt"), tag]));
        for (k, &i) in idx.iter().enumerate() {
            fold_of[i] = (offset + k) % INNER_FOLDS;
        }
        offset = (offset + idx.len()) % INNER_FOLDS;
    }

    let mut decisions = vec![0.0; n];
    let mut converged = true;
    let mut full = None;
    for f in 0..INNER_FOLDS {
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        if test.is_empty() {
            continue;
        }
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let model = match fit_linear_svm(&tx, &ty, params) {
            Ok(fit) => {
                converged &= fit.converged;
                fit.model
            }
            Err(MlError::DegenerateData(_)) => {
                if full.is_none() {
                    let fit = fit_linear_svm(x, y, params)?;
                    converged &= fit.converged;
                    full = Some(fit.model);
                }
                full.clone().unwrap()
            }
            Err(e) => return Err(e),
        };
        for &i in &test {
            decisions[i] = model.decision(&x[i]);
        }
    }
    Ok((decisions, converged))
}
