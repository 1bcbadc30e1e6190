//! Soft-margin linear SVM (hinge loss, L2 penalty, unregularized bias),
//! solved in the dual by SMO with second-order working-set selection.

use serde::{Deserialize, Serialize};

use super::platt::Sigmoid;
use super::MlError;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub cost: f64,
    /// Stop once the maximal KKT violation `m(a) - M(a)` drops below this.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { cost: 1.0, tolerance: 1e-6, max_iter: 1_000_000 }
    }
}

/// Decision function `w . x + b`; positive means disease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearSvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmFit {
    pub model: LinearSvm,
    pub converged: bool,
    pub iterations: usize,
}

/// Train on rows `x` with labels `y` (true = disease = +1).
pub fn fit_linear_svm(x: &[Vec<f64>], y: &[bool], params: &SvmParams) -> Result<SvmFit, MlError> {
    let n = x.len();
    if n != y.len() {
        return Err(MlError::InvalidConfig(format!("{n} rows but {} labels", y.len())));
    }
    if n == 0 {
        return Err(MlError::EmptyInput("no training rows"));
    }
    let dim = x[0].len();
    if dim == 0 {
        return Err(MlError::EmptyInput("no features selected"));
    }
    let pos = y.iter().filter(|&&b| b).count();
    if pos == 0 || pos == n {
        return Err(MlError::DegenerateData("SVM training rows contain a single class".into()));
    }
    let c = params.cost;
    let ys: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();

    // Q_ij = y_i y_j <x_i, x_j>
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
            let v = ys[i] * ys[j] * k;
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }
    let qd: Vec<f64> = (0..n).map(|i| q[i * n + i]).collect();

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_upper = |a: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        // Working set selection (second order).
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if ys[t] > 0.0 {
                if !is_upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = t;
                }
            } else if !is_lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i_sel != usize::MAX {
            let qi = &q[i_sel * n..(i_sel + 1) * n];
            for t in 0..n {
                if ys[t] > 0.0 {
                    if !is_lower(alpha[t]) {
                        let grad_diff = gmax + grad[t];
                        if grad[t] >= gmax2 {
                            gmax2 = grad[t];
                        }
                        if grad_diff > 0.0 {
                            let quad = qd[i_sel] + qd[t] - 2.0 * ys[i_sel] * qi[t];
                            let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                            if obj <= obj_min {
                                j_sel = t;
                                obj_min = obj;
                            }
                        }
                    }
                } else if !is_upper(alpha[t]) {
                    let grad_diff = gmax - grad[t];
                    if -grad[t] >= gmax2 {
                        gmax2 = -grad[t];
                    }
                    if grad_diff > 0.0 {
                        let quad = qd[i_sel] + qd[t] + 2.0 * ys[i_sel] * qi[t];
                        let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= obj_min {
                            j_sel = t;
                            obj_min = obj;
                        }
                    }
                }
            }
        }
        if gmax + gmax2 < params.tolerance || j_sel == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let qij = q[i * n + j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if ys[i] != ys[j] {
            let quad = {
                let v = qd[i] + qd[j] + 2.0 * qij;
                if v > 0.0 { v } else { TAU }
            };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = {
                let v = qd[i] + qd[j] - 2.0 * qij;
                if v > 0.0 { v } else { TAU }
            };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let qi = &q[i * n..(i + 1) * n];
        let qj = &q[j * n..(j + 1) * n];
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
    }

    // Offset from free support vectors, else the midpoint of the feasible range.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if is_upper(alpha[t]) {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(alpha[t]) {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };

    let mut weights = vec![0.0; dim];
    for t in 0..n {
        let coef = alpha[t] * ys[t];
        if coef != 0.0 {
            for (w, v) in weights.iter_mut().zip(&x[t]) {
                *w += coef * v;
            }
        }
    }
    Ok(SvmFit { model: LinearSvm { weights, bias: -rho }, converged, iterations })
}

/// Linear SVM plus its probability map, on a fixed feature subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// Column indices into the standardized feature vector.
    pub features: Vec<usize>,
    pub svm: LinearSvm,
    pub sigmoid: Sigmoid,
    pub converged: bool,
}

impl LinearModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        let x: Vec<f64> = self.features.iter().map(|&j| row[j]).collect();
        self.svm.decision(&x)
    }

    /// P(disease) for a full standardized row.
    pub fn probability(&self, row: &[f64]) -> f64 {
        self.sigmoid.probability(self.decision(row))
    }
}

/// Train the SVM on `features` of standardized `rows`, then calibrate
/// probabilities on out-of-fold decision values from a 3-fold inner split.
pub fn train_svm(
    rows: &[Vec<f64>],
    y: &[bool],
    features: &[usize],
    params: &SvmParams,
    seed: u64,
) -> Result<LinearModel, MlError> {
    if features.is_empty() {
        return Err(MlError::EmptyInput("no features selected"));
    }
    let project = |r: &Vec<f64>| features.iter().map(|&j| r[j]).collect::<Vec<f64>>();
    let x: Vec<Vec<f64>> = rows.iter().map(project).collect();
    let fit = fit_linear_svm(&x, y, params)?;
    let (decisions, inner_converged) = super::platt::inner_decision_values(&x, y, params, seed)?;
    let sigmoid = Sigmoid::fit(&decisions, y);
    Ok(LinearModel {
        features: features.to_vec(),
        svm: fit.model,
        sigmoid,
        converged: fit.converged && inner_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Primal objective for checking optimality independently of the dual.
    fn primal(m: &LinearSvm, x: &[Vec<f64>], y: &[bool], c: f64) -> f64 {
        let reg = 0.5 * m.weights.iter().map(|w| w * w).sum::<f64>();
        let hinge: f64 = x
            .iter()
            .zip(y)
            .map(|(r, &l)| (1.0 - if l { 1.0 } else { -1.0 } * m.decision(r)).max(0.0))
            .sum();
        reg + c * hinge
    }

    #[test]
    fn separable_points() {
        let x = vec![vec![2.0, 2.0], vec![3.0, 1.5], vec![-2.0, -1.0], vec![-1.5, -2.5]];
        let y = vec![true, true, false, false];
        let fit = fit_linear_svm(&x, &y, &SvmParams::default()).unwrap();
        assert!(fit.converged);
        for (r, &l) in x.iter().zip(&y) {
            assert_eq!(fit.model.decision(r) > 0.0, l);
        }
    }

    #[test]
    fn dual_solution_is_primal_optimal() {
        let x = vec![
            vec![1.0, 0.2],
            vec![0.4, 0.9],
            vec![-0.3, 0.1],
            vec![0.1, -0.8],
            vec![-1.0, -0.4],
            vec![0.2, 0.3],
        ];
        let y = vec![true, true, false, false, false, true];
        let c = 0.7;
        let fit = fit_linear_svm(&x, &y, &SvmParams { cost: c, ..Default::default() }).unwrap();
        let best = primal(&fit.model, &x, &y, c);
        // No small perturbation of (w, b) improves the primal objective.
        for dw0 in [-1e-3, 0.0, 1e-3] {
            for dw1 in [-1e-3, 0.0, 1e-3] {
                for db in [-1e-3, 0.0, 1e-3] {
                    let mut m = fit.model.clone();
                    m.weights[0] += dw0;
                    m.weights[1] += dw1;
                    m.bias += db;
                    assert!(primal(&m, &x, &y, c) >= best - 1e-6);
                }
            }
        }
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let y: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let fit = fit_linear_svm(&x, &y, &SvmParams { max_iter: 1, ..Default::default() }).unwrap();
        assert!(!fit.converged);
    }
}
