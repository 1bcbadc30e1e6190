//! Exact t-SNE.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{feature_columns, imputed_columns, AnalyticsError};
use crate::matrix::FeatureMatrix;

pub const MIN_ROWS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    /// `None` means `min(30, (n - 1) / 3)`.
    pub perplexity: Option<f64>,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self { iterations: 1000, exaggeration: 12.0, exaggeration_iters: 250, perplexity: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub scan_ids: Vec<String>,
    pub features: Vec<String>,
    pub points: Vec<[f64; 2]>,
    pub perplexity: f64,
    pub kl_divergence: f64,
}

fn sq_distances(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i][j] = s;
            d[j][i] = s;
        }
    }
    d
}

/// Conditional affinities `p_{j|i}`; each row sums to 1.
pub fn conditional_affinities(d2: &[Vec<f64>], perplexity: f64) -> Vec<Vec<f64>> {
    let n = d2.len();
    let target = perplexity.ln();
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        let (mut beta, mut lo, mut hi) = (1.0, f64::NEG_INFINITY, f64::INFINITY);
        // Shift by the nearest distance so exp() cannot underflow entirely.
        let dmin = (0..n).filter(|&j| j != i).map(|j| d2[i][j]).fold(f64::INFINITY, f64::min);
        for _ in 0..200 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    p[i][j] = 0.0;
                    continue;
                }
                let v = (-(d2[i][j] - dmin) * beta).exp();
                p[i][j] = v;
                sum += v;
                weighted += (d2[i][j] - dmin) * v;
            }
            let entropy = sum.ln() + beta * weighted / sum;
            let diff = entropy - target;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
            }
        }
        let sum: f64 = p[i].iter().sum();
        for v in &mut p[i] {
            *v /= sum;
        }
    }
    p
}

/// First two principal components, each with a fixed sign.
fn pca_init(x: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let n = x.len();
    let d = x[0].len();
    let means: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| x[i][j] - means[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut out = vec![[0.0; 2]; n];
    for (c, &k) in idx.iter().take(2).enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        let (pivot, _) = v.iter().enumerate().fold((0, 0.0), |(bi, bv), (i, &x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
        if v[pivot] < 0.0 {
            v = -v;
        }
        let proj = &centered * v;
        for i in 0..n {
            out[i][c] = proj[i];
        }
    }
    let std = (out.iter().map(|p| p[0] * p[0]).sum::<f64>() / n as f64).sqrt();
    let scale = if std > 0.0 { 1e-4 / std } else { 0.0 };
    for p in &mut out {
        p[0] *= scale;
        p[1] *= scale;
    }
    out
}

/// Embed rows of `x` (already standardized) in 2-D.
pub fn tsne(x: &[Vec<f64>], params: &TsneParams) -> Result<(Vec<[f64; 2]>, f64, f64), AnalyticsError> {
    let n = x.len();
    if n < MIN_ROWS {
        return Err(AnalyticsError::TooFewRows { needed: MIN_ROWS, found: n });
    }
    let perplexity = params.perplexity.unwrap_or_else(|| (30.0_f64).min((n - 1) as f64 / 3.0));
    let cond = conditional_affinities(&sq_distances(x), perplexity);
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            p[i][j] = ((cond[i][j] + cond[j][i]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    let mut y = pca_init(x);
    // Degenerate PCA start (all rows identical): use a seeded random one.
    if y.iter().all(|p| p[0] == 0.0 && p[1] == 0.0) {
        let mut rng = crate::seed::rng(params.seed, &[crate::seed::tag("tsne")]);
        for p in &mut y {
            for v in p.iter_mut() {
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                *v = 1e-4 * z;
            }
        }
    }
    let lr = (n as f64 / 12.0).max(50.0);
    let mut update = vec![[0.0_f64; 2]; n];
    let mut gains = vec![[1.0_f64; 2]; n];
    let mut num = vec![vec![0.0; n]; n];
    for iter in 0..params.iterations {
        let exag = if iter < params.exaggeration_iters { params.exaggeration } else { 1.0 };
        let momentum = if iter < params.exaggeration_iters { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i][j] = v;
                num[j][i] = v;
                z += 2.0 * v;
            }
        }
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let m = (exag * p[i][j] - num[i][j] / z) * num[i][j];
                g[0] += 4.0 * m * (y[i][0] - y[j][0]);
                g[1] += 4.0 * m * (y[i][1] - y[j][1]);
            }
            for d in 0..2 {
                gains[i][d] = if (g[d] > 0.0) != (update[i][d] > 0.0) { gains[i][d] + 0.2 } else { gains[i][d] * 0.8 };
                gains[i][d] = gains[i][d].max(0.01);
                update[i][d] = momentum * update[i][d] - lr * gains[i][d] * g[d];
            }
        }
        for i in 0..n {
            y[i][0] += update[i][0];
            y[i][1] += update[i][1];
        }
        let (mx, my) = (y.iter().map(|p| p[0]).sum::<f64>() / n as f64, y.iter().map(|p| p[1]).sum::<f64>() / n as f64);
        for p in &mut y {
            p[0] -= mx;
            p[1] -= my;
        }
    }
    // Final KL divergence.
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                z += 1.0 / (1.0 + dx * dx + dy * dy);
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let q = (1.0 / (1.0 + dx * dx + dy * dy) / z).max(1e-12);
                kl += p[i][j] * (p[i][j] / q).ln();
            }
        }
    }
    Ok((y, perplexity, kl))
}

/// t-SNE of the matrix rows on the given features, z-scored after median imputation.
pub fn project_2d(
    matrix: &FeatureMatrix,
    features: Option<&[String]>,
    params: &TsneParams,
) -> Result<Projection, AnalyticsError> {
    let rows: Vec<_> = matrix.rows.iter().collect();
    if rows.len() < MIN_ROWS {
        return Err(AnalyticsError::TooFewRows { needed: MIN_ROWS, found: rows.len() });
    }
    let cols = feature_columns(matrix, features)?;
    let mut data = imputed_columns(&rows, &cols);
    for c in &mut data {
        let (m, s) = crate::ml::mean_std(c);
        let s = if s > 0.0 { s } else { 1.0 };
        for v in c.iter_mut() {
            *v = (*v - m) / s;
        }
    }
    let x: Vec<Vec<f64>> = (0..rows.len()).map(|i| data.iter().map(|c| c[i]).collect()).collect();
    let (points, perplexity, kl_divergence) = tsne(&x, params)?;
    Ok(Projection {
        scan_ids: rows.iter().map(|r| r.meta.scan_id.clone()).collect(),
        features: cols.iter().map(|&j| matrix.feature_names[j].clone()).collect(),
        points,
        perplexity,
        kl_divergence,
    })
}
