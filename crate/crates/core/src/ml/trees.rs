//! Extremely randomized trees, grown only for mean-decrease-in-impurity
//! feature importance.
//!
//! Each node draws candidate features in random order, skipping those that
//! are constant within the node, until `max_features` usable candidates are
//! found. Every candidate gets one threshold drawn uniformly between its
//! node-local min and max; the candidate with the largest Gini decrease wins.
//! Trees are grown until nodes are pure or cannot be split.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::MlError;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtraTreesParams {
    pub n_trees: usize,
    pub max_features: usize,
    pub seed: u64,
}

/// Column-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    pub cols: Vec<Vec<f64>>,
    pub n_rows: usize,
}

impl Columns {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_features = rows.first().map_or(0, Vec::len);
        let cols = (0..n_features).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self { cols, n_rows }
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Grower<'a> {
    x: &'a Columns,
    y: &'a [bool],
    max_features: usize,
    importances: Vec<f64>,
    feature_order: Vec<usize>,
}

impl Grower<'_> {
    /// Grows one tree over `rows`, adding weighted impurity decreases.
    /// Returns the number of splits made.
    fn grow(&mut self, rows: &mut [usize], rng: &mut ChaCha8Rng) -> usize {
        let total = self.x.n_rows as f64;
        let mut splits = 0;
        let mut stack: Vec<(usize, usize)> = vec![(0, rows.len())];
        while let Some((start, end)) = stack.pop() {
            let node = &mut rows[start..end];
            let n = node.len();
            let pos = node.iter().filter(|&&i| self.y[i]).count();
            if n < 2 || pos == 0 || pos == n {
                continue;
            }
            let parent = n as f64 * gini(pos, n);

            let mut best: Option<(f64, usize, f64)> = None;
            let mut usable = 0;
            let n_features = self.feature_order.len();
            for drawn in 0..n_features {
                if usable == self.max_features {
                    break;
                }
                // Partial Fisher-Yates over the feature list.
                let pick = rng.random_range(drawn..n_features);
                self.feature_order.swap(drawn, pick);
                let f = self.feature_order[drawn];
                let col = &self.x.cols[f];
                let (lo, hi) = node
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(col[i]), hi.max(col[i])));
                if !(hi > lo) {
                    continue;
                }
                usable += 1;
                let u: f64 = rng.random();
                let mut threshold = lo + u * (hi - lo);
                if threshold >= hi {
                    threshold = lo;
                }
                let (mut nl, mut pl) = (0usize, 0usize);
                for &i in node.iter() {
                    if col[i] <= threshold {
                        nl += 1;
                        pl += usize::from(self.y[i]);
                    }
                }
                let nr = n - nl;
                let pr = pos - pl;
                let children = nl as f64 * gini(pl, nl) + nr as f64 * gini(pr, nr);
                let decrease = parent - children;
                if best.is_none_or(|(d, _, _)| decrease > d) {
                    best = Some((decrease, f, threshold));
                }
            }
            let Some((decrease, f, threshold)) = best else { continue };

            self.importances[f] += decrease / total;
            splits += 1;
            let col = &self.x.cols[f];
            // In-place partition: left block holds values <= threshold.
            let mut left = 0;
            for idx in 0..n {
                if col[node[idx]] <= threshold {
                    node.swap(left, idx);
                    left += 1;
                }
            }
            stack.push((start + left, end));
            stack.push((start, start + left));
        }
        splits
    }
}

/// Normalized mean-decrease-in-impurity importances (sum to 1).
pub fn feature_importances(x: &Columns, y: &[bool], params: &ExtraTreesParams) -> Result<Vec<f64>, MlError> {
    if x.n_rows != y.len() {
        return Err(MlError::InvalidConfig(format!("{} rows but {} labels", x.n_rows, y.len())));
    }
    let pos = y.iter().filter(|&&b| b).count();
    if pos == 0 || pos == y.len() {
        return Err(MlError::DegenerateData("training rows contain a single class".into()));
    }
    if x.n_features() == 0 {
        return Err(MlError::EmptyInput("no features"));
    }
    let n_features = x.n_features();
    let mut sum = vec![0.0; n_features];
    let mut useful_trees = 0usize;
    let mut rows: Vec<usize> = Vec::with_capacity(x.n_rows);
    for t in 0..params.n_trees {
        let mut rng = seed::rng(params.seed, &[seed::tag("tree"), t as u64]);
        let mut grower = Grower {
            x,
            y,
            max_features: params.max_features.clamp(1, n_features),
            importances: vec![0.0; n_features],
            feature_order: (0..n_features).collect(),
        };
        rows.clear();
        rows.extend(0..x.n_rows);
        if grower.grow(&mut rows, &mut rng) == 0 {
            continue;
        }
        let total: f64 = grower.importances.iter().sum();
        if total > 0.0 {
            for (s, v) in sum.iter_mut().zip(&grower.importances) {
                *s += v / total;
            }
            useful_trees += 1;
        }
    }
    if useful_trees == 0 {
        return Err(MlError::DegenerateData("no feature admits an impurity-reducing split".into()));
    }
    let total: f64 = sum.iter().sum();
    Ok(sum.into_iter().map(|v| v / total).collect())
}
