//! Covariance and correlation matrices in community order.

use serde::{Deserialize, Serialize};

use super::louvain::louvain;
use super::{feature_columns, imputed_columns, rows_of, AnalyticsError};
use crate::io::metadata::Group;
use crate::matrix::FeatureMatrix;

pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixMode {
    Covariance,
    Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedMatrix {
    pub mode: MatrixMode,
    /// Feature names in display order.
    pub features: Vec<String>,
    /// `order[i]` is the input position of the i-th displayed feature.
    pub order: Vec<usize>,
    /// Cells in display order, row-major.
    pub values: Vec<Vec<f64>>,
    /// Community of each displayed feature; communities are contiguous.
    pub communities: Vec<usize>,
    pub modularity_per_pass: Vec<f64>,
    pub n_rows: usize,
}

/// Population covariance and Pearson correlation of the columns.
pub fn cov_corr(cols: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let p = cols.len();
    let n = cols.first().map_or(0, Vec::len) as f64;
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in a..p {
            let s: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| (x - means[a]) * (y - means[b])).sum::<f64>() / n;
            cov[a][b] = s;
            cov[b][a] = s;
        }
    }
    let mut corr = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in 0..p {
            corr[a][b] = if a == b {
                1.0
            } else {
                let d = (cov[a][a] * cov[b][b]).sqrt();
                if d > 0.0 { (cov[a][b] / d).clamp(-1.0, 1.0) } else { 0.0 }
            };
        }
    }
    (cov, corr)
}

/// Feature permutation from Louvain communities on the |correlation| graph.
/// Communities are ordered by size (largest first), members by their mean
/// absolute correlation with the rest of their community.
pub fn community_order(corr: &[Vec<f64>], edge_threshold: f64) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let p = corr.len();
    let w: Vec<Vec<f64>> = (0..p)
        .map(|a| {
            (0..p)
                .map(|b| {
                    let v = corr[a][b].abs();
                    if a != b && v >= edge_threshold { v } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let part = louvain(&w);
    let k = part.n_communities();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in part.communities.iter().enumerate() {
        members[c].push(i);
    }
    let cohesion = |i: usize, group: &[usize]| -> f64 {
        if group.len() < 2 {
            return 0.0;
        }
        group.iter().filter(|&&j| j != i).map(|&j| corr[i][j].abs()).sum::<f64>() / (group.len() - 1) as f64
    };
    for group in &mut members {
        let snapshot = group.clone();
        group.sort_by(|&a, &b| cohesion(b, &snapshot).total_cmp(&cohesion(a, &snapshot)).then(a.cmp(&b)));
    }
    // Ids are numbered by first member, so a stable sort breaks size ties by position.
    let mut ids: Vec<usize> = (0..k).collect();
    ids.sort_by(|&a, &b| members[b].len().cmp(&members[a].len()));
    let mut order = Vec::with_capacity(p);
    let mut communities = Vec::with_capacity(p);
    for (rank, &c) in ids.iter().enumerate() {
        for &i in &members[c] {
            order.push(i);
            communities.push(rank);
        }
    }
    (order, communities, part.modularity_per_pass)
}

pub fn ordered_matrix(
    matrix: &FeatureMatrix,
    group: Option<Group>,
    mode: MatrixMode,
    features: Option<&[String]>,
    edge_threshold: f64,
) -> Result<OrderedMatrix, AnalyticsError> {
    let rows = rows_of(matrix, group);
    if rows.len() < 2 {
        return Err(AnalyticsError::TooFewRows { needed: 2, found: rows.len() });
    }
    let cols = feature_columns(matrix, features)?;
    let data = imputed_columns(&rows, &cols);
    let (cov, corr) = cov_corr(&data);
    let (order, communities, modularity_per_pass) = community_order(&corr, edge_threshold);
    let source = match mode {
        MatrixMode::Covariance => &cov,
        MatrixMode::Correlation => &corr,
    };
    let values = order.iter().map(|&a| order.iter().map(|&b| source[a][b]).collect()).collect();
    Ok(OrderedMatrix {
        mode,
        features: order.iter().map(|&i| matrix.feature_names[cols[i]].clone()).collect(),
        order,
        values,
        communities,
        modularity_per_pass,
        n_rows: rows.len(),
    })
}
