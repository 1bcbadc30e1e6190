//! Training-fold median imputation and z-standardization.

use serde::{Deserialize, Serialize};

use crate::matrix::{FeatureFlag, FeatureRow};

/// Statistics fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldStats {
    pub medians: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl FoldStats {
    pub fn fit(train: &[&FeatureRow]) -> Self {
        let n_features = train.first().map_or(0, |r| r.values.len());
        let mut medians = Vec::with_capacity(n_features);
        let mut means = Vec::with_capacity(n_features);
        let mut scales = Vec::with_capacity(n_features);
        let mut buf = Vec::with_capacity(train.len());
        for j in 0..n_features {
            buf.clear();
            buf.extend(train.iter().filter_map(|r| r.value(j)));
            let med = median(&mut buf);
            let imputed = |r: &&FeatureRow| r.value(j).unwrap_or(med);
            let n = train.len() as f64;
            let mean = train.iter().map(imputed).sum::<f64>() / n;
            let var = train.iter().map(|r| (imputed(r) - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            medians.push(med);
            means.push(mean);
            scales.push(if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 });
        }
        Self { medians, means, scales }
    }

    pub fn transform(&self, row: &FeatureRow) -> Vec<f64> {
        row.values
            .iter()
            .zip(&row.flags)
            .enumerate()
            .map(|(j, (&v, &f))| {
                let v = if f == FeatureFlag::Ok { v } else { self.medians[j] };
                (v - self.means[j]) / self.scales[j]
            })
            .collect()
    }
}

/// Average several visits into one row; a feature stays flagged only when
/// every visit is flagged.
pub fn mean_row(rows: &[&FeatureRow]) -> FeatureRow {
    let first = rows[0];
    let n_features = first.values.len();
    let mut values = vec![0.0; n_features];
    let mut flags = vec![FeatureFlag::EmptyBundle; n_features];
    for j in 0..n_features {
        let ok: Vec<f64> = rows.iter().filter_map(|r| r.value(j)).collect();
        if !ok.is_empty() {
            values[j] = ok.iter().sum::<f64>() / ok.len() as f64;
            flags[j] = FeatureFlag::Ok;
        }
    }
    FeatureRow { meta: first.meta.clone(), values, flags }
}
