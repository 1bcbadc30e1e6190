//! Comparative views derived from feature matrices and saliency reports.

pub mod correlation;
pub mod joins;
pub mod louvain;
pub mod trends;
pub mod tsne;

use thiserror::Error;

use crate::io::metadata::Group;
use crate::matrix::{FeatureMatrix, FeatureRow, MatrixError};

pub use correlation::{ordered_matrix, MatrixMode, OrderedMatrix};
pub use joins::{prediction_feature_points, subject_timeline, PredictionPoint, Timeline};
pub use trends::{histogram, trend_series, Histogram, TrendSeries};
pub use tsne::{project_2d, Projection, TsneParams};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
}

/// Rows of `group`, or all rows.
pub fn rows_of(matrix: &FeatureMatrix, group: Option<Group>) -> Vec<&FeatureRow> {
    matrix.rows.iter().filter(|r| group.is_none_or(|g| r.meta.group == g)).collect()
}

/// Resolve feature names to column indices; `None` means every feature.
pub fn feature_columns(matrix: &FeatureMatrix, names: Option<&[String]>) -> Result<Vec<usize>, AnalyticsError> {
    match names {
        None => Ok((0..matrix.n_features()).collect()),
        Some(names) => Ok(names.iter().map(|n| matrix.feature_index(n)).collect::<Result<_, _>>()?),
    }
}

/// Dense columns with flagged cells replaced by the column median.
pub(crate) fn imputed_columns(rows: &[&FeatureRow], cols: &[usize]) -> Vec<Vec<f64>> {
    cols.iter()
        .map(|&j| {
            let mut ok: Vec<f64> = rows.iter().filter_map(|r| r.value(j)).collect();
            ok.sort_by(f64::total_cmp);
            let med = match ok.len() {
                0 => 0.0,
                n if n % 2 == 1 => ok[n / 2],
                n => 0.5 * (ok[n / 2 - 1] + ok[n / 2]),
            };
            rows.iter().map(|r| r.value(j).unwrap_or(med)).collect()
        })
        .collect()
}
