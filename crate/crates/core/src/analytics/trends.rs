//! Age trends and group histograms of one feature.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::cohort::{age_bin, AGE_BIN_YEARS};
use crate::io::metadata::{Group, Sex};
use crate::matrix::FeatureMatrix;
use crate::ml::mean_std;

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub age_bin_start: f64,
    pub age_center: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub group: Group,
    /// Present when split by sex.
    pub sex: Option<Sex>,
    pub points: Vec<TrendPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub feature: String,
    pub bin_width: f64,
    /// Bin starts shared by every series.
    pub bins: Vec<f64>,
    pub series: Vec<Series>,
}

pub fn trend_series(matrix: &FeatureMatrix, feature: &str, split_by_sex: bool) -> Result<TrendSeries, AnalyticsError> {
    let j = matrix.feature_index(feature)?;
    type Key = (Group, Option<Sex>);
    let mut cells: BTreeMap<Key, BTreeMap<i64, Vec<f64>>> = BTreeMap::new();
    let mut bins = std::collections::BTreeSet::new();
    for row in &matrix.rows {
        let Some(v) = row.value(j) else { continue };
        let bin = age_bin(row.meta.age) as i64;
        bins.insert(bin);
        let sex = split_by_sex.then_some(row.meta.sex);
        cells.entry((row.meta.group, sex)).or_default().entry(bin).or_default().push(v);
    }
    let series = cells
        .into_iter()
        .map(|((group, sex), by_bin)| Series {
            group,
            sex,
            points: by_bin
                .into_iter()
                .map(|(bin, values)| {
                    let (mean, std) = mean_std(&values);
                    TrendPoint {
                        age_bin_start: bin as f64,
                        age_center: bin as f64 + AGE_BIN_YEARS / 2.0,
                        mean,
                        std,
                        n: values.len(),
                    }
                })
                .collect(),
        })
        .collect();
    Ok(TrendSeries { feature: feature.to_string(), bin_width: AGE_BIN_YEARS, bins: bins.into_iter().map(|b| b as f64).collect(), series })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub group: Group,
    pub counts: Vec<usize>,
    /// Rows whose value is flagged and therefore not counted.
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub feature: String,
    /// `HISTOGRAM_BINS + 1` edges over the global range of all rows.
    pub edges: Vec<f64>,
    pub groups: Vec<GroupCounts>,
}

/// Counts per group on shared edges; `group` restricts the output, not the edges.
pub fn histogram(matrix: &FeatureMatrix, feature: &str, group: Option<Group>) -> Result<Histogram, AnalyticsError> {
    let j = matrix.feature_index(feature)?;
    let (mut lo, mut hi) = matrix
        .column(j)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    } else if lo == hi {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|i| if i == HISTOGRAM_BINS { hi } else { lo + i as f64 * width }).collect();
    let groups = [Group::Disease, Group::Control]
        .into_iter()
        .filter(|g| group.is_none_or(|want| want == *g))
        .map(|g| {
            let mut counts = vec![0usize; HISTOGRAM_BINS];
            let mut missing = 0;
            for row in matrix.rows.iter().filter(|r| r.meta.group == g) {
                match row.value(j) {
                    Some(v) => {
                        let b = (((v - lo) / width).floor() as usize).min(HISTOGRAM_BINS - 1);
                        counts[b] += 1;
                    }
                    None => missing += 1,
                }
            }
            GroupCounts { group: g, counts, missing }
        })
        .collect();
    Ok(Histogram { feature: feature.to_string(), edges, groups })
}
