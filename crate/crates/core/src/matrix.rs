//! Per-region feature matrices and their CSV form.
//!
//! CSV layout: `scan_id, subject_id, group, age, sex, visit_date` followed by
//! one column per feature. Flagged (empty-bundle) cells are written as `NA`.

use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::metadata::{Group, ScanRecord, Sex};

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: bad {column} value {value:?}")]
    BadCell { line: u64, column: String, value: String },
    #[error("row width {found} does not match {expected} features")]
    Ragged { expected: usize, found: usize },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeatureFlag {
    Ok,
    EmptyBundle,
}

/// Demographic and identity columns carried by every matrix row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub scan_id: String,
    pub subject_id: String,
    pub group: Group,
    pub age: f64,
    pub sex: Sex,
    pub visit_date: NaiveDate,
}

impl From<&ScanRecord> for RowMeta {
    fn from(r: &ScanRecord) -> Self {
        Self {
            scan_id: r.scan_id.clone(),
            subject_id: r.subject_id.clone(),
            group: r.group,
            age: r.age_at_scan,
            sex: r.sex,
            visit_date: r.visit_date,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub meta: RowMeta,
    /// Flagged entries hold 0.
    pub values: Vec<f64>,
    pub flags: Vec<FeatureFlag>,
}

impl FeatureRow {
    pub fn value(&self, j: usize) -> Option<f64> {
        (self.flags[j] == FeatureFlag::Ok).then_some(self.values[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub region: u32,
    pub region_name: String,
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureMatrix {
    pub fn new(region: u32, region_name: impl Into<String>, feature_names: Vec<String>) -> Self {
        Self { region, region_name: region_name.into(), feature_names, rows: Vec::new() }
    }

    pub fn push(&mut self, row: FeatureRow) -> Result<(), MatrixError> {
        let expected = self.feature_names.len();
        if row.values.len() != expected || row.flags.len() != expected {
            return Err(MatrixError::Ragged { expected, found: row.values.len().max(row.flags.len()) });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize, MatrixError> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| MatrixError::UnknownFeature(name.to_string()))
    }

    pub fn row_by_scan(&self) -> HashMap<&str, usize> {
        self.rows.iter().enumerate().map(|(i, r)| (r.meta.scan_id.as_str(), i)).collect()
    }

    /// Unflagged values of one feature, with their row index.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows.iter().enumerate().filter_map(move |(i, r)| r.value(j).map(|v| (i, v)))
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let disease = self.rows.iter().filter(|r| r.meta.group.is_disease()).count();
        (disease, self.rows.len() - disease)
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = vec!["scan_id", "subject_id", "group", "age", "sex", "visit_date"];
        header.extend(self.feature_names.iter().map(String::as_str));
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![
                r.meta.scan_id.clone(),
                r.meta.subject_id.clone(),
                r.meta.group.code().to_string(),
                r.meta.age.to_string(),
                r.meta.sex.to_string(),
                r.meta.visit_date.format("%Y-%m-%d").to_string(),
            ];
            rec.extend(r.values.iter().zip(&r.flags).map(|(v, f)| match f {
                FeatureFlag::Ok => v.to_string(),
                FeatureFlag::EmptyBundle => "NA".to_string(),
            }));
            w.write_record(&rec).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn from_csv(region: u32, region_name: &str, bytes: &[u8]) -> Result<Self, MatrixError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let headers = reader.headers().map_err(|e| MatrixError::Csv(e.to_string()))?.clone();
        const META: [&str; 6] = ["scan_id", "subject_id", "group", "age", "sex", "visit_date"];
        for (i, name) in META.iter().enumerate() {
            if headers.get(i) != Some(name) {
                return Err(MatrixError::MissingColumn(name));
            }
        }
        let feature_names: Vec<String> = headers.iter().skip(META.len()).map(str::to_string).collect();
        let mut m = FeatureMatrix::new(region, region_name, feature_names);
        for rec in reader.records() {
            let rec = rec.map_err(|e| MatrixError::Csv(e.to_string()))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |column: &str, value: &str| MatrixError::BadCell {
                line,
                column: column.to_string(),
                value: value.to_string(),
            };
            let cell = |i: usize| rec.get(i).unwrap_or("");
            let group = Group::parse(cell(2)).ok_or_else(|| bad("group", cell(2)))?;
            let age = cell(3).parse::<f64>().map_err(|_| bad("age", cell(3)))?;
            let sex = Sex::parse(cell(4)).ok_or_else(|| bad("sex", cell(4)))?;
            let visit_date =
                NaiveDate::parse_from_str(cell(5), "%Y-%m-%d").map_err(|_| bad("visit_date", cell(5)))?;
            let meta = RowMeta {
                scan_id: cell(0).to_string(),
                subject_id: cell(1).to_string(),
                group,
                age,
                sex,
                visit_date,
            };
            let mut values = Vec::with_capacity(m.n_features());
            let mut flags = Vec::with_capacity(m.n_features());
            for (j, name) in m.feature_names.iter().enumerate() {
                let raw = cell(META.len() + j);
                if raw == "NA" || raw.is_empty() {
                    values.push(0.0);
                    flags.push(FeatureFlag::EmptyBundle);
                } else {
                    let v = raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(name, raw))?;
                    values.push(v);
                    flags.push(FeatureFlag::Ok);
                }
            }
            m.push(FeatureRow { meta, values, flags })?;
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMatrix {
        let mut m = FeatureMatrix::new(7, "SN", vec!["FN_roi".into(), "AFL_roi".into()]);
        for (i, (v, f)) in [(3.0, FeatureFlag::Ok), (0.0, FeatureFlag::EmptyBundle)].into_iter().enumerate() {
            m.push(FeatureRow {
                meta: RowMeta {
                    scan_id: format!("scan{i}"),
                    subject_id: format!("sub{i}"),
                    group: if i == 0 { Group::Disease } else { Group::Control },
                    age: 61.25 + i as f64,
                    sex: Sex::F,
                    visit_date: NaiveDate::from_ymd_opt(2014, 1, 2 + i as u32).unwrap(),
                },
                values: vec![1.0 / 3.0, v],
                flags: vec![FeatureFlag::Ok, f],
            })
            .unwrap();
        }
        m
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = sample();
        let back = FeatureMatrix::from_csv(7, "SN", &m.to_csv()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn ragged_rows_rejected() {
        let mut m = sample();
        let mut row = m.rows[0].clone();
        row.values.pop();
        assert!(matches!(m.push(row), Err(MatrixError::Ragged { .. })));
    }

    #[test]
    fn flagged_values_are_hidden() {
        let m = sample();
        assert_eq!(m.column(1).collect::<Vec<_>>(), vec![(0, 3.0)]);
        assert_eq!(m.class_counts(), (1, 1));
    }
}
