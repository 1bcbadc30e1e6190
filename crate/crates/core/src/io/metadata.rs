//! Cohort metadata CSV.
//!
//! Required columns: `subject_id, scan_id, visit_date, age, sex, group`.
//! Optional columns `tracks`, `labels` and `volumes` (`FA=path;MO=path`)
//! override the dataset's default file layout for that scan.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetadataError {
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("duplicate scan ({subject_id}, {scan_id}) on line {line}")]
    DuplicateScanId { subject_id: String, scan_id: String, line: u64 },
    #[error("line {line}: bad date {value:?} (expected YYYY-MM-DD)")]
    BadDate { line: u64, value: String },
    #[error("line {line}: bad {column} value {value:?}")]
    ParseError { line: u64, column: &'static str, value: String },
    #[error("line {line}: unknown group label {value:?} (expected PD or HC)")]
    UnknownGroup { line: u64, value: String },
    #[error("csv: {0}")]
    Csv(String),
}

/// Disease status. The disease group is the positive class throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Group {
    Disease,
    Control,
}

impl Group {
    pub fn is_disease(self) -> bool {
        self == Group::Disease
    }

    /// +1 for disease, -1 for control.
    pub fn sign(self) -> f64 {
        if self.is_disease() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PD" | "DISEASE" => Some(Group::Disease),
            "HC" | "CONTROL" => Some(Group::Control),
            _ => None,
        }
    }

    /// Short label used in CSV files.
    pub fn code(self) -> &'static str {
        match self {
            Group::Disease => "PD",
            Group::Control => "HC",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Disease => "DISEASE",
            Group::Control => "CONTROL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

impl Sex {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "M" | "m" => Some(Sex::M),
            "F" | "f" => Some(Sex::F),
            _ => None,
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::M => "M",
            Sex::F => "F",
        })
    }
}

/// Per-scan file overrides; `None` falls back to the dataset layout.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanFiles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracks: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub volumes: BTreeMap<String, String>,
}

/// One subject visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub subject_id: String,
    pub scan_id: String,
    pub visit_date: NaiveDate,
    pub age_at_scan: f64,
    pub sex: Sex,
    pub group: Group,
    #[serde(default)]
    pub files: ScanFiles,
}

const REQUIRED: [&str; 6] = ["subject_id", "scan_id", "visit_date", "age", "sex", "group"];

pub fn load_metadata(bytes: &[u8]) -> Result<Vec<ScanRecord>, MetadataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader.headers().map_err(|e| MetadataError::Csv(e.to_string()))?.clone();
    let column = |name: &'static str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = column(name).ok_or(MetadataError::MissingColumn(name))?;
    }
    let [subject_col, scan_col, date_col, age_col, sex_col, group_col] = idx;
    let tracks_col = column("tracks");
    let labels_col = column("labels");
    let volumes_col = column("volumes");

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| MetadataError::Csv(e.to_string()))?;
        // Header is line 1.
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| row.get(i).unwrap_or("").to_string();

        let subject_id = get(subject_col);
        let scan_id = get(scan_col);
        if subject_id.is_empty() {
            return Err(MetadataError::ParseError { line, column: "subject_id", value: subject_id });
        }
        if scan_id.is_empty() {
            return Err(MetadataError::ParseError { line, column: "scan_id", value: scan_id });
        }

        let date_raw = get(date_col);
        let visit_date = NaiveDate::parse_from_str(&date_raw, "%Y-%m-%d")
            .map_err(|_| MetadataError::BadDate { line, value: date_raw.clone() })?;

        let age_raw = get(age_col);
        let age_at_scan = age_raw
            .parse::<f64>()
            .ok()
            .filter(|a| a.is_finite() && *a > 0.0)
            .ok_or(MetadataError::ParseError { line, column: "age", value: age_raw })?;

        let sex_raw = get(sex_col);
        let sex = Sex::parse(&sex_raw).ok_or(MetadataError::ParseError { line, column: "sex", value: sex_raw })?;

        let group_raw = get(group_col);
        let group = Group::parse(&group_raw).ok_or(MetadataError::UnknownGroup { line, value: group_raw })?;

        let mut files = ScanFiles::default();
        let non_empty = |c: Option<usize>| c.map(get).filter(|s| !s.is_empty());
        files.tracks = non_empty(tracks_col);
        files.labels = non_empty(labels_col);
        if let Some(spec) = non_empty(volumes_col) {
            for item in spec.split(';').filter(|s| !s.trim().is_empty()) {
                let (measure, path) = item.split_once('=').ok_or(MetadataError::ParseError {
                    line,
                    column: "volumes",
                    value: item.to_string(),
                })?;
                files.volumes.insert(measure.trim().to_string(), path.trim().to_string());
            }
        }

        if !seen.insert((subject_id.clone(), scan_id.clone())) {
            return Err(MetadataError::DuplicateScanId { subject_id, scan_id, line });
        }
        out.push(ScanRecord { subject_id, scan_id, visit_date, age_at_scan, sex, group, files });
    }
    Ok(out)
}

/// Inverse of [`load_metadata`] for the required columns plus file overrides.
pub fn write_metadata(records: &[ScanRecord]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["subject_id", "scan_id", "visit_date", "age", "sex", "group", "tracks", "labels", "volumes"])
        .expect("in-memory write");
    for r in records {
        let volumes = r
            .files
            .volumes
            .iter()
            .map(|(m, p)| format!("{m}={p}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.subject_id.as_str(),
            r.scan_id.as_str(),
            &r.visit_date.format("%Y-%m-%d").to_string(),
            &r.age_at_scan.to_string(),
            &r.sex.to_string(),
            r.group.code(),
            r.files.tracks.as_deref().unwrap_or(""),
            r.files.labels.as_deref().unwrap_or(""),
            &volumes,
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "subject_id,scan_id,visit_date,age,sex,group\n";

    #[test]
    fn maps_group_codes() {
        let csv = format!("{HEADER}S1,V1,2015-03-02,61.5,M,PD\nS2,V1,2016-11-20,58,F,HC\n");
        let records = load_metadata(csv.as_bytes()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].group, Group::Disease);
        assert_eq!(records[1].group, Group::Control);
        assert_eq!(records[1].visit_date, NaiveDate::from_ymd_opt(2016, 11, 20).unwrap());
    }

    #[test]
    fn duplicate_scan_rejected() {
        let csv = format!("{HEADER}S1,V1,2015-03-02,61,M,PD\nS1,V1,2015-04-02,61,M,PD\n");
        assert!(matches!(load_metadata(csv.as_bytes()), Err(MetadataError::DuplicateScanId { line: 3, .. })));
    }

    #[test]
    fn bad_cells() {
        let csv = format!("{HEADER}S1,V1,2015-03-02,sixty,M,PD\n");
        assert!(matches!(
            load_metadata(csv.as_bytes()),
            Err(MetadataError::ParseError { column: "age", .. })
        ));
        let csv = format!("{HEADER}S1,V1,03/02/2015,60,M,PD\n");
        assert!(matches!(load_metadata(csv.as_bytes()), Err(MetadataError::BadDate { .. })));
        let csv = format!("{HEADER}S1,V1,2015-03-02,60,M,MSA\n");
        assert!(matches!(load_metadata(csv.as_bytes()), Err(MetadataError::UnknownGroup { .. })));
        let csv = format!("{HEADER}S1,V1,2015-03-02,0,M,PD\n");
        assert!(matches!(load_metadata(csv.as_bytes()), Err(MetadataError::ParseError { .. })));
    }

    #[test]
    fn missing_column() {
        let csv = "subject_id,scan_id,visit_date,age,group\nS1,V1,2015-03-02,60,PD\n";
        assert_eq!(load_metadata(csv.as_bytes()).unwrap_err(), MetadataError::MissingColumn("sex"));
    }

    #[test]
    fn file_overrides_round_trip() {
        let csv = "subject_id,scan_id,visit_date,age,sex,group,tracks,volumes\n\
                   S1,V1,2015-03-02,60,F,HC,t/a.tck,FA=v/fa.json;MO=v/mo.json\n";
        let records = load_metadata(csv.as_bytes()).unwrap();
        assert_eq!(records[0].files.tracks.as_deref(), Some("t/a.tck"));
        assert_eq!(records[0].files.volumes.get("MO").map(String::as_str), Some("v/mo.json"));
        assert_eq!(load_metadata(&write_metadata(&records)).unwrap(), records);
    }
}
