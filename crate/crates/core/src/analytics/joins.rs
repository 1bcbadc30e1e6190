//! Report/matrix joins for the prediction scatter and the subject timeline.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::io::metadata::Group;
use crate::matrix::FeatureMatrix;
use crate::ml::mean_std;
use crate::ml::report::RegionReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Triangle,
}

/// Glyph of a subject: fill by true class, shape by correctness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Glyph {
    pub fill: Group,
    pub shape: Shape,
}

impl Glyph {
    pub fn of(label: Group, correct: bool) -> Self {
        Self { fill: label, shape: if correct { Shape::Circle } else { Shape::Triangle } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPoint {
    pub scan_id: String,
    pub subject_id: String,
    /// Absent when the feature is flagged for this scan.
    pub value: Option<f64>,
    pub p_mean: f64,
    pub p_std: f64,
    pub label: Group,
    pub prediction: Group,
    pub correct: bool,
    pub glyph: Glyph,
}

/// Scans evaluated in the report, with their feature value.
pub fn prediction_feature_points(
    report: &RegionReport,
    matrix: &FeatureMatrix,
    feature: &str,
) -> Result<Vec<PredictionPoint>, AnalyticsError> {
    let j = matrix.feature_index(feature)?;
    let by_scan = matrix.row_by_scan();
    Ok(report
        .subjects
        .iter()
        .filter(|s| s.n_evaluations > 0)
        .map(|s| PredictionPoint {
            scan_id: s.scan_id.clone(),
            subject_id: s.subject_id.clone(),
            value: by_scan.get(s.scan_id.as_str()).and_then(|&i| matrix.rows[i].value(j)),
            p_mean: s.p_mean,
            p_std: s.p_std,
            label: s.label,
            prediction: s.prediction,
            correct: s.correct,
            glyph: Glyph::of(s.label, s.correct),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    pub scan_id: String,
    pub visit_date: NaiveDate,
    pub value: Option<f64>,
    /// Mean P(disease) when the scan was evaluated.
    pub p_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub subject_id: String,
    pub feature: String,
    pub visits: Vec<TimelinePoint>,
    /// Control-group mean and std of the feature over all control scans.
    pub control_reference: Option<Reference>,
}

pub fn subject_timeline(
    report: Option<&RegionReport>,
    matrix: &FeatureMatrix,
    subject_id: &str,
    feature: &str,
) -> Result<Timeline, AnalyticsError> {
    let j = matrix.feature_index(feature)?;
    let mut visits: Vec<TimelinePoint> = matrix
        .rows
        .iter()
        .filter(|r| r.meta.subject_id == subject_id)
        .map(|r| TimelinePoint {
            scan_id: r.meta.scan_id.clone(),
            visit_date: r.meta.visit_date,
            value: r.value(j),
            p_mean: report
                .and_then(|rep| rep.subjects.iter().find(|s| s.scan_id == r.meta.scan_id))
                .filter(|s| s.n_evaluations > 0)
                .map(|s| s.p_mean),
        })
        .collect();
    if visits.is_empty() {
        return Err(AnalyticsError::UnknownSubject(subject_id.to_string()));
    }
    visits.sort_by(|a, b| a.visit_date.cmp(&b.visit_date).then(a.scan_id.cmp(&b.scan_id)));
    let control: Vec<f64> =
        matrix.rows.iter().filter(|r| r.meta.group == Group::Control).filter_map(|r| r.value(j)).collect();
    let control_reference = (!control.is_empty()).then(|| {
        let (mean, std) = mean_std(&control);
        Reference { mean, std, n: control.len() }
    });
    Ok(Timeline { subject_id: subject_id.to_string(), feature: feature.to_string(), visits, control_reference })
}
