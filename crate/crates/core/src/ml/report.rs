//! Versioned saliency report.

use std::cmp::Ordering;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::metrics::{Confusion, RocBand};
use super::PipelineConfig;
use crate::io::metadata::{Group, Sex};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let (mean, std) = super::mean_std(values);
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub accuracy: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub auc: MeanStd,
    /// Folds where precision had no positive predictions.
    pub precision_undefined_folds: usize,
    pub recall_undefined_folds: usize,
}

/// One cross-validation trial (a test fold of one repetition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocTrial {
    pub repetition: usize,
    pub fold: usize,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub band: RocBand,
    pub trials: Vec<RocTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSaliency {
    pub name: String,
    pub importance_mean: f64,
    pub importance_std: f64,
    /// Mann-Whitney p between groups over the cohort's scans; absent when a
    /// group has no unflagged value.
    pub p_value: Option<f64>,
    pub u: Option<f64>,
    /// Folds in which the feature was among the classifier's top m.
    pub selected_count: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPrediction {
    pub scan_id: String,
    pub subject_id: String,
    pub visit_date: NaiveDate,
    pub age: f64,
    pub sex: Sex,
    pub label: Group,
    /// Mean P(disease) over the scan's test appearances.
    pub p_mean: f64,
    pub p_std: f64,
    pub n_evaluations: usize,
    pub prediction: Group,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSizes {
    pub disease_subjects: usize,
    pub control_subjects: usize,
    pub disease_scans: usize,
    pub control_scans: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: u32,
    pub region_name: String,
    pub top_m: usize,
    pub group_sizes: GroupSizes,
    pub performance: Performance,
    pub roc: RocSummary,
    /// Summed over all c x k test folds.
    pub confusion: Confusion,
    pub features: Vec<FeatureSaliency>,
    /// Sorted by scan id.
    pub subjects: Vec<SubjectPrediction>,
    /// SVM fits that stopped at the iteration cap.
    pub unconverged_fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionError {
    pub region: u32,
    pub region_name: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyReport {
    pub version: u32,
    pub config: PipelineConfig,
    pub k: usize,
    pub c: usize,
    /// Sorted by mean accuracy desc, then accuracy std asc, then region id.
    pub regions: Vec<RegionReport>,
    pub errors: Vec<RegionError>,
}

pub fn saliency_order(a: &RegionReport, b: &RegionReport) -> Ordering {
    let (pa, pb) = (&a.performance.accuracy, &b.performance.accuracy);
    pb.mean
        .total_cmp(&pa.mean)
        .then(pa.std.total_cmp(&pb.std))
        .then(a.region.cmp(&b.region))
}

impl SaliencyReport {
    pub fn region(&self, region: u32) -> Option<&RegionReport> {
        self.regions.iter().find(|r| r.region == region)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
