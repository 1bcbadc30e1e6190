//! Saliency engine: repeated stratified k-fold CV per region, extremely
//! randomized trees for feature importance, a top-m linear SVM with Platt
//! probabilities, and the statistics reported alongside.

pub mod folds;
pub mod metrics;
pub mod pipeline;
pub mod platt;
pub mod preprocess;
pub mod report;
pub mod stats;
pub mod svm;
pub mod trees;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::metadata::Group;

pub use folds::{make_fold_plan, FoldPlan};
pub use pipeline::{run_all_regions, run_region_pipeline, RunOptions};
pub use report::SaliencyReport;

pub const MAX_TREES: usize = 1500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{group} has {found} subjects, fewer than k = {k}")]
    TooFewSubjects { group: Group, found: usize, k: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("ROC needs both classes")]
    OneClassOnly,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("repetition {repetition}, fold {fold}: {source}")]
    InFold {
        repetition: usize,
        fold: usize,
        #[source]
        source: Box<MlError>,
    },
}

/// How many top-ranked features the classifier sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "m")]
pub enum TopM {
    /// `ceil(sqrt(n_features))`
    SqrtN,
    Fixed(usize),
}

impl TopM {
    pub fn resolve(self, n_features: usize) -> usize {
        let m = match self {
            TopM::SqrtN => (n_features as f64).sqrt().ceil() as usize,
            TopM::Fixed(m) => m,
        };
        m.clamp(1, n_features.max(1))
    }
}

/// Training rows for subjects with several visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisitRows {
    /// Each scan is its own training row.
    #[default]
    Each,
    /// One averaged training row per subject.
    SubjectMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k: usize,
    pub c: usize,
    pub n_trees: usize,
    pub top_m: TopM,
    pub svm_cost: f64,
    pub seed: u64,
    /// Candidate features per tree node; `None` means `floor(sqrt(n))`.
    pub max_features: Option<usize>,
    pub visit_rows: VisitRows,
    pub svm_tolerance: f64,
    pub svm_max_iter: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 5,
            c: 10,
            n_trees: 150,
            top_m: TopM::SqrtN,
            svm_cost: 1.0,
            seed: 0,
            max_features: None,
            visit_rows: VisitRows::Each,
            svm_tolerance: 1e-6,
            svm_max_iter: 1_000_000,
        }
    }
}

impl PipelineConfig {
    /// Checks ranges; `min_class_size` is the smaller group's subject count.
    pub fn validate(&self, min_class_size: Option<usize>) -> Result<(), MlError> {
        let bad = |m: String| Err(MlError::InvalidConfig(m));
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if let Some(n) = min_class_size {
            if self.k > n {
                return bad(format!("k = {} exceeds the smallest class size {n}", self.k));
            }
        }
        if self.c < 1 {
            return bad("c must be at least 1".into());
        }
        if self.n_trees < 1 || self.n_trees > MAX_TREES {
            return bad(format!("n_trees must be in 1..={MAX_TREES}, got {}", self.n_trees));
        }
        if !(self.svm_cost > 0.0 && self.svm_cost.is_finite()) {
            return bad(format!("svm_cost must be positive, got {}", self.svm_cost));
        }
        if !(self.svm_tolerance > 0.0) {
            return bad("svm_tolerance must be positive".into());
        }
        if let TopM::Fixed(0) = self.top_m {
            return bad("top_m must select at least one feature".into());
        }
        if self.max_features == Some(0) {
            return bad("max_features must be positive".into());
        }
        Ok(())
    }

    pub fn candidate_features(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
            .clamp(1, n_features.max(1))
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_m_rule() {
        assert_eq!(TopM::SqrtN.resolve(48), 7);
        assert_eq!(TopM::SqrtN.resolve(40), 7);
        assert_eq!(TopM::SqrtN.resolve(49), 7);
        assert_eq!(TopM::Fixed(100).resolve(10), 10);
    }

    #[test]
    fn config_validation() {
        let cfg = PipelineConfig::default();
        assert!(cfg.validate(Some(68)).is_ok());
        assert!(cfg.validate(Some(4)).is_err());
        assert!(PipelineConfig { n_trees: 1501, ..cfg.clone() }.validate(None).is_err());
        assert!(PipelineConfig { k: 1, ..cfg.clone() }.validate(None).is_err());
        assert!(PipelineConfig { c: 0, ..cfg }.validate(None).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = PipelineConfig { top_m: TopM::Fixed(4), ..Default::default() };
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&json).unwrap(), cfg);
        let partial: PipelineConfig = serde_json::from_str(r#"{"k": 3}"#).unwrap();
        assert_eq!(partial.k, 3);
        assert_eq!(partial.n_trees, 150);
    }
}
