//! Threshold metrics, ROC curves, and vertical averaging of ROC trials.

use serde::{Deserialize, Serialize};

use super::MlError;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const ROC_GRID_POINTS: usize = 101;

/// Disease is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// No positive predictions; precision reported as 0.
    pub precision_undefined: bool,
    /// No positive labels; recall reported as 0.
    pub recall_undefined: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Metrics of `probabilities >= threshold` against `labels`.
pub fn classification_metrics(probabilities: &[f64], labels: &[bool], threshold: f64) -> Result<Metrics, MlError> {
    if probabilities.len() != labels.len() {
        return Err(MlError::InvalidConfig(format!(
            "{} predictions but {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &l) in probabilities.iter().zip(labels) {
        match (p >= threshold, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(metrics_from_confusion(c))
}

pub fn metrics_from_confusion(c: Confusion) -> Metrics {
    let (accuracy, _) = ratio(c.tp + c.tn, c.total());
    let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Metrics { accuracy, precision, recall, f1, confusion: c, precision_undefined, recall_undefined }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    /// Score threshold reached at each point; the first point is `+inf`
    /// and is serialized as null.
    pub thresholds: Vec<Option<f64>>,
    pub auc: f64,
}

/// Threshold sweep over the unique scores, highest first.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve, MlError> {
    if scores.len() != labels.len() {
        return Err(MlError::InvalidConfig(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MlError::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let mut thresholds = vec![None];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        fpr.push(fp as f64 / neg as f64);
        tpr.push(tp as f64 / pos as f64);
        thresholds.push(Some(s));
    }
    let auc = fpr.windows(2).zip(tpr.windows(2)).map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) / 2.0).sum();
    Ok(RocCurve { fpr, tpr, thresholds, auc })
}

impl RocCurve {
    /// TPR at a given FPR: the upper end of a vertical segment, linear
    /// interpolation along sloped segments.
    pub fn tpr_at(&self, f: f64) -> f64 {
        let last = self.fpr.partition_point(|&x| x <= f);
        if last == 0 {
            return 0.0;
        }
        let i = last - 1;
        if i + 1 >= self.fpr.len() || self.fpr[i] == f {
            return self.tpr[i];
        }
        let (f0, f1) = (self.fpr[i], self.fpr[i + 1]);
        let (t0, t1) = (self.tpr[i], self.tpr[i + 1]);
        t0 + (t1 - t0) * (f - f0) / (f1 - f0)
    }
}

pub fn roc_grid() -> Vec<f64> {
    (0..ROC_GRID_POINTS).map(|i| i as f64 / (ROC_GRID_POINTS - 1) as f64).collect()
}

/// Vertically averaged ROC band over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocBand {
    pub fpr: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn vertical_average(curves: &[&RocCurve]) -> RocBand {
    let fpr = roc_grid();
    let mut band = RocBand { fpr: fpr.clone(), mean: vec![], std: vec![], min: vec![], max: vec![] };
    for &f in &fpr {
        let values: Vec<f64> = curves.iter().map(|c| c.tpr_at(f)).collect();
        let (m, s) = if values.is_empty() { (0.0, 0.0) } else { super::mean_std(&values) };
        band.mean.push(m);
        band.std.push(s);
        band.min.push(values.iter().copied().fold(f64::INFINITY, f64::min).min(m));
        band.max.push(values.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(m));
    }
    band
}
