//! Per-region cross-validated saliency pipeline and the multi-region driver.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;

use super::folds::FoldPlan;
use super::metrics::{classification_metrics, roc_curve, vertical_average, Confusion, RocCurve, DEFAULT_THRESHOLD};
use super::preprocess::{mean_row, FoldStats};
use super::report::{
    saliency_order, FeatureSaliency, GroupSizes, MeanStd, Performance, RegionError, RegionReport, RocSummary,
    RocTrial, SaliencyReport, SubjectPrediction, REPORT_VERSION,
};
use super::stats::mann_whitney_u;
use super::svm::{train_svm, SvmParams};
use super::trees::{feature_importances, Columns, ExtraTreesParams};
use super::{MlError, PipelineConfig, VisitRows};
use crate::io::metadata::Group;
use crate::matrix::{FeatureMatrix, FeatureRow};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub regions_done: usize,
    pub regions_total: usize,
}

pub type ProgressFn = Arc<dyn Fn(Progress) + Send + Sync>;

#[derive(Clone, Default)]
pub struct RunOptions {
    /// Evaluate regions on the rayon pool.
    pub parallel: bool,
    pub progress: Option<ProgressFn>,
}

impl std::fmt::Debug for RunOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunOptions")
            .field("parallel", &self.parallel)
            .field("progress", &self.progress.is_some())
            .finish()
    }
}

pub fn region_seed(master: u64, region: u32) -> u64 {
    seed::derive(master, &[seed::tag("region"), u64::from(region)])
}

pub fn fold_seed(region_seed: u64, repetition: usize, fold: usize) -> u64 {
    seed::derive(region_seed, &[repetition as u64, fold as u64])
}

/// Top `m` features by importance, ties broken by column index.
pub fn top_features(importances: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..importances.len()).collect();
    idx.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

struct FoldOutcome {
    importances: Vec<f64>,
    selected: Vec<usize>,
    /// (row index, P(disease))
    predictions: Vec<(usize, f64)>,
    metrics: super::metrics::Metrics,
    roc: Option<RocCurve>,
    converged: bool,
}

/// Rows of the matrix that belong to planned subjects, with subject indices.
struct Cohort<'a> {
    rows: Vec<&'a FeatureRow>,
    subject_of: Vec<usize>,
}

fn cohort_rows<'a>(matrix: &'a FeatureMatrix, plan: &FoldPlan) -> Result<Cohort<'a>, MlError> {
    let index = plan.subject_index();
    let mut rows = Vec::new();
    let mut subject_of = Vec::new();
    let mut seen = vec![false; plan.n_subjects()];
    for row in &matrix.rows {
        let Some(&s) = index.get(row.meta.subject_id.as_str()) else { continue };
        if plan.subjects[s].1 != row.meta.group {
            return Err(MlError::DegenerateData(format!(
                "scan {} is labeled {} but subject {} is planned as {}",
                row.meta.scan_id, row.meta.group, row.meta.subject_id, plan.subjects[s].1
            )));
        }
        if row.values.len() != matrix.n_features() || row.values.iter().any(|v| !v.is_finite()) {
            return Err(MlError::DegenerateData(format!("scan {} has malformed values", row.meta.scan_id)));
        }
        seen[s] = true;
        rows.push(row);
        subject_of.push(s);
    }
    if let Some(s) = seen.iter().position(|&b| !b) {
        return Err(MlError::DegenerateData(format!("planned subject {} has no rows", plan.subjects[s].0)));
    }
    Ok(Cohort { rows, subject_of })
}

/// Training rows of one fold: every row of a subject outside the test fold,
/// or one averaged row per such subject.
fn training_rows(cohort: &Cohort<'_>, plan: &FoldPlan, visit_rows: VisitRows, repetition: usize, fold: usize) -> Vec<FeatureRow> {
    let in_train = |i: &usize| plan.fold_of(repetition, cohort.subject_of[*i]) != fold;
    match visit_rows {
        VisitRows::Each => (0..cohort.rows.len()).filter(in_train).map(|i| cohort.rows[i].clone()).collect(),
        VisitRows::SubjectMean => {
            let mut by_subject: BTreeMap<usize, Vec<&FeatureRow>> = BTreeMap::new();
            for i in (0..cohort.rows.len()).filter(in_train) {
                by_subject.entry(cohort.subject_of[i]).or_default().push(cohort.rows[i]);
            }
            by_subject.values().map(|rows| mean_row(rows)).collect()
        }
    }
}

/// Imputation and scaling statistics of one fold, fitted exactly as the
/// pipeline fits them.
pub fn fold_stats(
    matrix: &FeatureMatrix,
    plan: &FoldPlan,
    visit_rows: VisitRows,
    repetition: usize,
    fold: usize,
) -> Result<FoldStats, MlError> {
    let cohort = cohort_rows(matrix, plan)?;
    let rows = training_rows(&cohort, plan, visit_rows, repetition, fold);
    Ok(FoldStats::fit(&rows.iter().collect::<Vec<_>>()))
}

fn run_fold(
    cohort: &Cohort<'_>,
    plan: &FoldPlan,
    config: &PipelineConfig,
    n_features: usize,
    repetition: usize,
    fold: usize,
    seed: u64,
) -> Result<FoldOutcome, MlError> {
    let in_test = |i: usize| plan.fold_of(repetition, cohort.subject_of[i]) == fold;
    let test: Vec<usize> = (0..cohort.rows.len()).filter(|&i| in_test(i)).collect();
    let train_rows = training_rows(cohort, plan, config.visit_rows, repetition, fold);
    let train_refs: Vec<&FeatureRow> = train_rows.iter().collect();
    let stats = FoldStats::fit(&train_refs);
    let x_train: Vec<Vec<f64>> = train_rows.iter().map(|r| stats.transform(r)).collect();
    let y_train: Vec<bool> = train_rows.iter().map(|r| r.meta.group.is_disease()).collect();

    let importances = feature_importances(
        &Columns::from_rows(&x_train),
        &y_train,
        &ExtraTreesParams {
            n_trees: config.n_trees,
            max_features: config.candidate_features(n_features),
            seed: seed::derive(seed, &[seed::tag("trees")]),
        },
    )?;
    let selected = top_features(&importances, config.top_m.resolve(n_features));
    let params = SvmParams { cost: config.svm_cost, tolerance: config.svm_tolerance, max_iter: config.svm_max_iter };
    let model = train_svm(&x_train, &y_train, &selected, &params, seed::derive(seed, &[seed::tag("svm")]))?;

    let mut probs = Vec::with_capacity(test.len());
    let mut labels = Vec::with_capacity(test.len());
    let mut predictions = Vec::with_capacity(test.len());
    for &i in &test {
        let p = model.probability(&stats.transform(cohort.rows[i]));
        probs.push(p);
        labels.push(cohort.rows[i].meta.group.is_disease());
        predictions.push((i, p));
    }
    let metrics = classification_metrics(&probs, &labels, DEFAULT_THRESHOLD)?;
    let roc = roc_curve(&probs, &labels).ok();
    Ok(FoldOutcome { importances, selected, predictions, metrics, roc, converged: model.converged })
}

fn run_region(
    matrix: &FeatureMatrix,
    plan: &FoldPlan,
    config: &PipelineConfig,
    parallel_folds: bool,
) -> Result<RegionReport, MlError> {
    let n_features = matrix.n_features();
    if n_features == 0 {
        return Err(MlError::EmptyInput("matrix has no features"));
    }
    let cohort = cohort_rows(matrix, plan)?;
    let rseed = region_seed(config.seed, matrix.region);
    let trials: Vec<(usize, usize)> = (0..plan.c).flat_map(|r| (0..plan.k).map(move |f| (r, f))).collect();
    let run = |&(r, f): &(usize, usize)| {
        run_fold(&cohort, plan, config, n_features, r, f, fold_seed(rseed, r, f))
            .map_err(|e| MlError::InFold { repetition: r, fold: f, source: Box::new(e) })
    };
    let outcomes: Vec<FoldOutcome> = if parallel_folds {
        trials.par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        trials.iter().map(run).collect::<Result<_, _>>()?
    };

    let n_samples = outcomes.len();
    let mut acc = Vec::with_capacity(n_samples);
    let mut prec = Vec::with_capacity(n_samples);
    let mut rec = Vec::with_capacity(n_samples);
    let mut f1 = Vec::with_capacity(n_samples);
    let mut auc = Vec::new();
    let mut confusion = Confusion::default();
    let (mut prec_undef, mut rec_undef) = (0, 0);
    let mut roc_trials = Vec::new();
    let mut per_scan: Vec<Vec<f64>> = vec![Vec::new(); cohort.rows.len()];
    let mut imp_samples: Vec<Vec<f64>> = vec![Vec::with_capacity(n_samples); n_features];
    let mut selected_count = vec![0usize; n_features];
    let mut unconverged = 0;
    for ((r, f), o) in trials.iter().zip(&outcomes) {
        acc.push(o.metrics.accuracy);
        prec.push(o.metrics.precision);
        rec.push(o.metrics.recall);
        f1.push(o.metrics.f1);
        prec_undef += usize::from(o.metrics.precision_undefined);
        rec_undef += usize::from(o.metrics.recall_undefined);
        confusion.add(&o.metrics.confusion);
        if let Some(c) = &o.roc {
            auc.push(c.auc);
            roc_trials.push((RocTrial { repetition: *r, fold: *f, fpr: c.fpr.clone(), tpr: c.tpr.clone(), auc: c.auc }, c));
        }
        for &(i, p) in &o.predictions {
            per_scan[i].push(p);
        }
        for (j, &v) in o.importances.iter().enumerate() {
            imp_samples[j].push(v);
        }
        for &j in &o.selected {
            selected_count[j] += 1;
        }
        unconverged += usize::from(!o.converged);
    }
    let band = vertical_average(&roc_trials.iter().map(|(_, c)| *c).collect::<Vec<_>>());
    let roc = RocSummary { band, trials: roc_trials.into_iter().map(|(t, _)| t).collect() };

    let features = (0..n_features)
        .map(|j| {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for row in &cohort.rows {
                if let Some(v) = row.value(j) {
                    if row.meta.group.is_disease() {
                        a.push(v);
                    } else {
                        b.push(v);
                    }
                }
            }
            let test = mann_whitney_u(&a, &b).ok();
            let imp = MeanStd::of(&imp_samples[j]);
            FeatureSaliency {
                name: matrix.feature_names[j].clone(),
                importance_mean: imp.mean,
                importance_std: imp.std,
                p_value: test.map(|t| t.p),
                u: test.map(|t| t.u),
                selected_count: selected_count[j],
                n_samples,
            }
        })
        .collect();

    let mut subjects: Vec<SubjectPrediction> = cohort
        .rows
        .iter()
        .zip(&per_scan)
        .map(|(row, ps)| {
            let s = MeanStd::of(ps);
            let prediction = if s.mean >= DEFAULT_THRESHOLD { Group::Disease } else { Group::Control };
            SubjectPrediction {
                scan_id: row.meta.scan_id.clone(),
                subject_id: row.meta.subject_id.clone(),
                visit_date: row.meta.visit_date,
                age: row.meta.age,
                sex: row.meta.sex,
                label: row.meta.group,
                p_mean: s.mean,
                p_std: s.std,
                n_evaluations: ps.len(),
                prediction,
                correct: prediction == row.meta.group,
            }
        })
        .collect();
    subjects.sort_by(|a, b| a.scan_id.cmp(&b.scan_id));

    let (disease_subjects, control_subjects) = plan.group_sizes();
    let disease_scans = cohort.rows.iter().filter(|r| r.meta.group.is_disease()).count();
    Ok(RegionReport {
        region: matrix.region,
        region_name: matrix.region_name.clone(),
        top_m: config.top_m.resolve(n_features),
        group_sizes: GroupSizes {
            disease_subjects,
            control_subjects,
            disease_scans,
            control_scans: cohort.rows.len() - disease_scans,
        },
        performance: Performance {
            accuracy: MeanStd::of(&acc),
            precision: MeanStd::of(&prec),
            recall: MeanStd::of(&rec),
            f1: MeanStd::of(&f1),
            auc: MeanStd::of(&auc),
            precision_undefined_folds: prec_undef,
            recall_undefined_folds: rec_undef,
        },
        roc,
        confusion,
        features,
        subjects,
        unconverged_fits: unconverged,
    })
}

/// Cross-validated saliency of one region under a shared fold plan.
pub fn run_region_pipeline(
    matrix: &FeatureMatrix,
    plan: &FoldPlan,
    config: &PipelineConfig,
) -> Result<RegionReport, MlError> {
    check_plan(plan, config)?;
    run_region(matrix, plan, config, false)
}

fn check_plan(plan: &FoldPlan, config: &PipelineConfig) -> Result<(), MlError> {
    let (d, c) = plan.group_sizes();
    config.validate(Some(d.min(c)))?;
    if plan.k != config.k || plan.c != config.c {
        return Err(MlError::InvalidConfig(format!(
            "fold plan is {}x{} but config asks for k = {}, c = {}",
            plan.k, plan.c, config.k, config.c
        )));
    }
    Ok(())
}

/// Evaluate every region independently. A region that fails is recorded in
/// `errors`; only an invalid config or plan fails the whole run.
pub fn run_all_regions(
    matrices: &[FeatureMatrix],
    plan: &FoldPlan,
    config: &PipelineConfig,
    options: &RunOptions,
) -> Result<SaliencyReport, MlError> {
    check_plan(plan, config)?;
    let total = matrices.len();
    let done = AtomicUsize::new(0);
    let one = |m: &FeatureMatrix| {
        let out = run_region(m, plan, config, false);
        let regions_done = done.fetch_add(1, Ordering::SeqCst) + 1;
        if let Some(cb) = &options.progress {
            cb(Progress { regions_done, regions_total: total });
        }
        out
    };
    let results: Vec<Result<RegionReport, MlError>> = if options.parallel {
        matrices.par_iter().map(one).collect()
    } else {
        matrices.iter().map(one).collect()
    };

    let mut regions = Vec::new();
    let mut errors = Vec::new();
    for (m, r) in matrices.iter().zip(results) {
        match r {
            Ok(rep) => regions.push(rep),
            Err(e) => errors.push(RegionError { region: m.region, region_name: m.region_name.clone(), message: e.to_string() }),
        }
    }
    regions.sort_by(saliency_order);
    errors.sort_by_key(|e| e.region);
    Ok(SaliencyReport { version: REPORT_VERSION, config: config.clone(), k: plan.k, c: plan.c, regions, errors })
}

/// Subjects and classes of a matrix, for building a fold plan.
pub fn subjects_of(matrix: &FeatureMatrix) -> Vec<(String, Group)> {
    let mut s: Vec<(String, Group)> = matrix.rows.iter().map(|r| (r.meta.subject_id.clone(), r.meta.group)).collect();
    s.sort();
    s.dedup();
    s
}
