//! Read-only views of reports, analytics and fiber geometry.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use super::error::{ApiError, Params};
use super::jobs::{self, Job};
use super::{AppState, CohortEntry, DatasetEntry};
use crate::analytics::correlation::DEFAULT_EDGE_THRESHOLD;
use crate::analytics::joins::Glyph;
use crate::analytics::{self, MatrixMode, OrderedMatrix, Projection, TsneParams};
use crate::fibers::{collect_fibers, encode_payload, ColorMode, PayloadIndex};
use crate::io::metadata::{Group, ScanRecord};
use crate::matrix::FeatureMatrix;
use crate::ml::report::{FeatureSaliency, MeanStd, RegionReport, SubjectPrediction};
use crate::ml::SaliencyReport;
use crate::ml::mean_std;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortKey {
    #[default]
    Mean,
    Std,
    Id,
    /// Features only: Mann-Whitney p.
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    Asc,
    Desc,
}

fn direction(key: SortKey, order: Option<SortOrder>) -> SortOrder {
    order.unwrap_or(match key {
        SortKey::Mean => SortOrder::Desc,
        _ => SortOrder::Asc,
    })
}

fn apply<T>(items: &mut [T], order: SortOrder, cmp: impl Fn(&T, &T) -> std::cmp::Ordering) {
    items.sort_by(|a, b| match order {
        SortOrder::Asc => cmp(a, b),
        SortOrder::Desc => cmp(b, a),
    });
}

fn done_report(job: &Job) -> Result<Arc<SaliencyReport>, ApiError> {
    job.report().map(|(r, _)| r).ok_or_else(|| {
        let rec = job.record();
        ApiError::conflict("job_not_done", format!("job {} is {:?}", rec.job_id, rec.state))
    })
}

fn latest_done(state: &AppState) -> Option<Arc<Job>> {
    let jobs = state.0.jobs.read().unwrap();
    jobs.values().filter_map(|j| j.report().map(|(_, seq)| (seq, j.clone()))).max_by_key(|(seq, _)| *seq).map(|(_, j)| j)
}

/// The named job's report, or the most recently finished one.
fn report_for(state: &AppState, job: Option<&str>) -> Result<(Arc<Job>, Arc<SaliencyReport>), ApiError> {
    let job = match job {
        Some(id) => jobs::job(state, id)?,
        None => latest_done(state).ok_or_else(|| ApiError::not_found("no_report", "no finished pipeline job"))?,
    };
    let report = done_report(&job)?;
    Ok((job, report))
}

/// Cohort by id, else the job's cohort, else the latest finished job's.
fn cohort_for(state: &AppState, job: Option<&str>, cohort: Option<&str>) -> Result<Arc<CohortEntry>, ApiError> {
    if let Some(id) = cohort {
        return jobs::cohort(state, id);
    }
    let job = match job {
        Some(id) => jobs::job(state, id)?,
        None => latest_done(state).ok_or_else(|| ApiError::not_found("no_cohort", "give a cohort or job"))?,
    };
    Ok(job.cohort.clone())
}

/// The report for the cohort if a finished job ran on it.
fn report_of_cohort(state: &AppState, job: Option<&str>, cohort: &CohortEntry) -> Result<Option<Arc<SaliencyReport>>, ApiError> {
    if let Some(id) = job {
        return done_report(&*jobs::job(state, id)?).map(Some);
    }
    let jobs = state.0.jobs.read().unwrap();
    Ok(jobs
        .values()
        .filter(|j| j.cohort.id == cohort.id)
        .filter_map(|j| j.report())
        .max_by_key(|(_, seq)| *seq)
        .map(|(r, _)| r))
}

fn parse_region(s: &str) -> Result<u32, ApiError> {
    s.parse().map_err(|_| ApiError::not_found("unknown_region", format!("no region `{s}`")))
}

fn region_report(report: &SaliencyReport, region: u32) -> Result<&RegionReport, ApiError> {
    report.region(region).ok_or_else(|| ApiError::not_found("unknown_region", format!("no region {region} in the report")))
}

fn region_matrix(cohort: &CohortEntry, region: u32) -> Result<&FeatureMatrix, ApiError> {
    cohort
        .matrices
        .iter()
        .find(|m| m.region == region)
        .ok_or_else(|| ApiError::not_found("unknown_region", format!("no region {region}")))
}

fn parse_group(s: Option<&str>) -> Result<Option<Group>, ApiError> {
    match s {
        None | Some("all") => Ok(None),
        Some(g) => Group::parse(g).map(Some).ok_or_else(|| ApiError::unprocessable("bad_group", format!("unknown group `{g}`"))),
    }
}

/// The `n` most important features of a region.
fn top_names(rep: &RegionReport, n: usize) -> Vec<String> {
    let mut f: Vec<&FeatureSaliency> = rep.features.iter().collect();
    f.sort_by(|a, b| b.importance_mean.total_cmp(&a.importance_mean).then(a.name.cmp(&b.name)));
    f.into_iter().take(n).map(|f| f.name.clone()).collect()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

// ---- report views ----

#[derive(Debug, Deserialize)]
pub struct JobQuery {
    pub job: Option<String>,
}

pub async fn job_report(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SaliencyReport>, ApiError> {
    let report = done_report(&*jobs::job(&state, &id)?)?;
    Ok(Json((*report).clone()))
}

#[derive(Debug, Deserialize)]
pub struct RegionsQuery {
    pub job: Option<String>,
    #[serde(default)]
    pub sort: SortKey,
    pub order: Option<SortOrder>,
    /// Metric the mean/std sort refers to.
    #[serde(default)]
    pub metric: Metric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Accuracy,
    Precision,
    Recall,
    F1,
    Auc,
}

#[derive(Debug, Serialize)]
pub struct RegionSummary {
    pub region: u32,
    pub region_name: String,
    pub accuracy: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub auc: MeanStd,
    pub top_m: usize,
    pub group_sizes: crate::ml::report::GroupSizes,
    pub confusion: crate::ml::metrics::Confusion,
    pub unconverged_fits: usize,
}

#[derive(Debug, Serialize)]
pub struct RegionsView {
    pub job_id: String,
    pub regions: Vec<RegionSummary>,
    pub errors: Vec<crate::ml::report::RegionError>,
}

fn summary(r: &RegionReport) -> RegionSummary {
    let p = &r.performance;
    RegionSummary {
        region: r.region,
        region_name: r.region_name.clone(),
        accuracy: p.accuracy,
        precision: p.precision,
        recall: p.recall,
        f1: p.f1,
        auc: p.auc,
        top_m: r.top_m,
        group_sizes: r.group_sizes,
        confusion: r.confusion,
        unconverged_fits: r.unconverged_fits,
    }
}

pub async fn regions(State(state): State<AppState>, Params(q): Params<RegionsQuery>) -> Result<Json<RegionsView>, ApiError> {
    if q.sort == SortKey::P {
        return Err(ApiError::unprocessable("bad_sort", "regions sort by mean, std or id"));
    }
    let (job, report) = report_for(&state, q.job.as_deref())?;
    let mut regions: Vec<RegionSummary> = report.regions.iter().map(summary).collect();
    let pick = |s: &RegionSummary| match q.metric {
        Metric::Accuracy => s.accuracy,
        Metric::Precision => s.precision,
        Metric::Recall => s.recall,
        Metric::F1 => s.f1,
        Metric::Auc => s.auc,
    };
    let order = direction(q.sort, q.order);
    match q.sort {
        SortKey::Mean => apply(&mut regions, order, |a, b| pick(a).mean.total_cmp(&pick(b).mean).then(b.region.cmp(&a.region))),
        SortKey::Std => apply(&mut regions, order, |a, b| pick(a).std.total_cmp(&pick(b).std).then(a.region.cmp(&b.region))),
        _ => apply(&mut regions, order, |a, b| a.region.cmp(&b.region)),
    }
    Ok(Json(RegionsView { job_id: job.record().job_id, regions, errors: report.errors.clone() }))
}

pub async fn region(
    State(state): State<AppState>,
    Path(r): Path<String>,
    Params(q): Params<JobQuery>,
) -> Result<Json<RegionReport>, ApiError> {
    let (_, report) = report_for(&state, q.job.as_deref())?;
    Ok(Json(region_report(&report, parse_region(&r)?)?.clone()))
}

#[derive(Debug, Deserialize)]
pub struct ListQuery {
    pub job: Option<String>,
    #[serde(default)]
    pub sort: SortKey,
    pub order: Option<SortOrder>,
    pub region: Option<u32>,
}

#[derive(Debug, Serialize)]
pub struct FeatureEntry {
    /// Column in the region's matrix.
    pub column: usize,
    /// Position by mean importance, 0 = most important.
    pub rank: usize,
    pub in_top_m: bool,
    #[serde(flatten)]
    pub saliency: FeatureSaliency,
}

#[derive(Debug, Serialize)]
pub struct FeaturesView {
    pub region: u32,
    pub region_name: String,
    pub top_m: usize,
    pub features: Vec<FeatureEntry>,
}

pub async fn features(
    State(state): State<AppState>,
    Path(r): Path<String>,
    Params(q): Params<ListQuery>,
) -> Result<Json<FeaturesView>, ApiError> {
    let (_, report) = report_for(&state, q.job.as_deref())?;
    let rep = region_report(&report, parse_region(&r)?)?;
    let ranked = top_names(rep, rep.features.len());
    let mut features: Vec<FeatureEntry> = rep
        .features
        .iter()
        .enumerate()
        .map(|(column, f)| {
            let rank = ranked.iter().position(|n| *n == f.name).unwrap_or(column);
            FeatureEntry { column, rank, in_top_m: rank < rep.top_m, saliency: f.clone() }
        })
        .collect();
    let order = direction(q.sort, q.order);
    match q.sort {
        SortKey::Mean => apply(&mut features, order, |a, b| {
            a.saliency.importance_mean.total_cmp(&b.saliency.importance_mean).then(b.rank.cmp(&a.rank))
        }),
        SortKey::Std => apply(&mut features, order, |a, b| {
            a.saliency.importance_std.total_cmp(&b.saliency.importance_std).then(a.column.cmp(&b.column))
        }),
        SortKey::Id => apply(&mut features, order, |a, b| a.column.cmp(&b.column)),
        SortKey::P => apply(&mut features, order, |a, b| {
            let p = |f: &FeatureEntry| f.saliency.p_value.unwrap_or(f64::INFINITY);
            p(a).total_cmp(&p(b)).then(a.column.cmp(&b.column))
        }),
    }
    Ok(Json(FeaturesView { region: rep.region, region_name: rep.region_name.clone(), top_m: rep.top_m, features }))
}

#[derive(Debug, Serialize)]
pub struct SubjectEntry {
    #[serde(flatten)]
    pub prediction: SubjectPrediction,
    pub glyph: Glyph,
}

#[derive(Debug, Serialize)]
pub struct SubjectsView {
    pub region: u32,
    pub region_name: String,
    pub threshold: f64,
    pub subjects: Vec<SubjectEntry>,
}

/// Scan predictions of one region (default: the top-ranked region).
pub async fn subjects(State(state): State<AppState>, Params(q): Params<ListQuery>) -> Result<Json<SubjectsView>, ApiError> {
    if q.sort == SortKey::P {
        return Err(ApiError::unprocessable("bad_sort", "subjects sort by mean, std or id"));
    }
    let (_, report) = report_for(&state, q.job.as_deref())?;
    let rep = match q.region {
        Some(r) => region_report(&report, r)?,
        None => report.regions.first().ok_or_else(|| ApiError::not_found("unknown_region", "report has no regions"))?,
    };
    let mut subjects: Vec<SubjectEntry> = rep
        .subjects
        .iter()
        .map(|s| SubjectEntry { prediction: s.clone(), glyph: Glyph::of(s.label, s.correct) })
        .collect();
    let order = direction(q.sort, q.order);
    let id = |a: &SubjectEntry, b: &SubjectEntry| a.prediction.scan_id.cmp(&b.prediction.scan_id);
    match q.sort {
        SortKey::Mean => apply(&mut subjects, order, |a, b| a.prediction.p_mean.total_cmp(&b.prediction.p_mean).then(id(b, a))),
        SortKey::Std => apply(&mut subjects, order, |a, b| a.prediction.p_std.total_cmp(&b.prediction.p_std).then(id(a, b))),
        _ => apply(&mut subjects, order, id),
    }
    Ok(Json(SubjectsView {
        region: rep.region,
        region_name: rep.region_name.clone(),
        threshold: crate::ml::metrics::DEFAULT_THRESHOLD,
        subjects,
    }))
}

// ---- analytics ----

#[derive(Debug, Deserialize)]
pub struct CovarianceQuery {
    pub job: Option<String>,
    pub cohort: Option<String>,
    pub region: u32,
    pub mode: Option<MatrixMode>,
    pub group: Option<String>,
    /// Restrict to the `top` most important features of the region.
    pub top: Option<usize>,
    pub edge_threshold: Option<f64>,
}

fn feature_subset(
    state: &AppState,
    job: Option<&str>,
    cohort: &CohortEntry,
    region: u32,
    top: Option<usize>,
) -> Result<Option<Vec<String>>, ApiError> {
    let Some(n) = top else { return Ok(None) };
    let report = report_of_cohort(state, job, cohort)?
        .ok_or_else(|| ApiError::conflict("report_unavailable", "feature ranking needs a finished job"))?;
    Ok(Some(top_names(region_report(&report, region)?, n)))
}

pub async fn covariance(State(state): State<AppState>, Params(q): Params<CovarianceQuery>) -> Result<Json<OrderedMatrix>, ApiError> {
    let cohort = cohort_for(&state, q.job.as_deref(), q.cohort.as_deref())?;
    let group = parse_group(q.group.as_deref())?;
    let features = feature_subset(&state, q.job.as_deref(), &cohort, q.region, q.top)?;
    region_matrix(&cohort, q.region)?;
    let out = blocking(move || {
        let m = region_matrix(&cohort, q.region)?;
        Ok(analytics::ordered_matrix(
            m,
            group,
            q.mode.unwrap_or(MatrixMode::Correlation),
            features.as_deref(),
            q.edge_threshold.unwrap_or(DEFAULT_EDGE_THRESHOLD),
        )?)
    })
    .await?;
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
pub struct TrendsQuery {
    pub job: Option<String>,
    pub cohort: Option<String>,
    pub region: u32,
    pub feature: String,
    #[serde(default)]
    pub split_by_sex: bool,
}

pub async fn trends(State(state): State<AppState>, Params(q): Params<TrendsQuery>) -> Result<Json<analytics::TrendSeries>, ApiError> {
    let cohort = cohort_for(&state, q.job.as_deref(), q.cohort.as_deref())?;
    let m = region_matrix(&cohort, q.region)?;
    Ok(Json(analytics::trend_series(m, &q.feature, q.split_by_sex)?))
}

#[derive(Debug, Deserialize)]
pub struct HistogramQuery {
    pub job: Option<String>,
    pub cohort: Option<String>,
    pub region: u32,
    pub feature: String,
    pub group: Option<String>,
}

pub async fn histogram(State(state): State<AppState>, Params(q): Params<HistogramQuery>) -> Result<Json<analytics::Histogram>, ApiError> {
    let cohort = cohort_for(&state, q.job.as_deref(), q.cohort.as_deref())?;
    let m = region_matrix(&cohort, q.region)?;
    Ok(Json(analytics::histogram(m, &q.feature, parse_group(q.group.as_deref())?)?))
}

#[derive(Debug, Deserialize)]
pub struct ProjectionQuery {
    pub job: Option<String>,
    pub cohort: Option<String>,
    pub region: u32,
    pub top: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub perplexity: Option<f64>,
    pub iterations: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct ProjectionView {
    #[serde(flatten)]
    pub projection: Projection,
    pub subject_ids: Vec<String>,
    pub groups: Vec<Group>,
}

pub async fn projection(State(state): State<AppState>, Params(q): Params<ProjectionQuery>) -> Result<Json<ProjectionView>, ApiError> {
    let cohort = cohort_for(&state, q.job.as_deref(), q.cohort.as_deref())?;
    let features = feature_subset(&state, q.job.as_deref(), &cohort, q.region, q.top)?;
    region_matrix(&cohort, q.region)?;
    let defaults = TsneParams::default();
    let params = TsneParams {
        iterations: q.iterations.unwrap_or(defaults.iterations).min(5000),
        perplexity: q.perplexity,
        seed: q.seed,
        ..defaults
    };
    let out = blocking(move || {
        let m = region_matrix(&cohort, q.region)?;
        let projection = analytics::project_2d(m, features.as_deref(), &params)?;
        let by_scan = m.row_by_scan();
        let rows: Vec<_> = projection.scan_ids.iter().map(|s| &m.rows[by_scan[s.as_str()]].meta).collect();
        Ok(ProjectionView {
            subject_ids: rows.iter().map(|r| r.subject_id.clone()).collect(),
            groups: rows.iter().map(|r| r.group).collect(),
            projection,
        })
    })
    .await?;
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
pub struct PredFeatureQuery {
    pub job: Option<String>,
    pub region: u32,
    pub feature: String,
}

#[derive(Debug, Serialize)]
pub struct PredFeatureView {
    pub threshold: f64,
    pub points: Vec<analytics::PredictionPoint>,
}

pub async fn pred_feature(State(state): State<AppState>, Params(q): Params<PredFeatureQuery>) -> Result<Json<PredFeatureView>, ApiError> {
    let (job, report) = report_for(&state, q.job.as_deref())?;
    let rep = region_report(&report, q.region)?;
    let m = region_matrix(&job.cohort, q.region)?;
    Ok(Json(PredFeatureView {
        threshold: crate::ml::metrics::DEFAULT_THRESHOLD,
        points: analytics::prediction_feature_points(rep, m, &q.feature)?,
    }))
}

#[derive(Debug, Deserialize)]
pub struct TimelineQuery {
    pub job: Option<String>,
    pub cohort: Option<String>,
    pub region: u32,
    pub subject: String,
    pub feature: String,
}

pub async fn timeline(State(state): State<AppState>, Params(q): Params<TimelineQuery>) -> Result<Json<analytics::Timeline>, ApiError> {
    let cohort = cohort_for(&state, q.job.as_deref(), q.cohort.as_deref())?;
    let report = report_of_cohort(&state, q.job.as_deref(), &cohort)?;
    let rep = report.as_ref().and_then(|r| r.region(q.region));
    let m = region_matrix(&cohort, q.region)?;
    Ok(Json(analytics::subject_timeline(rep, m, &q.subject, &q.feature)?))
}

// ---- fibers ----

#[derive(Debug, Deserialize)]
pub struct FibersQuery {
    pub job: Option<String>,
    pub cohort: Option<String>,
    pub dataset: Option<String>,
    /// Absent for the whole brain.
    pub region: Option<u32>,
    pub measure: Option<String>,
    #[serde(default)]
    pub mode: ColorMode,
    #[serde(default)]
    pub log_scale: bool,
}

/// Control mean of the measure's ROI feature for each region.
fn control_means(cohort: &CohortEntry, measure: &str) -> Result<BTreeMap<u32, f64>, ApiError> {
    let name = format!("M{measure}_roi");
    let mut out = BTreeMap::new();
    for m in &cohort.matrices {
        let j = m
            .feature_index(&name)
            .map_err(|_| ApiError::not_found("measure_unavailable", format!("no feature `{name}`")))?;
        let values: Vec<f64> = m.rows.iter().filter(|r| r.meta.group == Group::Control).filter_map(|r| r.value(j)).collect();
        if !values.is_empty() {
            out.insert(m.region, mean_std(&values).0);
        }
    }
    Ok(out)
}

struct Rendered {
    index: crate::fibers::FiberSet,
    values: Vec<f64>,
}

fn render(
    ds: &DatasetEntry,
    record: &ScanRecord,
    q: &FibersQuery,
    measure: &str,
    refs: &BTreeMap<u32, f64>,
) -> Result<Rendered, ApiError> {
    let volume = ds.dataset.load_measure(record, measure)?;
    let streamlines = ds.dataset.load_tracks(record)?;
    let labels = ds.dataset.load_label_volume(record)?;
    let set = collect_fibers(&streamlines, &labels, &volume, q.region);
    let values = set.display_values(q.mode, refs, q.region, q.log_scale);
    Ok(Rendered { index: set, values })
}

fn extend_range(range: [f64; 2], values: &[f64]) -> [f64; 2] {
    values.iter().fold(range, |[lo, hi], &v| [lo.min(v), hi.max(v)])
}

pub async fn fibers(
    State(state): State<AppState>,
    Path(scan): Path<String>,
    Params(q): Params<FibersQuery>,
) -> Result<Response, ApiError> {
    let cohort = if q.job.is_some() || q.cohort.is_some() {
        Some(cohort_for(&state, q.job.as_deref(), q.cohort.as_deref())?)
    } else {
        None
    };
    let ds = match (&cohort, &q.dataset) {
        (Some(c), _) => c.dataset.clone(),
        (None, Some(id)) => jobs::dataset(&state, id)?,
        (None, None) => latest_done(&state)
            .map(|j| j.cohort.dataset.clone())
            .ok_or_else(|| ApiError::not_found("unknown_dataset", "give a dataset, cohort or job"))?,
    };
    let record = ds
        .dataset
        .record(&scan)
        .cloned()
        .ok_or_else(|| ApiError::not_found("unknown_scan", format!("no scan `{scan}`")))?;
    let measure = match &q.measure {
        Some(m) => m.clone(),
        None => ds.dataset.manifest.features.measures.first().cloned().unwrap_or_else(|| "FA".into()),
    };
    let references = match (q.mode, &cohort) {
        (ColorMode::Direct, _) => BTreeMap::new(),
        (ColorMode::Contrastive, Some(c)) => {
            let all = control_means(c, &measure)?;
            match q.region {
                Some(r) => all.into_iter().filter(|(k, _)| *k == r).collect(),
                None => all,
            }
        }
        (ColorMode::Contrastive, None) => {
            return Err(ApiError::conflict("report_unavailable", "contrastive colouring needs a cohort or job"));
        }
    };

    let scope_id = cohort.as_ref().map_or_else(|| ds.id.clone(), |c| c.id.clone());
    let key = (scope_id, q.region, measure.clone(), q.mode, q.log_scale);
    let memo = state.0.ranges.lock().unwrap().get(&key).copied();
    let range_scans: Vec<ScanRecord> = match (&memo, &cohort) {
        (Some(_), _) => Vec::new(),
        (None, Some(c)) => c.spec.select_scans(&ds.dataset.records).into_iter().cloned().collect(),
        (None, None) => ds.dataset.records.clone(),
    };

    let state2 = state.clone();
    let bytes = blocking(move || {
        let this = render(&ds, &record, &q, &measure, &references)?;
        let range = match memo {
            Some(r) => r,
            None => {
                let mut r = [f64::INFINITY, f64::NEG_INFINITY];
                for rec in &range_scans {
                    r = extend_range(r, &render(&ds, rec, &q, &measure, &references)?.values);
                }
                state2.0.ranges.lock().unwrap().insert(key, r);
                r
            }
        };
        let mut range = extend_range(range, &this.values);
        if !range[0].is_finite() {
            range = [0.0, 0.0];
        }
        let index = PayloadIndex {
            scan_id: record.scan_id.clone(),
            region: q.region,
            measure,
            mode: q.mode,
            log_scale: q.log_scale,
            n_vertices: this.values.len(),
            fibers: this.index.fibers,
            value_range: range,
            references,
        };
        Ok(encode_payload(&index, &this.index.positions, &this.values))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}
