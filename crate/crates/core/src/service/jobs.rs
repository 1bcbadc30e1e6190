//! Dataset and cohort registration, pipeline jobs and the report cache.

use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::error::{ApiError, Body};
use super::{AppState, CohortEntry, DatasetEntry};
use crate::cohort::{demographics, select_cohort, CohortSpec, Demographics};
use crate::dataset::{fingerprint, restrict_to_cohort, run_cohort, Dataset};
use crate::ml::pipeline::Progress;
use crate::ml::{PipelineConfig, RunOptions, SaliencyReport};

fn short_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())[..16].to_string()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

// ---- datasets ----

#[derive(Debug, Deserialize)]
pub struct IngestRequest {
    /// Dataset root; relative paths resolve against the data directory.
    pub path: String,
    /// Recompute the feature matrices even if they are on disk.
    #[serde(default)]
    pub extract: bool,
}

#[derive(Debug, Serialize)]
pub struct RegionInfo {
    pub region: u32,
    pub name: String,
}

#[derive(Debug, Serialize)]
pub struct DatasetInfo {
    pub dataset_id: String,
    pub name: String,
    pub path: PathBuf,
    pub fingerprint: String,
    pub n_scans: usize,
    pub n_subjects: usize,
    pub measures: Vec<String>,
    pub regions: Vec<RegionInfo>,
    pub features: Vec<String>,
}

fn dataset_info(e: &DatasetEntry) -> DatasetInfo {
    let mut subjects: Vec<&str> = e.dataset.records.iter().map(|r| r.subject_id.as_str()).collect();
    subjects.sort_unstable();
    subjects.dedup();
    DatasetInfo {
        dataset_id: e.id.clone(),
        name: e.dataset.manifest.name.clone(),
        path: e.dataset.root.clone(),
        fingerprint: e.fingerprint.clone(),
        n_scans: e.dataset.records.len(),
        n_subjects: subjects.len(),
        measures: e.dataset.manifest.features.measures.clone(),
        regions: e.matrices.iter().map(|m| RegionInfo { region: m.region, name: m.region_name.clone() }).collect(),
        features: e.matrices.first().map(|m| m.feature_names.clone()).unwrap_or_default(),
    }
}

pub async fn ingest_dataset(
    State(state): State<AppState>,
    Body(req): Body<IngestRequest>,
) -> Result<(StatusCode, Json<DatasetInfo>), ApiError> {
    let root = {
        let p = PathBuf::from(&req.path);
        if p.is_absolute() { p } else { state.0.config.data_dir.join(p) }
    };
    let parallel = state.0.config.parallel;
    let entry = blocking(move || {
        let root = root
            .canonicalize()
            .map_err(|e| ApiError::not_found("unknown_path", format!("{}: {e}", root.display())))?;
        let dataset = Dataset::open(&root)?;
        let matrices = if req.extract || !dataset.has_matrices() {
            let m = dataset.extract(parallel)?;
            dataset.write_matrices(&m)?;
            m
        } else {
            dataset.load_matrices()?
        };
        if matrices.is_empty() {
            return Err(ApiError::unprocessable("no_features", "dataset has no regions"));
        }
        Ok(DatasetEntry {
            id: short_hash(&[root.to_string_lossy().as_bytes()]),
            fingerprint: fingerprint(&matrices),
            dataset,
            matrices,
        })
    })
    .await?;
    let info = dataset_info(&entry);
    state.0.datasets.write().unwrap().insert(entry.id.clone(), Arc::new(entry));
    Ok((StatusCode::CREATED, Json(info)))
}

pub async fn list_datasets(State(state): State<AppState>) -> Json<Vec<DatasetInfo>> {
    let map = state.0.datasets.read().unwrap();
    let mut out: Vec<DatasetInfo> = map.values().map(|e| dataset_info(e)).collect();
    out.sort_by(|a, b| a.dataset_id.cmp(&b.dataset_id));
    Json(out)
}

pub(crate) fn dataset(state: &AppState, id: &str) -> Result<Arc<DatasetEntry>, ApiError> {
    state.0.datasets.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found("unknown_dataset", format!("no dataset `{id}`")))
}

pub async fn get_dataset(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<DatasetInfo>, ApiError> {
    Ok(Json(dataset_info(&*dataset(&state, &id)?)))
}

// ---- cohorts ----

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
pub struct CohortRequest {
    pub dataset_id: String,
    /// Inclusive; defaults to every age.
    #[serde(default)]
    pub age_range: Option<[f64; 2]>,
    #[serde(default = "default_true")]
    pub balance: bool,
    #[serde(default)]
    pub seed: u64,
    /// A previously exported spec, used verbatim.
    #[serde(default)]
    pub spec: Option<CohortSpec>,
}

#[derive(Debug, Serialize)]
pub struct CohortInfo {
    pub cohort_id: String,
    pub dataset_id: String,
    pub n_scans: usize,
    pub spec: CohortSpec,
    pub demographics: Demographics,
}

fn cohort_info(c: &CohortEntry) -> CohortInfo {
    CohortInfo {
        cohort_id: c.id.clone(),
        dataset_id: c.dataset.id.clone(),
        n_scans: c.spec.select_scans(&c.dataset.dataset.records).len(),
        spec: c.spec.clone(),
        demographics: demographics(&c.spec),
    }
}

pub(crate) fn register_cohort(state: &AppState, ds: Arc<DatasetEntry>, spec: CohortSpec) -> Result<Arc<CohortEntry>, ApiError> {
    spec.validate()?;
    let spec_json = serde_json::to_vec(&spec).expect("spec serializes");
    let id = short_hash(&[ds.id.as_bytes(), &spec_json]);
    if let Some(c) = state.0.cohorts.read().unwrap().get(&id) {
        return Ok(c.clone());
    }
    let matrices = ds.matrices.iter().map(|m| restrict_to_cohort(m, &spec)).collect();
    let entry = Arc::new(CohortEntry { id: id.clone(), dataset: ds, spec, matrices });
    Ok(state.0.cohorts.write().unwrap().entry(id).or_insert(entry).clone())
}

pub async fn create_cohort(
    State(state): State<AppState>,
    Body(req): Body<CohortRequest>,
) -> Result<(StatusCode, Json<CohortInfo>), ApiError> {
    let ds = dataset(&state, &req.dataset_id)?;
    let spec = match req.spec {
        Some(spec) => spec,
        None => select_cohort(&ds.dataset.records, req.age_range.unwrap_or([0.0, 200.0]), req.balance, req.seed)?,
    };
    let entry = register_cohort(&state, ds, spec)?;
    Ok((StatusCode::CREATED, Json(cohort_info(&entry))))
}

pub(crate) fn cohort(state: &AppState, id: &str) -> Result<Arc<CohortEntry>, ApiError> {
    state.0.cohorts.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found("unknown_cohort", format!("no cohort `{id}`")))
}

pub async fn get_cohort(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<CohortInfo>, ApiError> {
    Ok(Json(cohort_info(&*cohort(&state, &id)?)))
}

// ---- jobs ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum JobState {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobProgress {
    pub regions_done: usize,
    pub regions_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub dataset_id: String,
    pub cohort_id: String,
    pub state: JobState,
    pub progress: JobProgress,
    /// Served from the report cache without running.
    pub cached: bool,
    pub cache_key: String,
    pub created_at: DateTime<Utc>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
    pub error: Option<String>,
    /// Report location once DONE.
    pub result: Option<String>,
}

struct Slot {
    record: JobRecord,
    report: Option<Arc<SaliencyReport>>,
    seq: u64,
}

pub(crate) struct Job {
    pub cohort: Arc<CohortEntry>,
    pub config: PipelineConfig,
    slot: Mutex<Slot>,
}

impl Job {
    pub fn record(&self) -> JobRecord {
        self.slot.lock().unwrap().record.clone()
    }

    /// The report and its publication order, once DONE.
    pub fn report(&self) -> Option<(Arc<SaliencyReport>, u64)> {
        let s = self.slot.lock().unwrap();
        s.report.clone().map(|r| (r, s.seq))
    }

    fn is_active(&self) -> bool {
        matches!(self.slot.lock().unwrap().record.state, JobState::Pending | JobState::Running)
    }

    fn start(&self) {
        let mut s = self.slot.lock().unwrap();
        if s.record.state == JobState::Pending {
            s.record.state = JobState::Running;
            s.record.started_at = Some(Utc::now());
        }
    }

    fn progress(&self, p: Progress) {
        let mut s = self.slot.lock().unwrap();
        let cur = &mut s.record.progress;
        cur.regions_done = cur.regions_done.max(p.regions_done);
    }

    /// Report and DONE state become visible together.
    fn publish(&self, report: Arc<SaliencyReport>, seq: u64) {
        let mut s = self.slot.lock().unwrap();
        let now = Utc::now();
        s.record.state = JobState::Done;
        s.record.started_at.get_or_insert(now);
        s.record.finished_at = Some(now);
        s.record.progress.regions_done = s.record.progress.regions_total;
        s.record.result = Some(format!("/api/v1/jobs/{}/report", s.record.job_id));
        s.report = Some(report);
        s.seq = seq;
    }

    fn fail(&self, message: String) {
        let mut s = self.slot.lock().unwrap();
        s.record.state = JobState::Failed;
        s.record.finished_at = Some(Utc::now());
        s.record.error = Some(message);
    }
}

#[derive(Debug, Deserialize)]
pub struct PipelineRequest {
    #[serde(default)]
    pub cohort_id: Option<String>,
    /// With `cohort`, registers the spec against this dataset.
    #[serde(default)]
    pub dataset_id: Option<String>,
    #[serde(default)]
    pub cohort: Option<CohortSpec>,
    #[serde(default)]
    pub config: PipelineConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    fingerprint: String,
    cohort: CohortSpec,
    config: PipelineConfig,
    report: SaliencyReport,
}

fn cache_key(fingerprint: &str, spec: &CohortSpec, config: &PipelineConfig) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&json!({ "dataset": fingerprint, "cohort": spec, "config": config })).unwrap());
    hex::encode(h.finalize())
}

/// Cache files for a key: `<key>.json`, then `<key>.1.json`, ... on collision.
fn cache_slots<'a>(dir: &'a FsPath, key: &str) -> impl Iterator<Item = PathBuf> + 'a {
    let key = key.to_string();
    (0..).map(move |i| if i == 0 { dir.join(format!("{key}.json")) } else { dir.join(format!("{key}.{i}.json")) })
}

fn cache_lookup(dir: &FsPath, key: &str, fp: &str, spec: &CohortSpec, config: &PipelineConfig) -> Option<SaliencyReport> {
    for path in cache_slots(dir, key) {
        let bytes = fs::read(&path).ok()?;
        let Ok(entry) = serde_json::from_slice::<CacheEntry>(&bytes) else { continue };
        if entry.fingerprint == fp && &entry.cohort == spec && &entry.config == config {
            return Some(entry.report);
        }
    }
    None
}

fn cache_store(dir: &FsPath, key: &str, entry: &CacheEntry) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let path = cache_slots(dir, key)
        .find(|p| match fs::read(p) {
            Err(_) => true,
            Ok(bytes) => serde_json::from_slice::<CacheEntry>(&bytes)
                .is_ok_and(|e| e.fingerprint == entry.fingerprint && e.cohort == entry.cohort && e.config == entry.config),
        })
        .expect("unbounded");
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec(entry).expect("cache entry serializes"))?;
    fs::rename(tmp, path)
}

pub async fn submit_pipeline(
    State(state): State<AppState>,
    Body(req): Body<PipelineRequest>,
) -> Result<(StatusCode, Json<JobRecord>), ApiError> {
    let cohort_entry = match (req.cohort_id, req.cohort) {
        (Some(id), _) => cohort(&state, &id)?,
        (None, Some(spec)) => {
            let ds_id = req.dataset_id.ok_or_else(|| ApiError::unprocessable("invalid_body", "an inline cohort needs dataset_id"))?;
            register_cohort(&state, dataset(&state, &ds_id)?, spec)?
        }
        (None, None) => return Err(ApiError::unprocessable("invalid_body", "cohort_id or cohort is required")),
    };
    let config = req.config;
    let min_class = cohort_entry.spec.disease_subjects.len().min(cohort_entry.spec.control_subjects.len());
    config.validate(Some(min_class))?;

    let ds = cohort_entry.dataset.clone();
    let key = cache_key(&ds.fingerprint, &cohort_entry.spec, &config);
    let cache_dir = state.0.config.cache_dir.clone();
    let cached = {
        let (k, fp, spec, cfg) = (key.clone(), ds.fingerprint.clone(), cohort_entry.spec.clone(), config.clone());
        let dir = cache_dir.clone();
        blocking(move || Ok(cache_lookup(&dir, &k, &fp, &spec, &cfg))).await?
    };

    let job_id = uuid::Uuid::new_v4().to_string();
    let record = JobRecord {
        job_id: job_id.clone(),
        dataset_id: ds.id.clone(),
        cohort_id: cohort_entry.id.clone(),
        state: JobState::Pending,
        progress: JobProgress { regions_done: 0, regions_total: ds.matrices.len() },
        cached: cached.is_some(),
        cache_key: key.clone(),
        created_at: Utc::now(),
        started_at: None,
        finished_at: None,
        error: None,
        result: None,
    };
    let job = Arc::new(Job {
        cohort: cohort_entry,
        config: config.clone(),
        slot: Mutex::new(Slot { record, report: None, seq: 0 }),
    });

    if let Some(report) = cached {
        job.publish(Arc::new(report), state.next_seq());
        state.0.jobs.write().unwrap().insert(job_id, job.clone());
        return Ok((StatusCode::OK, Json(job.record())));
    }

    {
        let mut jobs = state.0.jobs.write().unwrap();
        if let Some(running) = jobs.values().find(|j| j.cohort.dataset.id == ds.id && j.is_active()) {
            let id = running.record().job_id;
            return Err(ApiError::conflict("job_running", format!("job {id} is still running on this dataset"))
                .with_detail(json!({ "job_id": id })));
        }
        jobs.insert(job_id, job.clone());
    }

    let runner_state = state.clone();
    let runner = job.clone();
    tokio::task::spawn_blocking(move || run_job(&runner_state, &runner, &cache_dir, &key));
    Ok((StatusCode::ACCEPTED, Json(job.record())))
}

fn run_job(state: &AppState, job: &Arc<Job>, cache_dir: &FsPath, key: &str) {
    job.start();
    let observer = job.clone();
    let options = RunOptions {
        parallel: state.0.config.parallel,
        progress: Some(Arc::new(move |p| observer.progress(p))),
    };
    let spec = &job.cohort.spec;
    let ds = &job.cohort.dataset;
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run_cohort(&ds.matrices, spec, &job.config, &options)));
    match outcome {
        Ok(Ok(report)) => {
            let entry = CacheEntry {
                fingerprint: ds.fingerprint.clone(),
                cohort: spec.clone(),
                config: job.config.clone(),
                report,
            };
            if let Err(e) = cache_store(cache_dir, key, &entry) {
                eprintln!("report cache write failed: {e}");
            }
            job.publish(Arc::new(entry.report), state.next_seq());
        }
        Ok(Err(e)) => job.fail(e.to_string()),
        Err(_) => job.fail("pipeline panicked".into()),
    }
}

pub(crate) fn job(state: &AppState, id: &str) -> Result<Arc<Job>, ApiError> {
    state.0.jobs.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found("unknown_job", format!("no job `{id}`")))
}

pub async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<JobRecord>, ApiError> {
    Ok(Json(job(&state, &id)?.record()))
}
