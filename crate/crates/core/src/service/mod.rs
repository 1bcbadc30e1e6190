//! HTTP service under `/api/v1`.
//!
//! Datasets and cohorts live in memory once registered. Pipeline jobs run on
//! the blocking pool; a finished report is published together with the DONE
//! state, so readers see either no report or the whole report. Reports are
//! cached on disk by a hash of (dataset fingerprint, cohort, config) and a
//! cache hit is accepted only when all three compare equal.

mod error;
mod jobs;
mod query;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::routing::{get, post};
use axum::Router;

use crate::cohort::CohortSpec;
use crate::dataset::Dataset;
use crate::matrix::FeatureMatrix;

pub use error::ApiError;
pub use jobs::{JobRecord, JobState, JobProgress};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Relative dataset paths in requests resolve against this directory.
    pub data_dir: PathBuf,
    pub cache_dir: PathBuf,
    /// Evaluate regions of a job in parallel on the rayon pool.
    pub parallel: bool,
}

pub(crate) struct DatasetEntry {
    pub id: String,
    pub dataset: Dataset,
    pub matrices: Vec<FeatureMatrix>,
    pub fingerprint: String,
}

pub(crate) struct CohortEntry {
    pub id: String,
    pub dataset: Arc<DatasetEntry>,
    pub spec: CohortSpec,
    /// Dataset matrices restricted to the cohort.
    pub matrices: Vec<FeatureMatrix>,
}

type RangeKey = (String, Option<u32>, String, crate::fibers::ColorMode, bool);

pub(crate) struct Inner {
    pub config: ServiceConfig,
    pub datasets: RwLock<HashMap<String, Arc<DatasetEntry>>>,
    pub cohorts: RwLock<HashMap<String, Arc<CohortEntry>>>,
    pub jobs: RwLock<HashMap<String, Arc<jobs::Job>>>,
    /// Orders finished jobs so queries can default to the latest one.
    pub finish_seq: AtomicU64,
    pub ranges: Mutex<HashMap<RangeKey, [f64; 2]>>,
}

#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Inner>);

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self(Arc::new(Inner {
            config,
            datasets: RwLock::default(),
            cohorts: RwLock::default(),
            jobs: RwLock::default(),
            finish_seq: AtomicU64::new(0),
            ranges: Mutex::default(),
        }))
    }

    pub(crate) fn next_seq(&self) -> u64 {
        self.0.finish_seq.fetch_add(1, Ordering::SeqCst) + 1
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/datasets", post(jobs::ingest_dataset).get(jobs::list_datasets))
        .route("/datasets/{id}", get(jobs::get_dataset))
        .route("/cohorts", post(jobs::create_cohort))
        .route("/cohorts/{id}", get(jobs::get_cohort))
        .route("/jobs/pipeline", post(jobs::submit_pipeline))
        .route("/jobs/{id}", get(jobs::get_job))
        .route("/jobs/{id}/report", get(query::job_report))
        .route("/regions", get(query::regions))
        .route("/regions/{r}", get(query::region))
        .route("/regions/{r}/features", get(query::features))
        .route("/subjects", get(query::subjects))
        .route("/analytics/covariance", get(query::covariance))
        .route("/analytics/trends", get(query::trends))
        .route("/analytics/histogram", get(query::histogram))
        .route("/analytics/projection", get(query::projection))
        .route("/analytics/pred-feature", get(query::pred_feature))
        .route("/analytics/timeline", get(query::timeline))
        .route("/fibers/{scan}", get(query::fibers))
        .fallback(error::not_found);
    Router::new().nest("/api/v1", api).with_state(state)
}

/// Serve until ctrl-c.
pub async fn serve(config: ServiceConfig, addr: std::net::SocketAddr) -> std::io::Result<()> {
    std::fs::create_dir_all(&config.cache_dir)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new(config)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
