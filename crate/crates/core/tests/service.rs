use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use tractscope::cohort::CohortSpec;
use tractscope::dataset::{restrict_to_cohort, Dataset};
use tractscope::fibers::decode_payload;
use tractscope::io::metadata::Group;
use tractscope::service::{router, AppState, ServiceConfig};
use tractscope::synth::{synth_dataset, Effect, SynthConfig};

struct Env {
    _dir: tempfile::TempDir,
    root: std::path::PathBuf,
}

impl Env {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::create_dir_all(root.join("cache")).unwrap();
        Self { _dir: dir, root }
    }

    fn app(&self) -> Router {
        router(AppState::new(ServiceConfig { data_dir: self.root.clone(), cache_dir: self.root.join("cache"), parallel: false }))
    }
}

fn synth(root: &Path, name: &str, regions: usize, geometry: bool) {
    let cfg = SynthConfig {
        n_disease: 16,
        n_control: 16,
        n_regions: regions,
        effect: Effect {
            regions: vec![1],
            features: ["MFA_roi", "MMO_roi", "AFL_roi"].map(String::from).to_vec(),
            shift_sd: 1.5,
        },
        seed: 5,
        geometry,
        fibers_per_bundle: 4,
        ..SynthConfig::default()
    };
    synth_dataset(&root.join(name), &cfg).unwrap();
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn json_call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    json_call(app, Method::GET, uri, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    json_call(app, Method::POST, uri, Some(body)).await
}

async fn ingest_and_cohort(app: &Router, name: &str) -> (String, String, usize) {
    let (s, ds) = post(app, "/api/v1/datasets", json!({ "path": name })).await;
    assert_eq!(s, StatusCode::CREATED, "{ds}");
    let ds_id = ds["dataset_id"].as_str().unwrap().to_string();
    let (s, c) = post(app, "/api/v1/cohorts", json!({ "dataset_id": ds_id })).await;
    assert_eq!(s, StatusCode::CREATED, "{c}");
    (ds_id, c["cohort_id"].as_str().unwrap().to_string(), c["n_scans"].as_u64().unwrap() as usize)
}

async fn wait_done(app: &Router, job: &str) -> Value {
    for _ in 0..2400 {
        let (s, rec) = get(app, &format!("/api/v1/jobs/{job}")).await;
        assert_eq!(s, StatusCode::OK);
        match rec["state"].as_str().unwrap() {
            "DONE" => return rec,
            "FAILED" => panic!("job failed: {rec}"),
            _ => tokio::time::sleep(Duration::from_millis(50)).await,
        }
    }
    panic!("job {job} did not finish");
}

fn small_config() -> Value {
    json!({ "k": 4, "c": 2, "n_trees": 20 })
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn pipeline_job_lifecycle_and_report_views() {
    let env = Env::new();
    synth(&env.root, "ds42", 42, false);
    let app = env.app();
    let (_, cohort, n_scans) = ingest_and_cohort(&app, "ds42").await;

    let (s, _) = get(&app, "/api/v1/regions").await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, rec) = post(&app, "/api/v1/jobs/pipeline", json!({ "cohort_id": cohort, "config": small_config() })).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{rec}");
    assert_eq!(rec["cached"], false);
    let job = rec["job_id"].as_str().unwrap().to_string();
    let done = wait_done(&app, &job).await;
    assert_eq!(done["progress"]["regions_done"], 42);
    assert_eq!(done["progress"]["regions_total"], 42);

    let (s, view) = get(&app, &format!("/api/v1/regions?job={job}&sort=mean")).await;
    assert_eq!(s, StatusCode::OK);
    let regions = view["regions"].as_array().unwrap();
    assert_eq!(regions.len(), 42);
    let means: Vec<f64> = regions.iter().map(|r| r["accuracy"]["mean"].as_f64().unwrap()).collect();
    assert!(means.windows(2).all(|w| w[0] >= w[1]));

    let (_, asc) = get(&app, "/api/v1/regions?sort=id&order=desc").await;
    let ids: Vec<u64> = asc["regions"].as_array().unwrap().iter().map(|r| r["region"].as_u64().unwrap()).collect();
    assert_eq!(ids, (1..=42).rev().collect::<Vec<u64>>());

    let (s, err) = get(&app, "/api/v1/regions/9999").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "unknown_region");
    assert!(err["message"].is_string());

    let (s, r1) = get(&app, "/api/v1/regions/1").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r1["region"], 1);

    let (s, feats) = get(&app, "/api/v1/regions/1/features?sort=p").await;
    assert_eq!(s, StatusCode::OK);
    let feats = feats["features"].as_array().unwrap();
    assert_eq!(feats.len(), 48);
    let ps: Vec<f64> = feats.iter().map(|f| f["p_value"].as_f64().unwrap_or(f64::INFINITY)).collect();
    assert!(ps.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(feats.iter().filter(|f| f["in_top_m"] == true).count(), 7);

    let (s, subjects) = get(&app, "/api/v1/subjects?region=1").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(subjects["subjects"].as_array().unwrap().len(), n_scans);
    assert_eq!(subjects["threshold"], 0.5);

    let (s, report) = get(&app, &format!("/api/v1/jobs/{job}/report")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(report["regions"].as_array().unwrap().len(), 42);

    // identical request: served from the cache, already DONE
    let (s, again) = post(&app, "/api/v1/jobs/pipeline", json!({ "cohort_id": cohort, "config": small_config() })).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(again["state"], "DONE");
    assert_eq!(again["cached"], true);
    let (_, cached_report) = get(&app, &format!("/api/v1/jobs/{}/report", again["job_id"].as_str().unwrap())).await;
    assert_eq!(cached_report, report);

    // a fresh service over the same cache directory hits the disk cache
    let fresh = env.app();
    let (_, cohort2, _) = ingest_and_cohort(&fresh, "ds42").await;
    assert_eq!(cohort2, cohort);
    let (s, hit) = post(&fresh, "/api/v1/jobs/pipeline", json!({ "cohort_id": cohort, "config": small_config() })).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(hit["cached"], true);

    // analytics views over the finished job
    for uri in [
        "/api/v1/analytics/covariance?region=1&top=6".to_string(),
        "/api/v1/analytics/covariance?region=1&mode=covariance&group=control".to_string(),
        "/api/v1/analytics/trends?region=1&feature=MFA_roi&split_by_sex=true".to_string(),
        "/api/v1/analytics/histogram?region=1&feature=MFA_roi".to_string(),
        "/api/v1/analytics/projection?region=1&top=5&iterations=300".to_string(),
        "/api/v1/analytics/pred-feature?region=1&feature=MFA_roi".to_string(),
    ] {
        let (s, body) = get(&app, &uri).await;
        assert_eq!(s, StatusCode::OK, "{uri}: {body}");
    }
    let subject = subjects["subjects"][0]["subject_id"].as_str().unwrap().to_string();
    let (s, tl) = get(&app, &format!("/api/v1/analytics/timeline?region=1&feature=MFA_roi&subject={subject}")).await;
    assert_eq!(s, StatusCode::OK, "{tl}");
    assert!(!tl["visits"].as_array().unwrap().is_empty());

    let (s, cov) = get(&app, "/api/v1/analytics/covariance?region=1&top=6").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(cov["features"].as_array().unwrap().len(), 6);
    let (s, _) = get(&app, "/api/v1/analytics/histogram?region=1&feature=nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, err) = get(&app, "/api/v1/analytics/histogram?region=1").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "bad_query");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn invalid_requests_are_rejected() {
    let env = Env::new();
    synth(&env.root, "ds", 4, false);
    let app = env.app();
    let (ds, cohort, _) = ingest_and_cohort(&app, "ds").await;

    let (s, err) = post(&app, "/api/v1/jobs/pipeline", json!({ "cohort_id": cohort, "config": { "k": 99 } })).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "invalid_config");
    let (s, _) = post(&app, "/api/v1/jobs/pipeline", json!({ "cohort_id": cohort, "config": { "n_trees": 0 } })).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = post(&app, "/api/v1/jobs/pipeline", json!({ "cohort_id": "nope" })).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = post(&app, "/api/v1/jobs/pipeline", json!({})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = post(&app, "/api/v1/datasets", json!({ "path": "missing" })).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = post(&app, "/api/v1/cohorts", json!({ "dataset_id": ds, "age_range": [300.0, 400.0] })).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, err) = get(&app, "/api/v1/no/such/route").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "no_route");

    // a second job on a busy dataset conflicts
    let heavy = json!({ "cohort_id": cohort, "config": { "c": 10, "n_trees": 400 } });
    let (s, first) = post(&app, "/api/v1/jobs/pipeline", heavy).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let (s, err) = post(&app, "/api/v1/jobs/pipeline", json!({ "cohort_id": cohort, "config": small_config() })).await;
    assert_eq!(s, StatusCode::CONFLICT, "{err}");
    assert_eq!(err["code"], "job_running");
    assert_eq!(err["detail"]["job_id"], first["job_id"]);
    let (s, err) = get(&app, &format!("/api/v1/jobs/{}/report", first["job_id"].as_str().unwrap())).await;
    if s != StatusCode::OK {
        assert_eq!(s, StatusCode::CONFLICT);
        assert_eq!(err["code"], "job_not_done");
    }
    wait_done(&app, first["job_id"].as_str().unwrap()).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn fiber_payloads_share_a_cohort_range() {
    let env = Env::new();
    synth(&env.root, "geo", 4, true);
    let app = env.app();
    let (ds, cohort, _) = ingest_and_cohort(&app, "geo").await;
    let (_, info) = get(&app, &format!("/api/v1/cohorts/{cohort}")).await;
    let spec: CohortSpec = serde_json::from_value(info["spec"].clone()).unwrap();
    let (_, dsinfo) = get(&app, &format!("/api/v1/datasets/{ds}")).await;
    assert!(dsinfo["n_scans"].as_u64().unwrap() > 0);

    let (s, rec) = post(&app, "/api/v1/jobs/pipeline", json!({ "cohort_id": cohort, "config": small_config() })).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    wait_done(&app, rec["job_id"].as_str().unwrap()).await;
    let (_, subjects) = get(&app, "/api/v1/subjects?sort=id").await;
    let scans: Vec<String> =
        subjects["subjects"].as_array().unwrap().iter().map(|s| s["scan_id"].as_str().unwrap().to_string()).collect();
    let pick = [&scans[0], &scans[scans.len() - 1]];

    // control means of the region-level FA feature, straight from the matrices
    let matrices = Dataset::open(env.root.join("geo")).unwrap().load_matrices().unwrap();
    let control_mean = |region: u32| {
        let m = restrict_to_cohort(matrices.iter().find(|m| m.region == region).unwrap(), &spec);
        let j = m.feature_index("MFA_roi").unwrap();
        let v: Vec<f64> = m.rows.iter().filter(|r| r.meta.group == Group::Control).filter_map(|r| r.value(j)).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };

    let fetch = |scan: &str, query: &str| {
        let uri = format!("/api/v1/fibers/{scan}?cohort={cohort}&{query}");
        let app = app.clone();
        async move {
            let (s, bytes) = call(&app, Method::GET, &uri, None).await;
            assert_eq!(s, StatusCode::OK, "{uri}: {}", String::from_utf8_lossy(&bytes));
            decode_payload(&bytes).unwrap()
        }
    };

    let (a, pos_a, direct_a) = fetch(pick[0], "measure=FA").await;
    let (b, _, _) = fetch(pick[1], "measure=FA").await;
    assert_eq!(a.value_range, b.value_range);
    assert!(a.n_vertices > 0);
    assert_eq!(pos_a.len(), 3 * a.n_vertices);
    assert_eq!(direct_a.len(), a.n_vertices);
    assert!(direct_a.iter().all(|&v| (v as f64) >= a.value_range[0] - 1e-6 && (v as f64) <= a.value_range[1] + 1e-6));

    // contrastive: each vertex minus the control mean of its fiber's start region
    let (c, _, contrast) = fetch(pick[0], "measure=FA&mode=contrastive").await;
    assert!(!c.references.is_empty());
    for (&region, &reference) in &c.references {
        assert!((reference - control_mean(region)).abs() < 1e-9);
    }
    for f in &c.fibers {
        let reference = c.references[&f.start_region];
        for i in f.offset..f.offset + f.count {
            let want = direct_a[i] as f64 - reference;
            assert!((contrast[i] as f64 - want).abs() < 1e-5 * want.abs().max(1.0), "vertex {i}");
        }
    }
    let (d, _, _) = fetch(pick[1], "measure=FA&mode=contrastive").await;
    assert_eq!(c.value_range, d.value_range);

    let (l, _, logged) = fetch(pick[0], "measure=FA&log_scale=true").await;
    assert!(l.log_scale);
    for (x, y) in direct_a.iter().zip(&logged) {
        let want = (*x as f64).signum() * (*x as f64).abs().ln_1p();
        assert!((*y as f64 - want).abs() < 1e-5 * want.abs().max(1.0));
    }

    let (r, _, _) = fetch(pick[0], "measure=FA&region=1").await;
    assert!(r.fibers.iter().all(|f| f.start_region == 1 || f.end_region == 1));

    let (s, err) = get(&app, &format!("/api/v1/fibers/{}?dataset={ds}&mode=contrastive", pick[0])).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["code"], "report_unavailable");
    let (s, _) = get(&app, &format!("/api/v1/fibers/nope?dataset={ds}")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, err) = get(&app, &format!("/api/v1/fibers/{}?dataset={ds}&measure=XX", pick[0])).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "{err}");
}
