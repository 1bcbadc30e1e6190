//! C ABI over the saliency pipeline and its statistics.
//!
//! Every fallible call returns a [`TsStatus`]; on failure the message is
//! available from [`ts_last_error`] on the same thread until the next call.
//! Handles are opaque and must be released with their `_free` function.
//! Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tractscope::cohort::{select_cohort, CohortSpec};
use tractscope::dataset::{self, records_from_matrices, run_cohort, Dataset, DatasetError};
use tractscope::matrix::FeatureMatrix;
use tractscope::ml::metrics::roc_curve;
use tractscope::ml::stats::mann_whitney_u;
use tractscope::ml::{MlError, PipelineConfig, RunOptions, SaliencyReport};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    DataError = 4,
    IoError = 5,
    Panic = 99,
}

/// Feature matrices of a dataset.
pub struct TsDataset {
    matrices: Vec<FeatureMatrix>,
}

pub struct TsReport {
    report: SaliencyReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(TsStatus, String);

impl From<MlError> for Failure {
    fn from(e: MlError) -> Self {
        let status = match e {
            MlError::InvalidConfig(_) | MlError::TooFewSubjects { .. } => TsStatus::InvalidConfig,
            _ => TsStatus::DataError,
        };
        Failure(status, e.to_string())
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        let status = if matches!(e, DatasetError::Io { .. }) { TsStatus::IoError } else { TsStatus::DataError };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(TsStatus::InvalidArgument, msg.into())
}

fn null(name: &str) -> Failure {
    Failure(TsStatus::NullPointer, format!("`{name}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            TsStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(name))
    } else {
        Ok(std::slice::from_raw_parts(p, n))
    }
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{name}` is not UTF-8")))
}

unsafe fn write<T>(out: *mut T, v: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(v);
    Ok(())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn ts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null.
#[no_mangle]
pub extern "C" fn ts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Two-sided Mann-Whitney U of `a` against `b`.
#[no_mangle]
pub unsafe extern "C" fn ts_mann_whitney_u(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    u_out: *mut f64,
    p_out: *mut f64,
) -> TsStatus {
    guard(|| {
        let t = mann_whitney_u(slice(a, na, "a")?, slice(b, nb, "b")?)?;
        write(u_out, t.u, "u_out")?;
        write(p_out, t.p, "p_out")
    })
}

/// ROC AUC of `scores`; `labels[i]` nonzero marks a positive.
#[no_mangle]
pub unsafe extern "C" fn ts_roc_auc(scores: *const f64, labels: *const u8, n: usize, auc_out: *mut f64) -> TsStatus {
    guard(|| {
        let labels: Vec<bool> = slice(labels, n, "labels")?.iter().map(|&l| l != 0).collect();
        let roc = roc_curve(slice(scores, n, "scores")?, &labels)?;
        write(auc_out, roc.auc, "auc_out")
    })
}

/// Open a dataset directory and load its feature matrices.
#[no_mangle]
pub unsafe extern "C" fn ts_dataset_open(path: *const c_char, out: *mut *mut TsDataset) -> TsStatus {
    guard(|| {
        let ds = Dataset::open(string(path, "path")?)?;
        let matrices = ds.load_matrices()?;
        write(out, Box::into_raw(Box::new(TsDataset { matrices })), "out")
    })
}

/// Load feature matrices from an exported CSV directory.
#[no_mangle]
pub unsafe extern "C" fn ts_dataset_from_csv(dir: *const c_char, out: *mut *mut TsDataset) -> TsStatus {
    guard(|| {
        let matrices = dataset::load_matrices(std::path::Path::new(string(dir, "dir")?))?;
        write(out, Box::into_raw(Box::new(TsDataset { matrices })), "out")
    })
}

/// Number of regions; 0 for null.
#[no_mangle]
pub unsafe extern "C" fn ts_dataset_region_count(ds: *const TsDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.matrices.len())
}

#[no_mangle]
pub unsafe extern "C" fn ts_dataset_free(ds: *mut TsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Run the pipeline. `config_json` and `cohort_json` may be null: the
/// defaults are the standard config and a balanced cohort over all ages.
#[no_mangle]
pub unsafe extern "C" fn ts_run(
    ds: *const TsDataset,
    config_json: *const c_char,
    cohort_json: *const c_char,
    parallel: bool,
    out: *mut *mut TsReport,
) -> TsStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        let config: PipelineConfig = if config_json.is_null() {
            PipelineConfig::default()
        } else {
            serde_json::from_str(string(config_json, "config_json")?).map_err(|e| invalid(format!("config: {e}")))?
        };
        let spec: CohortSpec = if cohort_json.is_null() {
            select_cohort(&records_from_matrices(&ds.matrices), [0.0, 200.0], true, 0)
                .map_err(|e| Failure(TsStatus::DataError, e.to_string()))?
        } else {
            serde_json::from_str(string(cohort_json, "cohort_json")?).map_err(|e| invalid(format!("cohort: {e}")))?
        };
        let options = RunOptions { parallel, progress: None };
        let report = run_cohort(&ds.matrices, &spec, &config, &options)?;
        write(out, Box::into_raw(Box::new(TsReport { report })), "out")
    })
}

/// Report as JSON; release with `ts_string_free`.
#[no_mangle]
pub unsafe extern "C" fn ts_report_json(report: *const TsReport, out: *mut *mut c_char) -> TsStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let c = CString::new(r.report.to_json()).map_err(|e| invalid(e.to_string()))?;
        write(out, c.into_raw(), "out")
    })
}

/// Number of evaluated regions; 0 for null.
#[no_mangle]
pub unsafe extern "C" fn ts_report_region_count(report: *const TsReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.regions.len())
}

/// Region at `index` in saliency order.
#[no_mangle]
pub unsafe extern "C" fn ts_report_region(
    report: *const TsReport,
    index: usize,
    region_out: *mut u32,
    accuracy_mean_out: *mut f64,
    accuracy_std_out: *mut f64,
    auc_mean_out: *mut f64,
) -> TsStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let reg = r.report.regions.get(index).ok_or_else(|| invalid(format!("index {index} out of range")))?;
        write(region_out, reg.region, "region_out")?;
        write(accuracy_mean_out, reg.performance.accuracy.mean, "accuracy_mean_out")?;
        write(accuracy_std_out, reg.performance.accuracy.std, "accuracy_std_out")?;
        write(auc_mean_out, reg.performance.auc.mean, "auc_mean_out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn ts_report_free(report: *mut TsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ts_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
