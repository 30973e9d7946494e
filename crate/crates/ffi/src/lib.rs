//! C ABI over the surfeat toolkit.
//!
//! Every function returns an [`SfStatus`]; on failure the message is
//! available from [`sf_last_error`] until the next call on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use surfeat::cloudmodels::{CloudModel, CloudModelConfig, Task};
use surfeat::featurestore::LabeledCloud;
use surfeat::formats::{read_sfpc, Checkpoint};
use surfeat::harness::{metrics_classification, metrics_segmentation};
use surfeat::kv::KvFile;
use surfeat::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidData = 3,
    Io = 4,
    Aborted = 5,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 6,
    Panic = 7,
}

/// A point cloud with optional features and labels.
pub struct SfCloud(LabeledCloud);

/// A trained point-cloud model.
pub struct SfModel(CloudModel);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SfClassificationMetrics {
    /// Vessel (label 0) accuracy; NaN when the class is absent.
    pub accuracy_v: f64,
    /// Aneurysm (label 1) accuracy; NaN when the class is absent.
    pub accuracy_a: f64,
    pub f1: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SfSegmentationMetrics {
    /// Per class, NaN when the class is absent from both masks.
    pub iou: [f64; 2],
    pub dsc: [f64; 2],
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SfStatus {
    match e {
        Error::InvalidArgument(_) => SfStatus::InvalidArgument,
        Error::InvalidData(_) => SfStatus::InvalidData,
        Error::Aborted { .. } => SfStatus::Aborted,
        Error::Io(_) => SfStatus::Io,
    }
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (SfStatus, String)>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SfStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SfStatus::Panic
        }
    }
}

fn lift<T>(r: surfeat::Result<T>) -> Result<T, (SfStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (SfStatus, String) {
    (SfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, (SfStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| (SfStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (SfStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn io<T>(r: std::io::Result<T>) -> Result<T, (SfStatus, String)> {
    lift(r.map_err(Error::from))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads an SFPC file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_cloud_read(path: *const c_char, out: *mut *mut SfCloud) -> SfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let bytes = io(std::fs::read(path_arg(path)?))?;
        let cloud = lift(read_sfpc(&bytes))?;
        *out = Box::into_raw(Box::new(SfCloud(cloud)));
        Ok(())
    })
}

/// # Safety
/// `cloud` must come from [`sf_cloud_read`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sf_cloud_free(cloud: *mut SfCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Point count and feature width (0 without features).
///
/// # Safety
/// `cloud` must be a live handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn sf_cloud_info(cloud: *const SfCloud, points: *mut usize, feature_dim: *mut usize) -> SfStatus {
    guard(|| {
        let c = cloud.as_ref().ok_or_else(|| null("cloud"))?;
        if !points.is_null() {
            *points = c.0.cloud.count();
        }
        if !feature_dim.is_null() {
            *feature_dim = c.0.feature_dim();
        }
        Ok(())
    })
}

/// Loads `config.kv` and `model.sfck` from a run directory written by `surfeat train`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_model_load(dir: *const c_char, out: *mut *mut SfModel) -> SfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let dir = path_arg(dir)?;
        let kv = lift(KvFile::parse(&io(std::fs::read_to_string(dir.join("config.kv")))?))?;
        let config = lift(CloudModelConfig::from_kv(&kv))?;
        let checkpoint = lift(Checkpoint::from_bytes(&io(std::fs::read(dir.join("model.sfck")))?))?;
        let model = lift(CloudModel::from_checkpoint(&config, &checkpoint))?;
        *out = Box::into_raw(Box::new(SfModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`sf_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sf_model_free(model: *mut SfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicted labels: one per object for classifiers, one per point for
/// segmenters. `written` receives the label count; when `capacity` is too
/// small nothing is copied and `BufferTooSmall` is returned.
///
/// # Safety
/// Handles must be live; `labels` must hold `capacity` bytes; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_model_predict(
    model: *const SfModel,
    cloud: *const SfCloud,
    labels: *mut u8,
    capacity: usize,
    written: *mut usize,
) -> SfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let c = cloud.as_ref().ok_or_else(|| null("cloud"))?;
        if written.is_null() {
            return Err(null("written"));
        }
        let prepared = lift(m.0.prepare(&c.0))?;
        let pred = lift(m.0.predict(&prepared))?;
        *written = pred.len();
        if capacity < pred.len() {
            return Err((SfStatus::BufferTooSmall, format!("{} labels need a larger buffer than {capacity}", pred.len())));
        }
        if labels.is_null() {
            return Err(null("labels"));
        }
        ptr::copy_nonoverlapping(pred.as_ptr(), labels, pred.len());
        Ok(())
    })
}

/// 1 for a classifier, 2 for a segmenter.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_model_task(model: *const SfModel, task: *mut u32) -> SfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if task.is_null() {
            return Err(null("task"));
        }
        *task = match m.0.config().task {
            Task::Classify => 1,
            Task::Segment => 2,
        };
        Ok(())
    })
}

/// Per-class accuracy and F1 (aneurysm positive) over binary labels.
///
/// # Safety
/// Both arrays must hold `len` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_metrics_classification(
    predictions: *const u8,
    targets: *const u8,
    len: usize,
    out: *mut SfClassificationMetrics,
) -> SfStatus {
    guard(|| {
        let p = slice_arg(predictions, len, "predictions")?;
        let t = slice_arg(targets, len, "targets")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m = lift(metrics_classification(p, t))?;
        *out = SfClassificationMetrics {
            accuracy_v: m.accuracy_v.unwrap_or(f64::NAN),
            accuracy_a: m.accuracy_a.unwrap_or(f64::NAN),
            f1: m.f1,
        };
        Ok(())
    })
}

/// IoU and DSC per class over pooled points.
///
/// # Safety
/// Both arrays must hold `len` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_metrics_segmentation(
    predictions: *const u8,
    targets: *const u8,
    len: usize,
    out: *mut SfSegmentationMetrics,
) -> SfStatus {
    guard(|| {
        let p = slice_arg(predictions, len, "predictions")?;
        let t = slice_arg(targets, len, "targets")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m = lift(metrics_segmentation(&[(p, t)]))?;
        *out = SfSegmentationMetrics {
            iou: m.iou.map(|v| v.unwrap_or(f64::NAN)),
            dsc: m.dsc.map(|v| v.unwrap_or(f64::NAN)),
        };
        Ok(())
    })
}
