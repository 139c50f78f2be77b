//! C ABI over `lcpose`: load models and datasets through opaque handles,
//! run joint inference, score clusterings.
//!
//! Every function returns an [`LcpStatus`]; on failure the message is
//! available from [`lcp_last_error_message`] on the same thread. Indices
//! crossing this boundary are 0-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use lcpose::eval::pairwise_f1;
use lcpose::features::FeatureCache;
use lcpose::inference::infer_joint;
use lcpose::io::{check_compatible, read_dataset, read_model, Dataset, Model};
use lcpose::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Schema = 5,
    Io = 6,
    Parse = 7,
    UndefinedMetric = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Loaded model.
pub struct LcpModel {
    inner: Model,
}

/// Loaded dataset.
pub struct LcpDataset {
    inner: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> LcpStatus {
    match e {
        Error::Config(_) => LcpStatus::Config,
        Error::Schema(_) => LcpStatus::Schema,
        Error::Io { .. } => LcpStatus::Io,
        Error::Parse { .. } => LcpStatus::Parse,
        Error::UndefinedMetric(_) => LcpStatus::UndefinedMetric,
        Error::Data(_) | Error::OracleBudget { .. } | Error::Image(_) => LcpStatus::Data,
    }
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (LcpStatus, String)>) -> LcpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LcpStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LcpStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (LcpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (LcpStatus, String) {
    (LcpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, (LcpStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| (LcpStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// Loads a model file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcp_model_load(path: *const c_char, out: *mut *mut LcpModel) -> LcpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = read_model(path_arg(path)?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(LcpModel { inner: model }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`lcp_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lcp_model_free(model: *mut LcpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Part and attribute counts of a model.
///
/// # Safety
/// `model` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcp_model_dims(
    model: *const LcpModel,
    parts: *mut usize,
    attributes: *mut usize,
) -> LcpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if parts.is_null() || attributes.is_null() {
            return Err(null("output"));
        }
        *parts = m.inner.structure.tree.part_count();
        *attributes = m.inner.structure.schema.len();
        Ok(())
    })
}

/// Loads a dataset file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcp_dataset_load(path: *const c_char, out: *mut *mut LcpDataset) -> LcpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = read_dataset(path_arg(path)?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(LcpDataset { inner: ds }));
        Ok(())
    })
}

/// Releases a dataset; null is ignored.
///
/// # Safety
/// `dataset` must come from [`lcp_dataset_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lcp_dataset_free(dataset: *mut LcpDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of records.
///
/// # Safety
/// `dataset` must be a live handle; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcp_dataset_len(dataset: *const LcpDataset, len: *mut usize) -> LcpStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        if len.is_null() {
            return Err(null("len"));
        }
        *len = d.inner.len();
        Ok(())
    })
}

/// Joint inference on record `index`. Writes one candidate index per part
/// to `pose`, one value per attribute to `attributes`, and the score.
///
/// # Safety
/// Handles must be live; `pose` and `attributes` must hold `pose_cap` and
/// `attr_cap` elements; `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcp_infer(
    model: *const LcpModel,
    dataset: *const LcpDataset,
    index: usize,
    max_iters: usize,
    pose: *mut usize,
    pose_cap: usize,
    attributes: *mut usize,
    attr_cap: usize,
    score: *mut f64,
) -> LcpStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        let d = &dataset.as_ref().ok_or_else(|| null("dataset"))?.inner;
        if pose.is_null() || attributes.is_null() || score.is_null() {
            return Err(null("output"));
        }
        check_compatible(&m.structure, &d.structure).map_err(lib_err)?;
        let rec = d.records.get(index).ok_or_else(|| {
            (
                LcpStatus::InvalidArgument,
                format!("index {index} out of range for {} records", d.len()),
            )
        })?;
        let (np, na) = (m.structure.tree.part_count(), m.structure.schema.len());
        if pose_cap < np || attr_cap < na {
            return Err((
                LcpStatus::BufferTooSmall,
                format!("need {np} pose and {na} attribute slots"),
            ));
        }
        if max_iters == 0 {
            return Err((LcpStatus::InvalidArgument, "max_iters must be at least 1".into()));
        }
        let cache = FeatureCache::build(&rec.sample.image, &rec.sample.grid, &m.structure).map_err(lib_err)?;
        let res = infer_joint(&m.structure, &cache, &m.params, max_iters).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(pose, np).copy_from_slice(&res.label.pose.0);
        std::slice::from_raw_parts_mut(attributes, na).copy_from_slice(&res.label.attributes.0);
        *score = res.score;
        Ok(())
    })
}

/// Pairwise clustering F1 of two labelings of `n` items.
///
/// # Safety
/// `predicted` and `truth` must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcp_pairwise_f1(
    predicted: *const usize,
    truth: *const usize,
    n: usize,
    out: *mut f64,
) -> LcpStatus {
    guard(|| {
        if predicted.is_null() || truth.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let p = std::slice::from_raw_parts(predicted, n);
        let t = std::slice::from_raw_parts(truth, n);
        *out = pairwise_f1(p, t).map_err(lib_err)?;
        Ok(())
    })
}

/// Message of the last failed call on this thread; empty after success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lcp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, NUL-terminated, static.
#[no_mangle]
pub extern "C" fn lcp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
