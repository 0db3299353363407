//! C ABI for deepcnf.
//!
//! Datasets and models are opaque heap handles released with their `*_free`
//! function. Every fallible call returns a [`DcnfStatus`]; on failure the
//! message is kept per thread and read with [`dcnf_last_error_message`].
//! Strings returned through out-pointers are owned by the caller and released
//! with [`dcnf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::io::Cursor;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use deepcnf::metrics::{empirical_auc, evaluate_model};
use deepcnf::model::Model;
use deepcnf::objectives::predict_marginals;
use deepcnf::seqdata::{load_dataset, read_dataset, Dataset};
use deepcnf::Error;
use ndarray::ArrayView2;

/// Result codes shared by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcnfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    Model = 6,
    Numerical = 7,
    Undefined = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Opaque dataset handle.
pub struct DcnfDataset {
    inner: Dataset,
}

/// Opaque model handle.
pub struct DcnfModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> DcnfStatus {
    match e.root() {
        Error::Io { .. } => DcnfStatus::Io,
        Error::Parse { .. } => DcnfStatus::Parse,
        Error::Model(_) => DcnfStatus::Model,
        Error::Numerical(_) => DcnfStatus::Numerical,
        Error::DegenerateLabeling => DcnfStatus::Undefined,
        _ => DcnfStatus::InvalidArgument,
    }
}

fn fail(status: DcnfStatus, msg: impl Into<String>) -> DcnfStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> DcnfStatus {
    fail(status_of(&e), e.to_string())
}

/// Run `f`, turning a panic into [`DcnfStatus::Panic`].
fn guard(f: impl FnOnce() -> DcnfStatus) -> DcnfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == DcnfStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(DcnfStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, DcnfStatus> {
    if p.is_null() {
        return Err(fail(DcnfStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DcnfStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

fn null_check<T>(p: *const T, what: &str) -> Result<(), DcnfStatus> {
    if p.is_null() {
        Err(fail(DcnfStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dcnf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dcnf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dcnf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a dataset file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dcnf_dataset_load(path: *const c_char, out: *mut *mut DcnfDataset) -> DcnfStatus {
    guard(|| {
        try_ffi!(null_check(out, "out"));
        *out = ptr::null_mut();
        let path = try_ffi!(str_arg(path, "path"));
        match load_dataset(path) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(DcnfDataset { inner: ds }));
                DcnfStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Parse a dataset from text in the file format.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dcnf_dataset_parse(text: *const c_char, out: *mut *mut DcnfDataset) -> DcnfStatus {
    guard(|| {
        try_ffi!(null_check(out, "out"));
        *out = ptr::null_mut();
        let text = try_ffi!(str_arg(text, "text"));
        match read_dataset(Cursor::new(text), Path::new("<memory>")) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(DcnfDataset { inner: ds }));
                DcnfStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `ds` must come from a dataset constructor and not have been freed. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn dcnf_dataset_free(ds: *mut DcnfDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of sequences, or 0 for NULL.
///
/// # Safety
/// `ds` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn dcnf_dataset_num_sequences(ds: *const DcnfDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.sequences.len())
}

/// Length of sequence `index`.
///
/// # Safety
/// `ds` must be a live handle; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dcnf_dataset_sequence_length(ds: *const DcnfDataset, index: usize, out_len: *mut usize) -> DcnfStatus {
    guard(|| {
        try_ffi!(null_check(ds, "dataset"));
        try_ffi!(null_check(out_len, "out_len"));
        let ds = &*ds;
        match ds.inner.sequences.get(index) {
            Some(s) => {
                *out_len = s.len();
                DcnfStatus::Ok
            }
            None => fail(DcnfStatus::InvalidArgument, format!("sequence index {index} out of range")),
        }
    })
}

/// Load a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dcnf_model_load(path: *const c_char, out: *mut *mut DcnfModel) -> DcnfStatus {
    guard(|| {
        try_ffi!(null_check(out, "out"));
        *out = ptr::null_mut();
        let path = try_ffi!(str_arg(path, "path"));
        match Model::load(path) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(DcnfModel { inner: m }));
                DcnfStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `model` must come from [`dcnf_model_load`] and not have been freed. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn dcnf_model_free(model: *mut DcnfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of labels, or 0 for NULL.
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn dcnf_model_num_labels(model: *const DcnfModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.alphabet.len())
}

/// Features per position expected by the model, or 0 for NULL.
///
/// # Safety
/// `model` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn dcnf_model_feature_dim(model: *const DcnfModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.params.arch.input_dim())
}

/// Name of label `index` as a newly allocated string.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dcnf_model_label_name(model: *const DcnfModel, index: usize, out: *mut *mut c_char) -> DcnfStatus {
    guard(|| {
        try_ffi!(null_check(model, "model"));
        try_ffi!(null_check(out, "out"));
        *out = ptr::null_mut();
        let alphabet = &(*model).inner.alphabet;
        if index >= alphabet.len() {
            return fail(DcnfStatus::InvalidArgument, format!("label index {index} out of range"));
        }
        *out = CString::new(alphabet.name(index)).expect("label names have no NUL").into_raw();
        DcnfStatus::Ok
    })
}

/// Posterior marginals for one sequence.
///
/// `features` is row-major `length × feature_dim`. On success `out` holds
/// `length × num_labels` probabilities, row-major. `out_capacity` is the
/// number of doubles `out` can take.
///
/// # Safety
/// `features` must point to `length * feature_dim` doubles and `out` to
/// `out_capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dcnf_model_predict_marginals(
    model: *const DcnfModel,
    features: *const f64,
    length: usize,
    feature_dim: usize,
    out: *mut f64,
    out_capacity: usize,
) -> DcnfStatus {
    guard(|| {
        try_ffi!(null_check(model, "model"));
        try_ffi!(null_check(features, "features"));
        try_ffi!(null_check(out, "out"));
        let m = &(*model).inner;
        if length == 0 {
            return fail(DcnfStatus::InvalidArgument, "sequence is empty");
        }
        if feature_dim != m.params.arch.input_dim() {
            return fail(
                DcnfStatus::InvalidArgument,
                format!("model expects {} features per position, got {feature_dim}", m.params.arch.input_dim()),
            );
        }
        let need = length * m.alphabet.len();
        if out_capacity < need {
            return fail(DcnfStatus::BufferTooSmall, format!("output needs {need} doubles, capacity is {out_capacity}"));
        }
        let x = std::slice::from_raw_parts(features, length * feature_dim);
        if x.iter().any(|v| !v.is_finite()) {
            return fail(DcnfStatus::InvalidArgument, "features must be finite");
        }
        let view = ArrayView2::from_shape((length, feature_dim), x).expect("shape matches slice length");
        match predict_marginals(&m.params, view) {
            Ok(fb) => {
                let dst = std::slice::from_raw_parts_mut(out, need);
                for (d, s) in dst.iter_mut().zip(fb.marginals.iter()) {
                    *d = *s;
                }
                DcnfStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Evaluate a model on a labeled dataset; the metrics report is returned as
/// a newly allocated JSON string.
///
/// # Safety
/// `model` and `ds` must be live handles; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dcnf_model_evaluate_json(
    model: *const DcnfModel,
    ds: *const DcnfDataset,
    out_json: *mut *mut c_char,
) -> DcnfStatus {
    guard(|| {
        try_ffi!(null_check(model, "model"));
        try_ffi!(null_check(ds, "dataset"));
        try_ffi!(null_check(out_json, "out_json"));
        *out_json = ptr::null_mut();
        let (m, d) = (&(*model).inner, &(*ds).inner);
        let report = m
            .check_data(&d.alphabet, d.feature_dim())
            .and_then(|_| evaluate_model(&m.params, d));
        match report {
            Ok(r) => {
                *out_json = CString::new(r.to_json()).expect("json has no NUL").into_raw();
                DcnfStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Rank-based AUC of `scores` against `positive` (nonzero means positive).
/// Returns [`DcnfStatus::Undefined`] when either class is empty.
///
/// # Safety
/// `scores` and `positive` must each point to `n` elements; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dcnf_empirical_auc(scores: *const f64, positive: *const u8, n: usize, out: *mut f64) -> DcnfStatus {
    guard(|| {
        try_ffi!(null_check(out, "out"));
        if n > 0 {
            try_ffi!(null_check(scores, "scores"));
            try_ffi!(null_check(positive, "positive"));
        }
        let (s, p): (&[f64], Vec<bool>) = if n == 0 {
            (&[], Vec::new())
        } else {
            (
                std::slice::from_raw_parts(scores, n),
                std::slice::from_raw_parts(positive, n).iter().map(|&b| b != 0).collect(),
            )
        };
        match empirical_auc(s, &p) {
            Ok(Some(a)) => {
                *out = a;
                DcnfStatus::Ok
            }
            Ok(None) => fail(DcnfStatus::Undefined, "AUC is undefined without both classes"),
            Err(e) => from_error(e),
        }
    })
}
