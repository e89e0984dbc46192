//! C ABI over a saved survival forest and CounteRGAN bundle.
//!
//! Every function returns a [`CrStatus`]. On failure the message is kept in a
//! thread-local buffer readable through [`cr_last_error_message`] until the
//! next call on the same thread. Handles are opaque, owned by the caller and
//! released with the matching `_free`. A GAN handle keeps its forest alive on
//! its own, so the two may be freed in either order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use churn_recourse::countergan::CounterGanModel;
use churn_recourse::survival::ChurnClassifier;
use churn_recourse::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    MissingArtifact = 3,
    Numerical = 4,
    DimensionMismatch = 5,
    NotApplicable = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque fitted forest.
pub struct CrForest {
    inner: Arc<ChurnClassifier>,
}

/// Opaque CounteRGAN bundle bound to a forest.
pub struct CrGan {
    inner: CounterGanModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CrStatus {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Format(_) | Error::Empty(_) => CrStatus::InvalidArgument,
        Error::MissingArtifact { .. } => CrStatus::MissingArtifact,
        Error::Numerical { .. } => CrStatus::Numerical,
        Error::Dimension { .. } => CrStatus::DimensionMismatch,
        Error::NotApplicable(_) => CrStatus::NotApplicable,
        Error::Io(_) => CrStatus::Io,
        Error::Json(_) | Error::Csv(_) => CrStatus::InvalidArgument,
    }
}

struct Fail(CrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CrStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CrStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside churn_recourse".into());
            CrStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail(CrStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// # Safety
/// `x` must be null or point to `len` readable doubles.
unsafe fn slice_arg<'a>(x: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if x.is_null() {
        return Err(null("features"));
    }
    Ok(std::slice::from_raw_parts(x, len))
}

/// Message for the last failed call on this thread, or null after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a forest saved by `train-forest`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cr_forest_load(path: *const c_char, out: *mut *mut CrForest) -> CrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = path_arg(path, "path")?;
        if !p.exists() {
            return Err(Error::MissingArtifact { path: p, stage: "train-forest" }.into());
        }
        let f = ChurnClassifier::load(&p)?;
        *out = Box::into_raw(Box::new(CrForest { inner: Arc::new(f) }));
        Ok(())
    })
}

/// # Safety
/// `forest` must be null or a handle from [`cr_forest_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cr_forest_free(forest: *mut CrForest) {
    if !forest.is_null() {
        drop(Box::from_raw(forest));
    }
}

/// # Safety
/// `forest` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cr_forest_n_features(forest: *const CrForest, out: *mut usize) -> CrStatus {
    guard(|| {
        let f = forest.as_ref().ok_or_else(|| null("forest"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = f.inner.n_features;
        Ok(())
    })
}

/// Survival probability just before the churn threshold; above 0.5 means retained.
///
/// # Safety
/// `forest` must be a live handle, `x` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cr_forest_class_score(
    forest: *const CrForest,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> CrStatus {
    guard(|| {
        let f = forest.as_ref().ok_or_else(|| null("forest"))?;
        let x = slice_arg(x, len)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = f.inner.class_score(x)?;
        Ok(())
    })
}

/// 1 for predicted retained, 0 for predicted churn.
///
/// # Safety
/// `forest` must be a live handle, `x` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cr_forest_classify(
    forest: *const CrForest,
    x: *const f64,
    len: usize,
    out: *mut u8,
) -> CrStatus {
    guard(|| {
        let f = forest.as_ref().ok_or_else(|| null("forest"))?;
        let x = slice_arg(x, len)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = f.inner.classify(x)?;
        Ok(())
    })
}

/// Median predicted lifetime in days. `truncated` is set to 1 when the
/// survival curve never fell to 0.5 and the last observed time was returned.
///
/// # Safety
/// `forest` must be a live handle, `x` must hold `len` doubles, and both
/// outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn cr_forest_median_lifetime(
    forest: *const CrForest,
    x: *const f64,
    len: usize,
    days: *mut f64,
    truncated: *mut u8,
) -> CrStatus {
    guard(|| {
        let f = forest.as_ref().ok_or_else(|| null("forest"))?;
        let x = slice_arg(x, len)?;
        let days = days.as_mut().ok_or_else(|| null("days"))?;
        let truncated = truncated.as_mut().ok_or_else(|| null("truncated"))?;
        let m = f.inner.predict_median(x)?;
        *days = m.days;
        *truncated = u8::from(m.truncated);
        Ok(())
    })
}

/// Loads a CounteRGAN bundle directory written by `train-gan`, bound to `forest`.
///
/// # Safety
/// `dir` must be a NUL-terminated string, `forest` a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cr_gan_load(dir: *const c_char, forest: *const CrForest, out: *mut *mut CrGan) -> CrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let f = forest.as_ref().ok_or_else(|| null("forest"))?;
        let d = path_arg(dir, "dir")?;
        let g = CounterGanModel::load(&d, Arc::clone(&f.inner))?;
        *out = Box::into_raw(Box::new(CrGan { inner: g }));
        Ok(())
    })
}

/// # Safety
/// `gan` must be null or a handle from [`cr_gan_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cr_gan_free(gan: *mut CrGan) {
    if !gan.is_null() {
        drop(Box::from_raw(gan));
    }
}

/// One-pass recourse for a user the forest predicts to churn. Writes the
/// projected action into `delta` (length `len`) and the forest's verdict on
/// `x + delta` into `post_class`. Returns `CR_STATUS_NOT_APPLICABLE` for a
/// user already predicted retained.
///
/// # Safety
/// `gan` must be a live handle, `x` and `delta` must each hold `len`
/// doubles, and `post_class` and `cost_sq` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn cr_gan_recourse(
    gan: *const CrGan,
    x: *const f64,
    len: usize,
    delta: *mut f64,
    post_class: *mut u8,
    cost_sq: *mut f64,
) -> CrStatus {
    guard(|| {
        let g = gan.as_ref().ok_or_else(|| null("gan"))?;
        let x = slice_arg(x, len)?;
        if delta.is_null() {
            return Err(null("delta"));
        }
        let a = g.inner.generate_recourse("ffi", x)?;
        std::slice::from_raw_parts_mut(delta, len).copy_from_slice(&a.delta);
        if let Some(p) = post_class.as_mut() {
            *p = a.post_class;
        }
        if let Some(c) = cost_sq.as_mut() {
            *c = a.cost_sq;
        }
        Ok(())
    })
}
