//! C ABI over the sleepwake library.
//!
//! Every fallible function returns an [`SwStatus`]. On failure a message is
//! kept per thread and read with `sw_last_error`. Matrices are row-major
//! `n x dim` arrays of `double`; binary labels are bytes, nonzero meaning sleep.
//! Handles returned through `out` pointers are released with the matching
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use sleepwake::config::PipelineConfig;
use sleepwake::hmm::{decode, fit_hmm, HmmModel};
use sleepwake::ingest::Manifest;
use sleepwake::lda::{fit_lda, LdaClassifier};
use sleepwake::pipeline::{run_pipeline, select_subjects};
use sleepwake::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Degenerate = 5,
    Fit = 6,
    SingleClass = 7,
    Io = 8,
    Panic = 9,
}

/// Fitted two-class discriminant.
pub struct SwLda(LdaClassifier);

/// Fitted Gaussian hidden Markov model.
pub struct SwHmm(HmmModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> SwStatus {
    match e {
        Error::Config(_) => SwStatus::Config,
        Error::Data(_) | Error::Csv(_) | Error::Json(_) => SwStatus::Data,
        Error::Degenerate(_) => SwStatus::Degenerate,
        Error::Fit(_) => SwStatus::Fit,
        Error::SingleClass(_) => SwStatus::SingleClass,
        Error::Dimension { .. } => SwStatus::InvalidArgument,
        Error::File { .. } | Error::Io(_) => SwStatus::Io,
    }
}

struct Failure(SwStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> SwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SwStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SwStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(SwStatus::NullPointer, format!("`{name}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SwStatus::InvalidArgument, msg.into())
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn rows(x: *const f64, n: usize, dim: usize) -> Result<Vec<Vec<f64>>, Failure> {
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let len = n.checked_mul(dim).ok_or_else(|| invalid("n * dim overflows"))?;
    Ok(slice(x, len, "x")?.chunks(dim).map(<[f64]>::to_vec).collect())
}

unsafe fn read_labels(y: *const u8, n: usize) -> Result<Vec<bool>, Failure> {
    Ok(slice(y, n, "labels")?.iter().map(|&v| v != 0).collect())
}

unsafe fn path(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn sw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sw_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Fits a discriminant on `n` rows with prior-odds factor `gamma` (1 for equal priors).
///
/// # Safety
/// `x` must point to `n * dim` doubles and `labels` to `n` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_lda_fit(
    x: *const f64,
    labels: *const u8,
    n: usize,
    dim: usize,
    gamma: f64,
    out: *mut *mut SwLda,
) -> SwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c = fit_lda(&rows(x, n, dim)?, &read_labels(labels, n)?, gamma)?;
        *out = Box::into_raw(Box::new(SwLda(c)));
        Ok(())
    })
}

/// Copies the discriminant direction into `w`, which holds `dim` doubles.
///
/// # Safety
/// `lda` must come from `sw_lda_fit`; `w` must point to `dim` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sw_lda_direction(lda: *const SwLda, w: *mut f64, dim: usize) -> SwStatus {
    guard(|| {
        let lda = lda.as_ref().ok_or_else(|| null("lda"))?;
        if dim != lda.0.dim() {
            return Err(invalid(format!("model has {} features, got {dim}", lda.0.dim())));
        }
        slice_mut(w, dim, "w")?.copy_from_slice(&lda.0.w);
        Ok(())
    })
}

/// Classifies `n` rows; writes 1 for sleep and 0 for wake.
///
/// # Safety
/// `x` must point to `n * dim` doubles and `out` to `n` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sw_lda_classify(
    lda: *const SwLda,
    x: *const f64,
    n: usize,
    dim: usize,
    out: *mut u8,
) -> SwStatus {
    guard(|| {
        let lda = lda.as_ref().ok_or_else(|| null("lda"))?;
        if dim != lda.0.dim() {
            return Err(invalid(format!("model has {} features, got {dim}", lda.0.dim())));
        }
        let x = rows(x, n, dim)?;
        for (o, r) in slice_mut(out, n, "out")?.iter_mut().zip(&x) {
            *o = lda.0.classify(r) as u8;
        }
        Ok(())
    })
}

/// # Safety
/// `lda` must come from `sw_lda_fit` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sw_lda_free(lda: *mut SwLda) {
    if !lda.is_null() {
        drop(Box::from_raw(lda));
    }
}

/// Fits a `k`-state Gaussian HMM by Baum-Welch.
///
/// # Safety
/// `obs` must point to `n * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_hmm_fit(
    obs: *const f64,
    n: usize,
    dim: usize,
    k: usize,
    seed: u64,
    out: *mut *mut SwHmm,
) -> SwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = fit_hmm(&rows(obs, n, dim)?, k, seed)?;
        *out = Box::into_raw(Box::new(SwHmm(m)));
        Ok(())
    })
}

fn check_hmm_dim(hmm: &SwHmm, dim: usize) -> Outcome {
    if dim != hmm.0.dim() {
        return Err(invalid(format!("model has {} features, got {dim}", hmm.0.dim())));
    }
    Ok(())
}

/// Viterbi path; writes one state index per observation.
///
/// # Safety
/// `obs` must point to `n * dim` doubles and `states` to `n` writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn sw_hmm_decode(
    hmm: *const SwHmm,
    obs: *const f64,
    n: usize,
    dim: usize,
    states: *mut usize,
) -> SwStatus {
    guard(|| {
        let hmm = hmm.as_ref().ok_or_else(|| null("hmm"))?;
        check_hmm_dim(hmm, dim)?;
        let path = decode(&hmm.0, &rows(obs, n, dim)?)?;
        slice_mut(states, n, "states")?.copy_from_slice(&path);
        Ok(())
    })
}

/// Log-likelihood of a sequence under the model.
///
/// # Safety
/// `obs` must point to `n * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_hmm_log_likelihood(
    hmm: *const SwHmm,
    obs: *const f64,
    n: usize,
    dim: usize,
    out: *mut f64,
) -> SwStatus {
    guard(|| {
        let hmm = hmm.as_ref().ok_or_else(|| null("hmm"))?;
        check_hmm_dim(hmm, dim)?;
        let ll = hmm.0.forward_log_likelihood(&rows(obs, n, dim)?)?;
        *out.as_mut().ok_or_else(|| null("out"))? = ll;
        Ok(())
    })
}

/// Number of hidden states.
///
/// # Safety
/// `hmm` must come from `sw_hmm_fit` or be null, which yields 0.
#[no_mangle]
pub unsafe extern "C" fn sw_hmm_states(hmm: *const SwHmm) -> usize {
    hmm.as_ref().map_or(0, |h| h.0.k)
}

/// # Safety
/// `hmm` must come from `sw_hmm_fit` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sw_hmm_free(hmm: *mut SwHmm) {
    if !hmm.is_null() {
        drop(Box::from_raw(hmm));
    }
}

/// Share of rows whose nearest neighbour along direction `w` has the same label.
///
/// # Safety
/// `x` must point to `n * dim` doubles, `labels` to `n` bytes, `w` to `dim`
/// doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_separability_index(
    x: *const f64,
    labels: *const u8,
    n: usize,
    dim: usize,
    w: *const f64,
    out: *mut f64,
) -> SwStatus {
    guard(|| {
        let w = slice(w, dim, "w")?;
        let si = sleepwake::adaptive::separability_index(&rows(x, n, dim)?, &read_labels(labels, n)?, w)?;
        *out.as_mut().ok_or_else(|| null("out"))? = si;
        Ok(())
    })
}

/// Mann-Whitney AUC of `scores` for binary `labels`, ties counting one half.
///
/// # Safety
/// `scores` must point to `n` doubles and `labels` to `n` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sw_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> SwStatus {
    guard(|| {
        let a = sleepwake::predict::auc(slice(scores, n, "scores")?, &read_labels(labels, n)?)?;
        *out.as_mut().ok_or_else(|| null("out"))? = a;
        Ok(())
    })
}

/// Runs the full pipeline on every subject of a manifest into `out_dir`.
/// `config` may be null for defaults; it is read as TOML when it ends in
/// `.toml`, JSON otherwise. The number of failed subjects is written to
/// `n_failed` when it is not null; those failures do not change the status.
///
/// # Safety
/// Path arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sw_pipeline_run(
    manifest: *const c_char,
    config: *const c_char,
    out_dir: *const c_char,
    n_failed: *mut usize,
) -> SwStatus {
    guard(|| {
        let manifest = Manifest::load(&path(manifest, "manifest")?)?;
        let cfg = if config.is_null() {
            PipelineConfig::default()
        } else {
            PipelineConfig::load(&path(config, "config")?)?
        };
        let out = path(out_dir, "out_dir")?;
        let subjects = select_subjects(&manifest, None)?;
        let report = run_pipeline(&subjects, &cfg, &out)?;
        if let Some(f) = n_failed.as_mut() {
            *f = report.failed().len();
        }
        Ok(())
    })
}
