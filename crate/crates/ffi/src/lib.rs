// SPDX-License-Identifier: MIT OR Apache-2.0

//! C ABI over the stylesteer toolkit.
//!
//! Models and style stores are opaque handles created by `*_load` and released
//! with the matching `*_free`. Every fallible call returns an [`SsStatus`];
//! the message of the last failure on the calling thread is available from
//! [`ss_last_error`]. Strings returned to the caller are freed with
//! [`ss_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use stylesteer::cli::load_model;
use stylesteer::corpus::Tokenizer;
use stylesteer::evaluate::SentimentLexicon;
use stylesteer::generate::{detect_oversteer, prompt_baseline_generate, steered_generate, Sampling, SteerRequest};
use stylesteer::model::Model;
use stylesteer::stylevec::StyleStore;
use stylesteer::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    MissingFile = 3,
    Format = 4,
    InvalidInput = 5,
    UnknownStyle = 6,
    Numerical = 7,
    Io = 8,
    Panic = 9,
}

/// A frozen model with its vocabulary.
pub struct SsModel {
    model: Model,
    tokenizer: Tokenizer,
}

/// A loaded style-vector store.
pub struct SsStore {
    store: StyleStore,
}

/// Inputs of [`ss_generate`].
#[repr(C)]
pub struct SsGenerateParams {
    pub prompt: *const c_char,
    pub style: *const c_char,
    pub lambda: f64,
    pub seed: u64,
    pub max_new_tokens: usize,
    /// Ask for the style in the prompt instead of injecting a vector.
    pub baseline: bool,
    /// Greedy decoding instead of top-8 sampling.
    pub greedy: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsOversteer {
    pub flagged: bool,
    pub max_repeat_run: usize,
    pub distinct_ratio: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> SsStatus {
    match e {
        Error::MissingFile(_) => SsStatus::MissingFile,
        Error::Format(_) | Error::Parse { .. } | Error::Json(_) => SsStatus::Format,
        Error::Lookup { .. } => SsStatus::UnknownStyle,
        Error::Divergence { .. } => SsStatus::Numerical,
        Error::Io(_) => SsStatus::Io,
        _ => SsStatus::InvalidInput,
    }
}

struct Failure(SsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any failure or panic for [`ss_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SsStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SsStatus::NullArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(SsStatus::NullArgument, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn ss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a checkpoint with an embedded vocabulary.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_model_load(path: *const c_char, out: *mut *mut SsModel) -> SsStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = read_str(path, "path")?;
        let (model, tokenizer) = load_model(path.as_ref())?;
        *out = Box::into_raw(Box::new(SsModel { model, tokenizer }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`ss_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_model_free(model: *mut SsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of transformer blocks, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_model_n_layers(model: *const SsModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config().n_layers)
}

/// Residual width, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ss_model_d_model(model: *const SsModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config().d_model)
}

/// Loads a style store written by `stylesteer stylevec`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_store_load(path: *const c_char, out: *mut *mut SsStore) -> SsStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = read_str(path, "path")?;
        let store = StyleStore::load(path)?;
        *out = Box::into_raw(Box::new(SsStore { store }));
        Ok(())
    })
}

/// # Safety
/// `store` must come from [`ss_store_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_store_free(store: *mut SsStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// True when the store holds vectors for `style`.
///
/// # Safety
/// `store` must be NULL or a live handle; `style` NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ss_store_has_style(store: *const SsStore, style: *const c_char) -> bool {
    let Some(store) = store.as_ref() else {
        return false;
    };
    read_str(style, "style").is_ok_and(|s| store.store.has_style(s))
}

/// Generates a continuation with the style vector scaled by `lambda` at the
/// default layers, or with the prompt-suffix baseline. On success `*out_text`
/// owns a new string and `out_oversteer`, when not NULL, receives the report.
///
/// # Safety
/// Handles must be live, `params` valid with NUL-terminated strings, and
/// `out_text` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_generate(
    model: *const SsModel,
    store: *const SsStore,
    params: *const SsGenerateParams,
    out_text: *mut *mut c_char,
    out_oversteer: *mut SsOversteer,
) -> SsStatus {
    guard(|| {
        non_null(out_text, "out_text")?;
        *out_text = ptr::null_mut();
        non_null(model, "model")?;
        non_null(store, "store")?;
        non_null(params, "params")?;
        let (m, s, p) = (&*model, &*store, &*params);
        let prompt = read_str(p.prompt, "prompt")?;
        let style = read_str(p.style, "style")?;
        if !s.store.has_style(style) {
            return Err(Failure(
                SsStatus::UnknownStyle,
                format!("unknown style '{style}'; available: {}", s.store.labels().join(", ")),
            ));
        }
        let sampling = if p.greedy { Sampling::Greedy } else { Sampling::default() };
        let result = if p.baseline {
            prompt_baseline_generate(&m.model, &m.tokenizer, &s.store, prompt, style, sampling, p.max_new_tokens, p.seed)?
        } else {
            let req = SteerRequest {
                sampling,
                max_new_tokens: p.max_new_tokens,
                ..SteerRequest::new(prompt, style, p.lambda, p.seed)
            };
            steered_generate(&m.model, &m.tokenizer, &s.store, &req)?
        };
        if !out_oversteer.is_null() {
            *out_oversteer = SsOversteer {
                flagged: result.oversteer.flagged,
                max_repeat_run: result.oversteer.max_repeat_run,
                distinct_ratio: result.oversteer.distinct_ratio,
            };
        }
        *out_text = CString::new(result.text)
            .map_err(|_| Failure(SsStatus::InvalidInput, "generated text contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ss_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Lexicon sentiment of `text` in [-1, 1].
///
/// # Safety
/// `text` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_sentiment(text: *const c_char, out: *mut f64) -> SsStatus {
    guard(|| {
        non_null(out, "out")?;
        let t = read_str(text, "text")?;
        *out = SentimentLexicon::bundled()?.score(t);
        Ok(())
    })
}

/// Repetition report for `text`.
///
/// # Safety
/// `text` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_detect_oversteer(text: *const c_char, out: *mut SsOversteer) -> SsStatus {
    guard(|| {
        non_null(out, "out")?;
        let r = detect_oversteer(read_str(text, "text")?);
        *out = SsOversteer {
            flagged: r.flagged,
            max_repeat_run: r.max_repeat_run,
            distinct_ratio: r.distinct_ratio,
        };
        Ok(())
    })
}
