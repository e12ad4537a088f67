//! C ABI over the completion engine. A checkpoint opens into an opaque
//! engine handle; prompts complete into C strings freed by the paired
//! destructor. Every fallible call returns a status code and leaves a
//! human-readable message in thread-local storage.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fusecc::corpus::{tokenize_code, Vocabulary};
use fusecc::fusion::HybridModel;
use fusecc::generator::DecodeStrategy;
use fusecc::training::load_checkpoint;

/// Completion engine behind an opaque pointer: a loaded hybrid model plus
/// the vocabulary it was trained with.
pub struct FuseccEngine {
    model: HybridModel,
    vocabulary: Vocabulary,
}

/// Status code returned by every fallible entry point. Anything other than
/// `Ok` leaves a message retrievable via `fusecc_last_error`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuseccStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    BadCheckpoint = 3,
    LexError = 4,
    ModelError = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized: String = message.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: FuseccStatus, message: &str) -> FuseccStatus {
    set_last_error(message);
    status
}

/// Runs a fallible body, converting panics into `Panic` so unwinding never
/// crosses the ABI boundary.
fn guarded(body: impl FnOnce() -> FuseccStatus) -> FuseccStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(FuseccStatus::Panic, "internal panic"),
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; never free it.
#[no_mangle]
pub extern "C" fn fusecc_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Opens the checkpoint at `path` (NUL-terminated UTF-8) and stores an
/// engine handle in `out`. The handle must be released with
/// `fusecc_engine_free`.
#[no_mangle]
pub unsafe extern "C" fn fusecc_engine_open(
    path: *const c_char,
    out: *mut *mut FuseccEngine,
) -> FuseccStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail(FuseccStatus::NullArgument, "path and out must be non-null");
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(s) => s,
            Err(_) => return fail(FuseccStatus::InvalidUtf8, "path is not valid UTF-8"),
        };
        match load_checkpoint(Path::new(path)) {
            Ok(bundle) => {
                let engine = Box::new(FuseccEngine {
                    model: bundle.model,
                    vocabulary: bundle.vocabulary,
                });
                unsafe { *out = Box::into_raw(engine) };
                FuseccStatus::Ok
            }
            Err(err) => fail(FuseccStatus::BadCheckpoint, &err.to_string()),
        }
    })
}

/// Vocabulary size of the loaded engine; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn fusecc_engine_vocab_size(engine: *const FuseccEngine) -> usize {
    if engine.is_null() {
        return 0;
    }
    unsafe { &*engine }.model.vocab_size()
}

/// Greedily completes `prompt` with up to `max_new` tokens and stores a
/// newly allocated NUL-terminated string of space-joined tokens in `out`.
/// Free the string with `fusecc_string_free`.
#[no_mangle]
pub unsafe extern "C" fn fusecc_engine_complete(
    engine: *const FuseccEngine,
    prompt: *const c_char,
    max_new: usize,
    out: *mut *mut c_char,
) -> FuseccStatus {
    guarded(|| {
        if engine.is_null() || prompt.is_null() || out.is_null() {
            return fail(
                FuseccStatus::NullArgument,
                "engine, prompt and out must be non-null",
            );
        }
        let engine = unsafe { &*engine };
        let prompt = match unsafe { CStr::from_ptr(prompt) }.to_str() {
            Ok(s) => s,
            Err(_) => return fail(FuseccStatus::InvalidUtf8, "prompt is not valid UTF-8"),
        };
        let tokens = match tokenize_code(prompt) {
            Ok(tokens) => tokens,
            Err(err) => return fail(FuseccStatus::LexError, &err.to_string()),
        };
        let ids = engine.vocabulary.encode(&tokens);
        let generated = match engine.model.generate(&ids, max_new, DecodeStrategy::Greedy) {
            Ok(ids) => ids,
            Err(err) => return fail(FuseccStatus::ModelError, &err.to_string()),
        };
        let words = match engine.vocabulary.decode(&generated) {
            Ok(words) => words,
            Err(err) => return fail(FuseccStatus::ModelError, &err.to_string()),
        };
        match CString::new(words.join(" ")) {
            Ok(text) => {
                unsafe { *out = text.into_raw() };
                FuseccStatus::Ok
            }
            Err(_) => fail(FuseccStatus::ModelError, "completion contains NUL"),
        }
    })
}

/// Frees a string returned by `fusecc_engine_complete`. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn fusecc_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(unsafe { CString::from_raw(text) });
    }
}

/// Frees an engine returned by `fusecc_engine_open`. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn fusecc_engine_free(engine: *mut FuseccEngine) {
    if !engine.is_null() {
        drop(unsafe { Box::from_raw(engine) });
    }
}
