//! C ABI for DRCN inference: load a trained checkpoint (with its sibling
//! vocabulary files) behind an opaque handle and classify sentence pairs.
//!
//! Conventions:
//! - Handles are created by [`drcn_load`] and released by [`drcn_free`].
//! - Strings are NUL-terminated UTF-8; invalid UTF-8 is rejected.
//! - Functions return [`DrcnStatus`]; on failure [`drcn_last_error`] holds a
//!   thread-local message valid until the next call on the same thread.
//! - No function panics across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use drcn::checkpoint::load_model;
use drcn::data::{make_batches, tokenize, SentencePair, Vocab};
use drcn::model::{DrcnModel, ForwardOptions};

/// Result codes for every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrcnStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, empty sentence or wrong buffer size.
    InvalidArgument = 1,
    /// Checkpoint or vocabulary files unreadable or malformed.
    LoadError = 2,
    /// The forward pass failed (non-finite values, internal error).
    NumericError = 3,
}

/// Opaque model handle: a loaded checkpoint plus its vocabularies.
pub struct DrcnHandle {
    model: DrcnModel,
    words: Vocab,
    chars: Vocab,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

/// Message for the most recent failure on this thread. Never null; empty when
/// no error has occurred. The pointer stays valid until the next failing call
/// on the same thread.
#[no_mangle]
pub extern "C" fn drcn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn cstr_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, ()> {
    if p.is_null() {
        set_error(&format!("{what} is null"));
        return Err(());
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(s),
        Err(_) => {
            set_error(&format!("{what} is not valid UTF-8"));
            Err(())
        }
    }
}

/// Load a checkpoint written by `drcn train`. `vocab_words.tsv` and
/// `vocab_chars.tsv` are expected next to the checkpoint file. Returns null
/// on failure; consult [`drcn_last_error`].
///
/// # Safety
/// `checkpoint_path` must be a valid NUL-terminated string or null.
#[no_mangle]
pub unsafe extern "C" fn drcn_load(checkpoint_path: *const c_char) -> *mut DrcnHandle {
    let result = catch_unwind(AssertUnwindSafe(|| {
        let path = match cstr_arg(checkpoint_path, "checkpoint_path") {
            Ok(s) => PathBuf::from(s),
            Err(()) => return ptr::null_mut(),
        };
        let model = match load_model(&path) {
            Ok(m) => m,
            Err(e) => {
                set_error(&format!("cannot load checkpoint: {e}"));
                return ptr::null_mut();
            }
        };
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let words = match Vocab::load(&dir.join("vocab_words.tsv")) {
            Ok(v) => v,
            Err(e) => {
                set_error(&format!("cannot load word vocabulary: {e}"));
                return ptr::null_mut();
            }
        };
        let chars = match Vocab::load(&dir.join("vocab_chars.tsv")) {
            Ok(v) => v,
            Err(e) => {
                set_error(&format!("cannot load char vocabulary: {e}"));
                return ptr::null_mut();
            }
        };
        Box::into_raw(Box::new(DrcnHandle { model, words, chars }))
    }));
    result.unwrap_or_else(|_| {
        set_error("internal panic in drcn_load");
        ptr::null_mut()
    })
}

/// Release a handle returned by [`drcn_load`]. Null is ignored.
///
/// # Safety
/// `handle` must be null or a pointer previously returned by [`drcn_load`]
/// that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn drcn_free(handle: *mut DrcnHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of output classes of the loaded model, or 0 for a null handle.
///
/// # Safety
/// `handle` must be null or a live handle from [`drcn_load`].
#[no_mangle]
pub unsafe extern "C" fn drcn_num_classes(handle: *const DrcnHandle) -> usize {
    if handle.is_null() {
        return 0;
    }
    (*handle).model.config.num_classes
}

/// Classify one sentence pair. `probs_out` receives `probs_len` class
/// probabilities summing to 1; `probs_len` must equal
/// [`drcn_num_classes`]. Runs the deterministic evaluation forward pass.
///
/// # Safety
/// `handle` must be a live handle; `premise`/`hypothesis` valid
/// NUL-terminated strings; `probs_out` must point to `probs_len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn drcn_classify(
    handle: *const DrcnHandle,
    premise: *const c_char,
    hypothesis: *const c_char,
    probs_out: *mut f64,
    probs_len: usize,
) -> DrcnStatus {
    let result = catch_unwind(AssertUnwindSafe(|| {
        if handle.is_null() {
            set_error("handle is null");
            return DrcnStatus::InvalidArgument;
        }
        let h = &*handle;
        let Ok(premise) = cstr_arg(premise, "premise") else {
            return DrcnStatus::InvalidArgument;
        };
        let Ok(hypothesis) = cstr_arg(hypothesis, "hypothesis") else {
            return DrcnStatus::InvalidArgument;
        };
        if probs_out.is_null() || probs_len != h.model.config.num_classes {
            set_error(&format!(
                "probs buffer must hold exactly {} doubles",
                h.model.config.num_classes
            ));
            return DrcnStatus::InvalidArgument;
        }
        let p_toks = tokenize(premise);
        let q_toks = tokenize(hypothesis);
        if p_toks.is_empty() || q_toks.is_empty() {
            set_error("both sentences need at least one token");
            return DrcnStatus::InvalidArgument;
        }
        let pairs = [SentencePair {
            premise: p_toks,
            hypothesis: q_toks,
            label: 0,
            group_id: None,
        }];
        let batch = make_batches(
            &pairs,
            1,
            1000,
            h.model.config.char_max_word_len,
            &h.words,
            &h.chars,
            None,
        )
        .remove(0);
        let opts = ForwardOptions { collect_diagnostics: false, ..ForwardOptions::eval() };
        match h.model.forward_batch(&batch, &opts, None) {
            Ok(pass) => {
                let probs = pass.probs_of(0);
                std::slice::from_raw_parts_mut(probs_out, probs_len)
                    .copy_from_slice(probs);
                DrcnStatus::Ok
            }
            Err(e) => {
                set_error(&format!("forward pass failed: {e}"));
                DrcnStatus::NumericError
            }
        }
    }));
    result.unwrap_or_else(|_| {
        set_error("internal panic in drcn_classify");
        DrcnStatus::NumericError
    })
}
