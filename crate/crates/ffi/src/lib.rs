//! C ABI over the intent-explain core.
//!
//! Every function returns an [`IeStatus`]; on failure a message is available
//! from [`ie_last_error`] on the same thread. Strings handed out by this
//! library must be released with [`ie_string_free`], models with
//! [`ie_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use intent_explain::annotator::annotate;
use intent_explain::corpus::{parse_conllu, write_jsonl, Dataset, Record};
use intent_explain::metrics::{fleiss_kappa, token_f1, AgreementTable, Rationale};
use intent_explain::model::{explain, load_model, ClassifierParams};
use intent_explain::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// Opaque handle to a loaded classifier.
pub struct IeModel {
    params: ClassifierParams,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(IeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io(_) => IeStatus::Io,
            Error::Parse { .. } | Error::Json(_) | Error::ModelFormat(_) => IeStatus::Parse,
            Error::InvalidRecord { .. }
            | Error::TokenOutOfRange { .. }
            | Error::ClassOutOfRange { .. }
            | Error::UnknownLabel(_)
            | Error::LengthMismatch { .. }
            | Error::Config(_)
            | Error::Undefined(_) => IeStatus::InvalidArgument,
            Error::Singular | Error::Predict { .. } => IeStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn guard<F: FnOnce() -> Outcome>(f: F) -> IeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IeStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            IeStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(IeStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(IeStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn tokens_arg<'a>(
    tokens: *const *const c_char,
    count: usize,
) -> Result<Vec<&'a str>, Failure> {
    if count == 0 {
        return Ok(Vec::new());
    }
    non_null(tokens, "tokens")?;
    (0..count)
        .map(|i| str_arg(*tokens.add(i), "token"))
        .collect()
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(IeStatus::Internal, "string contains a NUL byte".into()))
}

fn check_buffer(len: usize, needed: usize) -> Outcome {
    if len < needed {
        Err(Failure(
            IeStatus::BufferTooSmall,
            format!("buffer holds {len} values, {needed} needed"),
        ))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ie_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a model file written by `intent-explain train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_model_load(path: *const c_char, out: *mut *mut IeModel) -> IeStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let file =
            std::fs::File::open(path).map_err(|e| Failure(IeStatus::Io, format!("{path}: {e}")))?;
        let params = load_model(std::io::BufReader::new(file))?;
        *out = Box::into_raw(Box::new(IeModel { params }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from `ie_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ie_model_free(model: *mut IeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ie_model_num_classes(model: *const IeModel, out: *mut usize) -> IeStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = (*model).params.num_classes();
        Ok(())
    })
}

/// Label of class `index` as a new string (free with `ie_string_free`).
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ie_model_label(
    model: *const IeModel,
    index: usize,
    out: *mut *mut c_char,
) -> IeStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let labels = (*model).params.vocabulary.labels();
        let label = labels.get(index).ok_or_else(|| {
            Failure(
                IeStatus::InvalidArgument,
                format!("class {index} out of range for {} classes", labels.len()),
            )
        })?;
        *out = into_c_string(label.clone())?;
        Ok(())
    })
}

/// Class probabilities for `count` tokens, written to `probs` (at least
/// `num_classes` entries). The argmax goes to `class_out` when non-NULL.
///
/// # Safety
/// `tokens` must point to `count` NUL-terminated strings; `probs` to
/// `probs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ie_model_predict(
    model: *const IeModel,
    tokens: *const *const c_char,
    count: usize,
    probs: *mut f64,
    probs_len: usize,
    class_out: *mut usize,
) -> IeStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(probs, "probs")?;
        let params = &(*model).params;
        let words = tokens_arg(tokens, count)?;
        check_buffer(probs_len, params.num_classes())?;
        let (class, p) = params.predict(&words);
        ptr::copy_nonoverlapping(p.as_ptr(), probs, p.len());
        if !class_out.is_null() {
            *class_out = class;
        }
        Ok(())
    })
}

/// Integrated-gradients token attributions (class average of absolute
/// per-class attributions) with `steps` quadrature points, one per token.
///
/// # Safety
/// `tokens` must point to `count` NUL-terminated strings; `out` to
/// `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ie_model_integrated_gradients(
    model: *const IeModel,
    tokens: *const *const c_char,
    count: usize,
    steps: usize,
    out: *mut f64,
    out_len: usize,
) -> IeStatus {
    guard(|| {
        non_null(model, "model")?;
        if steps == 0 {
            return Err(Failure(
                IeStatus::InvalidArgument,
                "steps must be at least 1".into(),
            ));
        }
        let params = &(*model).params;
        let words = tokens_arg(tokens, count)?;
        check_buffer(out_len, count)?;
        if count == 0 {
            return Ok(());
        }
        non_null(out, "out")?;
        let ids = params.vocabulary.encode(&words);
        let map = explain(params, "", &ids, steps)?;
        ptr::copy_nonoverlapping(map.attributions.as_ptr(), out, count);
        Ok(())
    })
}

/// Annotates a CoNLL-U document and returns the corpus as JSONL (free with
/// `ie_string_free`). Rejected and multi-intent sentences are skipped.
///
/// # Safety
/// `conllu` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ie_annotate_conllu(
    conllu: *const c_char,
    max_len: usize,
    out: *mut *mut c_char,
) -> IeStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(conllu, "conllu")?;
        if max_len == 0 {
            return Err(Failure(
                IeStatus::InvalidArgument,
                "max_len must be positive".into(),
            ));
        }
        let ingested = parse_conllu(text.as_bytes(), max_len)?;
        let records: Vec<Record> = ingested
            .dataset
            .records
            .iter()
            .map(|r| Record::from(annotate(&r.utterance).0))
            .collect();
        let mut buf = Vec::new();
        write_jsonl(&Dataset::new(records)?, &mut buf)?;
        let s = String::from_utf8(buf)
            .map_err(|_| Failure(IeStatus::Internal, "non-UTF-8 output".into()))?;
        *out = into_c_string(s)?;
        Ok(())
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ie_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Token F1 between two 0/1 masks of length `len`.
///
/// # Safety
/// `pred` and `gold` must point to `len` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ie_token_f1(
    pred: *const u8,
    gold: *const u8,
    len: usize,
    out: *mut f64,
) -> IeStatus {
    guard(|| {
        non_null(out, "out")?;
        let (p, g): (&[u8], &[u8]) = if len == 0 {
            (&[], &[])
        } else {
            non_null(pred, "pred")?;
            non_null(gold, "gold")?;
            (
                std::slice::from_raw_parts(pred, len),
                std::slice::from_raw_parts(gold, len),
            )
        };
        if p.iter().chain(g).any(|&v| v > 1) {
            return Err(Failure(
                IeStatus::InvalidArgument,
                "mask values must be 0 or 1".into(),
            ));
        }
        *out = token_f1(&Rationale::from_mask(p), &Rationale::from_mask(g))?;
        Ok(())
    })
}

/// Fleiss' kappa of a row-major `items` x `categories` count table.
///
/// # Safety
/// `counts` must point to `items * categories` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ie_fleiss_kappa(
    counts: *const usize,
    items: usize,
    categories: usize,
    out: *mut f64,
) -> IeStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(counts, "counts")?;
        let total = items
            .checked_mul(categories)
            .ok_or_else(|| Failure(IeStatus::InvalidArgument, "table size overflows".into()))?;
        let flat = std::slice::from_raw_parts(counts, total);
        let rows = if categories == 0 {
            Vec::new()
        } else {
            flat.chunks(categories).map(<[usize]>::to_vec).collect()
        };
        *out = fleiss_kappa(&AgreementTable::new(rows)?)?.kappa;
        Ok(())
    })
}
