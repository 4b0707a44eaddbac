//! C ABI over the wrangle engine.
//!
//! Conventions:
//! - Sessions are opaque handles created by [`wrangle_session_new`] and
//!   released with [`wrangle_session_free`].
//! - Every fallible call returns a [`WrangleStatus`]. On failure,
//!   [`wrangle_last_error`] returns `{"code": ..., "message": ...}` for the
//!   calling thread.
//! - Strings handed out through `out` parameters are NUL-terminated UTF-8
//!   owned by the caller and must be released with [`wrangle_string_free`].
//! - Structured data crosses the boundary as JSON, in the same shapes the
//!   HTTP API uses.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use serde::Serialize;
use wrangle::codegen::generate_script;
use wrangle::session::Extensions;
use wrangle::{serialize_csv, CsvOptions, DetectorConfig, Error, GroupSpec, RepairAction, Session};

/// Result of every fallible call. Numeric values are stable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WrangleStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A JSON argument did not parse or did not match the expected shape.
    InvalidJson = 3,
    /// The CSV could not be loaded or has no usable columns.
    InvalidInput = 10,
    /// Unknown column, wrong column kind or bad group spec.
    InvalidColumn = 11,
    /// Bad detector config or custom rule.
    InvalidConfig = 12,
    /// The request refers to a table version that no longer holds.
    Stale = 20,
    NothingToUndo = 21,
    NothingToRedo = 22,
    /// The action is well formed but cannot be applied.
    ActionFailed = 30,
    Unsupported = 31,
    /// An index argument is past the end of its list.
    OutOfRange = 32,
    /// The engine panicked; the handle involved should be freed.
    Internal = 99,
}

fn status_of(e: &Error) -> WrangleStatus {
    use WrangleStatus::*;
    match e {
        Error::InSpec { source, .. } => status_of(source),
        Error::MalformedCsv { .. } | Error::EmptyInput | Error::NoCategoricalColumns | Error::NoNumericColumns => {
            InvalidInput
        }
        Error::ColumnNotFound(_) | Error::KindMismatch { .. } | Error::InvalidSpec(_) => InvalidColumn,
        Error::InvalidConfig(_) | Error::Rule(_) => InvalidConfig,
        Error::StaleGroup { .. }
        | Error::StaleRecord(_)
        | Error::StaleAction(_)
        | Error::VersionConflict { .. }
        | Error::FingerprintMismatch { .. } => Stale,
        Error::NothingToUndo => NothingToUndo,
        Error::NothingToRedo => NothingToRedo,
        Error::NoSuggestion(_)
        | Error::InvalidAction(_)
        | Error::EmptyMeanBasis(_)
        | Error::NotConvertible { .. }
        | Error::UnknownWrangler(_)
        | Error::Wrangler { .. } => ActionFailed,
        Error::UnsupportedKind(_) | Error::UnsupportedAction(_) => Unsupported,
    }
}

/// Opaque session handle.
pub struct WrangleSession {
    inner: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<(String, String)>> = const { RefCell::new(None) };
}

struct Failure {
    status: WrangleStatus,
    code: String,
    message: String,
}

impl Failure {
    fn new(status: WrangleStatus, code: &str, message: impl Into<String>) -> Self {
        Failure {
            status,
            code: code.to_string(),
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(status_of(&e), e.code(), e.to_string())
    }
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WrangleStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(Failure::new(WrangleStatus::Internal, "INTERNAL", msg))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            WrangleStatus::Ok
        }
        Err(f) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = Some((f.code, f.message)));
            f.status
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(WrangleStatus::NullArgument, "NULL_ARGUMENT", format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::new(WrangleStatus::InvalidUtf8, "INVALID_UTF8", format!("{name}: {e}")))
}

/// Parses an optional JSON argument; null means "use the default".
unsafe fn json_arg<T: serde::de::DeserializeOwned>(p: *const c_char, name: &str) -> Result<Option<T>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    let s = str_arg(p, name)?;
    serde_json::from_str(s)
        .map(Some)
        .map_err(|e| Failure::new(WrangleStatus::InvalidJson, "INVALID_JSON", format!("{name}: {e}")))
}

unsafe fn session<'a>(s: *mut WrangleSession) -> Result<&'a mut Session, Failure> {
    s.as_mut()
        .map(|h| &mut h.inner)
        .ok_or_else(|| Failure::new(WrangleStatus::NullArgument, "NULL_ARGUMENT", "session is null"))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(WrangleStatus::NullArgument, "NULL_ARGUMENT", "out is null"));
    }
    let c = CString::new(s).map_err(|e| Failure::new(WrangleStatus::Internal, "INTERNAL", e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn put_json(out: *mut *mut c_char, value: &impl Serialize) -> Result<(), Failure> {
    let s = serde_json::to_string(value).map_err(|e| Failure::new(WrangleStatus::Internal, "INTERNAL", e.to_string()))?;
    put_string(out, s)
}

/// Engine version as a static string; never free it.
#[no_mangle]
pub extern "C" fn wrangle_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Last error on this thread as JSON `{"code", "message"}`, or null when the
/// previous call succeeded. Free with [`wrangle_string_free`].
#[no_mangle]
pub extern "C" fn wrangle_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some((code, message)) => {
            let json = serde_json::json!({ "code": code, "message": message }).to_string();
            CString::new(json).map_or(ptr::null_mut(), CString::into_raw)
        }
        None => ptr::null_mut(),
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn wrangle_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads `csv_len` bytes of CSV and runs detection.
///
/// `name`, `config_json` (a detector config object) and `specs_json` (an
/// array of `{group_by, target, min_support}`) may be null for defaults.
///
/// # Safety
/// `csv` must point to `csv_len` readable bytes; string arguments must be
/// NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wrangle_session_new(
    csv: *const u8,
    csv_len: usize,
    name: *const c_char,
    config_json: *const c_char,
    specs_json: *const c_char,
    out: *mut *mut WrangleSession,
) -> WrangleStatus {
    guard(|| {
        if csv.is_null() || out.is_null() {
            return Err(Failure::new(WrangleStatus::NullArgument, "NULL_ARGUMENT", "csv or out is null"));
        }
        let bytes = std::slice::from_raw_parts(csv, csv_len);
        let name = if name.is_null() { "input.csv" } else { str_arg(name, "name")? };
        let config: DetectorConfig = json_arg(config_json, "config_json")?.unwrap_or_default();
        let specs: Option<Vec<GroupSpec>> = json_arg(specs_json, "specs_json")?;
        let inner = Session::from_csv(bytes, name, CsvOptions::default(), config, specs, Extensions::default())?;
        *out = Box::into_raw(Box::new(WrangleSession { inner }));
        Ok(())
    })
}

/// Releases a session. Null is ignored.
///
/// # Safety
/// `s` must come from [`wrangle_session_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wrangle_session_free(s: *mut WrangleSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Current table version; 0 for a null handle.
///
/// # Safety
/// `s` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn wrangle_session_version(s: *const WrangleSession) -> u64 {
    s.as_ref().map_or(0, |h| h.inner.version())
}

/// Anomaly records of the current version as a JSON array.
///
/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wrangle_session_anomalies(s: *mut WrangleSession, out: *mut *mut c_char) -> WrangleStatus {
    guard(|| put_json(out, &session(s)?.records()))
}

/// Ranked repair actions for the record at `record_index`, as a JSON array.
///
/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wrangle_session_suggest(
    s: *mut WrangleSession,
    record_index: usize,
    out: *mut *mut c_char,
) -> WrangleStatus {
    guard(|| {
        let s = session(s)?;
        let record = s.records().get(record_index).ok_or_else(|| {
            Failure::new(
                WrangleStatus::OutOfRange,
                "OUT_OF_RANGE",
                format!("record {record_index} of {}", s.records().len()),
            )
        })?;
        put_json(out, &s.suggest(record)?)
    })
}

/// Applies one repair action given as JSON. `out` receives the committed
/// entry (action, inverse, versions, diff); it may be null.
///
/// # Safety
/// `s` must be a live handle, `action_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn wrangle_session_commit(
    s: *mut WrangleSession,
    action_json: *const c_char,
    out: *mut *mut c_char,
) -> WrangleStatus {
    guard(|| {
        let s = session(s)?;
        let action: RepairAction = json_arg(action_json, "action_json")?
            .ok_or_else(|| Failure::new(WrangleStatus::NullArgument, "NULL_ARGUMENT", "action_json is null"))?;
        let entry = s.commit(action)?;
        if out.is_null() {
            Ok(())
        } else {
            put_json(out, entry)
        }
    })
}

/// Reverts the latest action.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wrangle_session_undo(s: *mut WrangleSession) -> WrangleStatus {
    guard(|| session(s)?.undo().map(drop).map_err(Failure::from))
}

/// Re-applies the latest undone action.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wrangle_session_redo(s: *mut WrangleSession) -> WrangleStatus {
    guard(|| session(s)?.redo().map(drop).map_err(Failure::from))
}

/// Current table as CSV text.
///
/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wrangle_session_table_csv(s: *mut WrangleSession, out: *mut *mut c_char) -> WrangleStatus {
    guard(|| {
        let s = session(s)?;
        put_string(out, serialize_csv(s.table(), s.csv_options()))
    })
}

/// Python source replaying the applied actions.
///
/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wrangle_session_script(s: *mut WrangleSession, out: *mut *mut c_char) -> WrangleStatus {
    guard(|| put_string(out, generate_script(session(s)?)?.source_text))
}

/// Session export (fingerprint, config, specs, actions) as JSON.
///
/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wrangle_session_export(s: *mut WrangleSession, out: *mut *mut c_char) -> WrangleStatus {
    guard(|| put_json(out, &session(s)?.export()))
}
