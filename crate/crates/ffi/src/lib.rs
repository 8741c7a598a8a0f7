//! C ABI over the vizlm toolkit.
//!
//! Every fallible function returns a [`VizlmStatus`]. On anything other than
//! `VIZLM_STATUS_OK` a message is available from [`vizlm_last_error`] on the same
//! thread. Strings handed out by this library must be released with
//! [`vizlm_string_free`]; handles with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vizlm::dataset::{self, DataTable};
use vizlm::response;
use vizlm::vegazero::{self, VegaZeroSpec};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VizlmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    DatasetError = 3,
    SyntaxError = 4,
    InvalidSpec = 5,
    CompileError = 6,
    ResponseError = 7,
    Internal = 99,
}

/// Parsed tabular dataset.
pub struct VizlmTable(DataTable);

/// Parsed VegaZero specification.
pub struct VizlmSpec(VegaZeroSpec);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(VizlmStatus, String);

impl Fail {
    fn null(what: &str) -> Fail {
        Fail(VizlmStatus::NullArgument, format!("{what} is null"))
    }
}

/// Runs `f`, records any failure message and converts panics to `Internal`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VizlmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VizlmStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            VizlmStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(VizlmStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::null(what))
}

fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| Fail(VizlmStatus::Internal, "output contains NUL".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn check_out<T>(out: *mut *mut T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::null("out"));
    }
    unsafe { *out = ptr::null_mut() };
    Ok(())
}

fn json(v: &impl serde::Serialize) -> Result<String, Fail> {
    serde_json::to_string(v).map_err(|e| Fail(VizlmStatus::Internal, e.to_string()))
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn vizlm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vizlm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vizlm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads CSV bytes into a table with inferred column types.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `name` must be a C string.
#[no_mangle]
pub unsafe extern "C" fn vizlm_table_from_csv(
    bytes: *const u8,
    len: usize,
    name: *const c_char,
    out: *mut *mut VizlmTable,
) -> VizlmStatus {
    guard(|| {
        check_out(out)?;
        if bytes.is_null() {
            return Err(Fail::null("bytes"));
        }
        let name = text(name, "name")?;
        let data = std::slice::from_raw_parts(bytes, len);
        let table = dataset::load_csv(data, name).map_err(|e| Fail(VizlmStatus::DatasetError, e.to_string()))?;
        *out = Box::into_raw(Box::new(VizlmTable(table)));
        Ok(())
    })
}

/// Number of data rows, or 0 for NULL.
///
/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vizlm_table_row_count(table: *const VizlmTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.rows().len())
}

/// Column names and types as JSON.
///
/// # Safety
/// `table` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vizlm_table_sketch_json(table: *const VizlmTable, out: *mut *mut c_char) -> VizlmStatus {
    guard(|| {
        check_out(out)?;
        let table = handle(table, "table")?;
        out_string(out, json(&dataset::sketch(&table.0))?)
    })
}

/// # Safety
/// `table` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vizlm_table_free(table: *mut VizlmTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Parses VegaZero text.
///
/// # Safety
/// `src` must be a C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vizlm_spec_parse(src: *const c_char, out: *mut *mut VizlmSpec) -> VizlmStatus {
    guard(|| {
        check_out(out)?;
        let src = text(src, "src")?;
        let spec = vegazero::parse(src).map_err(|e| Fail(VizlmStatus::SyntaxError, e.to_string()))?;
        *out = Box::into_raw(Box::new(VizlmSpec(spec)));
        Ok(())
    })
}

/// Canonical text of a spec.
///
/// # Safety
/// `spec` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vizlm_spec_render(spec: *const VizlmSpec, out: *mut *mut c_char) -> VizlmStatus {
    guard(|| {
        check_out(out)?;
        let spec = handle(spec, "spec")?;
        out_string(out, vegazero::render(&spec.0))
    })
}

/// # Safety
/// `spec` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vizlm_spec_free(spec: *mut VizlmSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Checks a spec against a table. Writes a JSON array of violations, empty
/// when the spec is usable. Returns `VIZLM_STATUS_INVALID_SPEC` when it is not.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vizlm_validate_json(
    spec: *const VizlmSpec,
    table: *const VizlmTable,
    out: *mut *mut c_char,
) -> VizlmStatus {
    guard(|| {
        check_out(out)?;
        let spec = handle(spec, "spec")?;
        let table = handle(table, "table")?;
        let violations = vegazero::validate(&spec.0, &dataset::sketch(&table.0));
        out_string(out, json(&violations)?)?;
        if violations.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            Err(Fail(VizlmStatus::InvalidSpec, msgs.join("; ")))
        }
    })
}

/// Compiles a spec over a table into a Vega-Lite JSON document.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vizlm_compile_json(
    spec: *const VizlmSpec,
    table: *const VizlmTable,
    out: *mut *mut c_char,
) -> VizlmStatus {
    guard(|| {
        check_out(out)?;
        let spec = handle(spec, "spec")?;
        let table = handle(table, "table")?;
        let doc = vegazero::compile(&spec.0, &table.0).map_err(|e| match e {
            vegazero::CompileError::Invalid(_) => Fail(VizlmStatus::InvalidSpec, e.to_string()),
            _ => Fail(VizlmStatus::CompileError, e.to_string()),
        })?;
        out_string(out, json(&doc)?)
    })
}

/// Parses a model completion into JSON with `spec` (canonical text),
/// `narrative` and `lenient`. A nonzero `lenient` falls back to heuristic
/// extraction when the strict parse fails.
///
/// # Safety
/// `completion` must be a C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vizlm_parse_response_json(
    completion: *const c_char,
    lenient: i32,
    out: *mut *mut c_char,
) -> VizlmStatus {
    guard(|| {
        check_out(out)?;
        let completion = text(completion, "completion")?;
        let parsed = if lenient != 0 {
            response::lenient_extract(completion)
        } else {
            response::parse_response(completion)
        }
        .map_err(|e| Fail(VizlmStatus::ResponseError, e.to_string()))?;
        let value = serde_json::json!({
            "spec": vegazero::render(&parsed.spec),
            "narrative": parsed.narrative,
            "lenient": parsed.lenient,
        });
        out_string(out, value.to_string())
    })
}
