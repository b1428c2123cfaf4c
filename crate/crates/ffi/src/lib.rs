//! C ABI over the tool service, the grader and seed derivation.
//!
//! Every function returns an `RS_*` status code. Strings returned through
//! `char **` out-parameters are owned by the caller and must be released
//! with `rs_string_free`. After a failure, `rs_last_error_message` describes
//! it until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use reposim::config::RunConfig;
use reposim::grader::grade_response;
use reposim::qaengine::QAItem;
use reposim::seedstream::derive_stage_seed;
use reposim::toolserver::ToolService;

pub const RS_OK: i32 = 0;
/// A required pointer argument was null.
pub const RS_ERR_NULL: i32 = 1;
/// A string argument was not valid UTF-8.
pub const RS_ERR_UTF8: i32 = 2;
/// An argument was malformed, such as invalid JSON.
pub const RS_ERR_INVALID_ARGUMENT: i32 = 3;
/// The configuration could not be loaded.
pub const RS_ERR_CONFIG: i32 = 4;
/// The operation failed at run time.
pub const RS_ERR_RUNTIME: i32 = 5;
/// Rust code panicked; the handle should not be used again.
pub const RS_ERR_PANIC: i32 = 6;

/// Opaque tool service handle.
pub struct RsToolService {
    inner: ToolService,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let mut m = msg.into();
    m.retain(|c| c != '\0');
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(m).expect("NULs removed"));
}

struct Failure(i32, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RS_OK,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("panic inside reposim");
            RS_ERR_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(RS_ERR_NULL, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(RS_ERR_UTF8, format!("{name}: {e}")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|e| Failure(RS_ERR_RUNTIME, format!("output contains NUL: {e}")))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(RS_ERR_NULL, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn rs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Create a tool service from TOML configuration text, or from defaults
/// when `config_toml` is null.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_service_new(config_toml: *const c_char, out: *mut *mut RsToolService) -> i32 {
    guard(|| {
        check_out(out, "out")?;
        *out = ptr::null_mut();
        let cfg = if config_toml.is_null() {
            RunConfig::default()
        } else {
            let text = str_arg(config_toml, "config_toml")?;
            RunConfig::parse(text, "<ffi>").map_err(|e| Failure(RS_ERR_CONFIG, e.to_string()))?
        };
        cfg.validate().map_err(|e| Failure(RS_ERR_CONFIG, e.to_string()))?;
        let inner = cfg.tool_service().map_err(|e| Failure(RS_ERR_CONFIG, e.to_string()))?;
        *out = Box::into_raw(Box::new(RsToolService { inner }));
        Ok(())
    })
}

/// Destroy a service. Null is ignored.
///
/// # Safety
/// `service` must come from `rs_service_new` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rs_service_free(service: *mut RsToolService) {
    if !service.is_null() {
        drop(Box::from_raw(service));
    }
}

/// Call a tool with JSON arguments. `out_json` receives the response
/// envelope; tool-level failures are error envelopes with status `RS_OK`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated. The service may be
/// shared across threads.
#[no_mangle]
pub unsafe extern "C" fn rs_service_call(
    service: *const RsToolService,
    tool: *const c_char,
    arguments_json: *const c_char,
    out_json: *mut *mut c_char,
) -> i32 {
    guard(|| {
        check_out(out_json, "out_json")?;
        let svc = service.as_ref().ok_or_else(|| Failure(RS_ERR_NULL, "service is null".into()))?;
        let tool = str_arg(tool, "tool")?;
        let args: serde_json::Value = serde_json::from_str(str_arg(arguments_json, "arguments_json")?)
            .map_err(|e| Failure(RS_ERR_INVALID_ARGUMENT, format!("arguments_json: {e}")))?;
        let bytes = svc.inner.call(tool, &args).to_bytes();
        put_string(out_json, String::from_utf8(bytes).expect("envelopes are UTF-8"))
    })
}

/// Number of repository specs the service has built.
///
/// # Safety
/// `service` must be valid and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_service_build_count(service: *const RsToolService, out: *mut usize) -> i32 {
    guard(|| {
        check_out(out, "out")?;
        let svc = service.as_ref().ok_or_else(|| Failure(RS_ERR_NULL, "service is null".into()))?;
        *out = svc.inner.build_count();
        Ok(())
    })
}

/// Grade a raw response against one question item given as JSON.
/// `out_correct` receives 1 or 0; `out_result_json`, when not null, the
/// extracted answer and grade as JSON.
///
/// # Safety
/// Strings must be NUL-terminated; `out_correct` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_grade(
    item_json: *const c_char,
    response: *const c_char,
    out_correct: *mut i32,
    out_result_json: *mut *mut c_char,
) -> i32 {
    guard(|| {
        check_out(out_correct, "out_correct")?;
        let item: QAItem = serde_json::from_str(str_arg(item_json, "item_json")?)
            .map_err(|e| Failure(RS_ERR_INVALID_ARGUMENT, format!("item_json: {e}")))?;
        let (extracted, grade) = grade_response(str_arg(response, "response")?, &item);
        *out_correct = grade.correct as i32;
        if !out_result_json.is_null() {
            let v = serde_json::json!({"extracted": extracted, "grade": grade});
            put_string(out_result_json, v.to_string())?;
        }
        Ok(())
    })
}

/// Seed for a named stage of a master seed.
///
/// # Safety
/// `stage_label` must be NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rs_derive_stage_seed(master_seed: u64, stage_label: *const c_char, out: *mut u64) -> i32 {
    guard(|| {
        check_out(out, "out")?;
        *out = derive_stage_seed(master_seed, str_arg(stage_label, "stage_label")?);
        Ok(())
    })
}
