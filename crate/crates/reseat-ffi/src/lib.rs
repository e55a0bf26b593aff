//! C bindings for the reseat matching library.
//!
//! Documents cross the boundary as JSON text in the library's canonical
//! layout; handles returned through out-parameters are owned by the caller
//! and released with the matching `*_free` function. Strings returned
//! through `char **` out-parameters are released with
//! [`reseat_string_free`]. Every call is panic-safe: a panic is caught at
//! the boundary and reported as `RESEAT_STATUS_INTERNAL_ERROR`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use reseat::io::{self, Delta};
use reseat::realloc::{
    apply_school_delta, apply_student_delta, min_realloc_schools, min_realloc_students,
};
use reseat::{find_blocking_pairs, Error, Instance, Matching};

/// Outcome of a call. Anything but `OK` leaves a message readable through
/// [`reseat_last_error`] until the next call on the same thread.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReseatStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An input string was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The document was not syntactically valid JSON of the expected shape.
    ParseError = 3,
    /// The document parsed but violates a semantic rule, or the inputs are
    /// inconsistent with each other.
    InvalidInput = 4,
    /// The change document is for the other setting than the function called.
    WrongDeltaKind = 5,
    /// No output satisfying the constraints exists, or a configured bound
    /// was exceeded.
    Infeasible = 6,
    /// A self-check failed or a panic was caught at the boundary.
    InternalError = 7,
}

/// A validated market. Opaque.
pub struct ReseatInstance(Instance);

/// An assignment of students to schools. Opaque.
pub struct ReseatMatching(Matching);

/// A between-rounds change document of either kind. Opaque.
pub struct ReseatDelta(Delta);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg)
        .unwrap_or_else(|_| CString::new("error message held a NUL byte").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(e: &Error) -> ReseatStatus {
    match e {
        Error::Parse(_) | Error::Io(_) => ReseatStatus::ParseError,
        Error::Infeasible(_) | Error::BoundExceeded { .. } => ReseatStatus::Infeasible,
        Error::Certification(_) => ReseatStatus::InternalError,
        _ => ReseatStatus::InvalidInput,
    }
}

fn fail(status: ReseatStatus, msg: impl Into<String>) -> ReseatStatus {
    set_error(msg.into());
    status
}

fn fail_with(e: &Error) -> ReseatStatus {
    fail(status_of(e), e.to_string())
}

/// Clears the error slot, runs the body, and converts a panic into a status.
fn guarded(body: impl FnOnce() -> ReseatStatus) -> ReseatStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(
            ReseatStatus::InternalError,
            "caught a panic at the language boundary",
        ),
    }
}

/// Reads a caller string, rejecting null and non-UTF-8.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, ReseatStatus> {
    if p.is_null() {
        return Err(fail(ReseatStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ReseatStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn read_handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, ReseatStatus> {
    p.as_ref()
        .ok_or_else(|| fail(ReseatStatus::NullArgument, format!("{what} is null")))
}

/// Boxes `value` into `*out`. `out` must already be known non-null.
unsafe fn give<T>(out: *mut *mut T, value: T) -> ReseatStatus {
    *out = Box::into_raw(Box::new(value));
    ReseatStatus::Ok
}

unsafe fn give_string(out: *mut *mut c_char, s: String) -> ReseatStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            ReseatStatus::Ok
        }
        Err(_) => fail(
            ReseatStatus::InternalError,
            "serialized document held a NUL byte",
        ),
    }
}

fn check_out<T>(out: *mut T, what: &str) -> Result<(), ReseatStatus> {
    if out.is_null() {
        Err(fail(ReseatStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

macro_rules! require {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Version of the library, as a static string. Never freed by the caller.
#[no_mangle]
pub extern "C" fn reseat_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message from the most recent failing call on this thread, or null if the
/// most recent call succeeded. The pointer is valid until the next call into
/// the library on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn reseat_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |msg| msg.as_ptr())
    })
}

/// Releases a string obtained from a `char **` out-parameter.
///
/// # Safety
/// `s` must be null or a pointer previously returned by this library and
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn reseat_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a market document.
///
/// # Safety
/// `json` must be null or NUL-terminated; `out` must be a writable slot.
/// On `OK`, `*out` owns the instance; release it with
/// [`reseat_instance_free`].
#[no_mangle]
pub unsafe extern "C" fn reseat_instance_parse(
    json: *const c_char,
    out: *mut *mut ReseatInstance,
) -> ReseatStatus {
    guarded(|| {
        require!(check_out(out, "out"));
        let text = require!(read_str(json, "json"));
        match io::parse_instance(text) {
            Ok(inst) => give(out, ReseatInstance(inst)),
            Err(e) => fail_with(&e),
        }
    })
}

/// Serializes a market in the canonical layout.
///
/// # Safety
/// `inst` must be a live handle; `out` must be a writable slot. On `OK`,
/// `*out` is released with [`reseat_string_free`].
#[no_mangle]
pub unsafe extern "C" fn reseat_instance_to_json(
    inst: *const ReseatInstance,
    out: *mut *mut c_char,
) -> ReseatStatus {
    guarded(|| {
        require!(check_out(out, "out"));
        let inst = require!(read_handle(inst, "inst"));
        give_string(out, io::serialize_instance(&inst.0))
    })
}

/// Releases an instance handle. Null is ignored.
///
/// # Safety
/// `inst` must be null or a live handle from this library; it is dead
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn reseat_instance_free(inst: *mut ReseatInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Parses a matching document.
///
/// # Safety
/// `json` must be null or NUL-terminated; `out` must be a writable slot.
/// On `OK`, `*out` owns the matching; release it with
/// [`reseat_matching_free`].
#[no_mangle]
pub unsafe extern "C" fn reseat_matching_parse(
    json: *const c_char,
    out: *mut *mut ReseatMatching,
) -> ReseatStatus {
    guarded(|| {
        require!(check_out(out, "out"));
        let text = require!(read_str(json, "json"));
        match io::parse_matching(text) {
            Ok(m) => give(out, ReseatMatching(m)),
            Err(e) => fail_with(&e),
        }
    })
}

/// Serializes a matching in the canonical layout.
///
/// # Safety
/// `m` must be a live handle; `out` must be a writable slot. On `OK`,
/// `*out` is released with [`reseat_string_free`].
#[no_mangle]
pub unsafe extern "C" fn reseat_matching_to_json(
    m: *const ReseatMatching,
    out: *mut *mut c_char,
) -> ReseatStatus {
    guarded(|| {
        require!(check_out(out, "out"));
        let m = require!(read_handle(m, "m"));
        give_string(out, io::serialize_matching(&m.0))
    })
}

/// Releases a matching handle. Null is ignored.
///
/// # Safety
/// `m` must be null or a live handle from this library; it is dead
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn reseat_matching_free(m: *mut ReseatMatching) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Parses a change document of either kind.
///
/// # Safety
/// `json` must be null or NUL-terminated; `out` must be a writable slot.
/// On `OK`, `*out` owns the delta; release it with [`reseat_delta_free`].
#[no_mangle]
pub unsafe extern "C" fn reseat_delta_parse(
    json: *const c_char,
    out: *mut *mut ReseatDelta,
) -> ReseatStatus {
    guarded(|| {
        require!(check_out(out, "out"));
        let text = require!(read_str(json, "json"));
        match io::parse_delta(text) {
            Ok(d) => give(out, ReseatDelta(d)),
            Err(e) => fail_with(&e),
        }
    })
}

/// Serializes a change document in the canonical layout.
///
/// # Safety
/// `delta` must be a live handle; `out` must be a writable slot. On `OK`,
/// `*out` is released with [`reseat_string_free`].
#[no_mangle]
pub unsafe extern "C" fn reseat_delta_to_json(
    delta: *const ReseatDelta,
    out: *mut *mut c_char,
) -> ReseatStatus {
    guarded(|| {
        require!(check_out(out, "out"));
        let delta = require!(read_handle(delta, "delta"));
        give_string(out, io::serialize_delta(&delta.0))
    })
}

/// Releases a delta handle. Null is ignored.
///
/// # Safety
/// `delta` must be null or a live handle from this library; it is dead
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn reseat_delta_free(delta: *mut ReseatDelta) {
    if !delta.is_null() {
        drop(Box::from_raw(delta));
    }
}

/// Applies a change document, producing the next round's market.
///
/// # Safety
/// `inst` and `delta` must be live handles; `out` must be a writable slot.
/// On `OK`, `*out` owns the new instance; release it with
/// [`reseat_instance_free`].
#[no_mangle]
pub unsafe extern "C" fn reseat_apply_delta(
    inst: *const ReseatInstance,
    delta: *const ReseatDelta,
    out: *mut *mut ReseatInstance,
) -> ReseatStatus {
    guarded(|| {
        require!(check_out(out, "out"));
        let inst = require!(read_handle(inst, "inst"));
        let delta = require!(read_handle(delta, "delta"));
        let applied = match &delta.0 {
            Delta::Schools(d) => apply_school_delta(&inst.0, d),
            Delta::Students(d) => apply_student_delta(&inst.0, d),
        };
        match applied {
            Ok(next) => give(out, ReseatInstance(next)),
            Err(e) => fail_with(&e),
        }
    })
}

/// Runs student-proposing deferred acceptance.
///
/// # Safety
/// `inst` must be a live handle; `out` must be a writable slot. On `OK`,
/// `*out` owns the matching; release it with [`reseat_matching_free`].
#[no_mangle]
pub unsafe extern "C" fn reseat_student_proposing_da(
    inst: *const ReseatInstance,
    out: *mut *mut ReseatMatching,
) -> ReseatStatus {
    guarded(|| {
        require!(check_out(out, "out"));
        let inst = require!(read_handle(inst, "inst"));
        match reseat::da::student_proposing_da(&inst.0) {
            Ok(m) => give(out, ReseatMatching(m)),
            Err(e) => fail_with(&e),
        }
    })
}

/// Runs school-proposing deferred acceptance.
///
/// # Safety
/// `inst` must be a live handle; `out` must be a writable slot. On `OK`,
/// `*out` owns the matching; release it with [`reseat_matching_free`].
#[no_mangle]
pub unsafe extern "C" fn reseat_school_proposing_da(
    inst: *const ReseatInstance,
    out: *mut *mut ReseatMatching,
) -> ReseatStatus {
    guarded(|| {
        require!(check_out(out, "out"));
        let inst = require!(read_handle(inst, "inst"));
        match reseat::da::school_proposing_da(&inst.0) {
            Ok(m) => give(out, ReseatMatching(m)),
            Err(e) => fail_with(&e),
        }
    })
}

/// Counts blocking pairs of `m` on `inst`; zero means stable.
///
/// # Safety
/// `inst` and `m` must be live handles; `out_count` must be a writable
/// slot.
#[no_mangle]
pub unsafe extern "C" fn reseat_blocking_pair_count(
    inst: *const ReseatInstance,
    m: *const ReseatMatching,
    out_count: *mut usize,
) -> ReseatStatus {
    guarded(|| {
        require!(check_out(out_count, "out_count"));
        let inst = require!(read_handle(inst, "inst"));
        let m = require!(read_handle(m, "m"));
        match find_blocking_pairs(&inst.0, &m.0) {
            Ok(pairs) => {
                *out_count = pairs.len();
                ReseatStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Minimum re-allocation after school-side changes. `delta` must hold a
/// school-side change document. On `OK`, `*out_matching` is the new stable
/// matching and `*out_moved` the number of re-allocated students.
///
/// # Safety
/// `round1`, `m`, and `delta` must be live handles; `out_matching` and
/// `out_moved` must be writable slots. On `OK`, `*out_matching` is released
/// with [`reseat_matching_free`].
#[no_mangle]
pub unsafe extern "C" fn reseat_min_realloc_schools(
    round1: *const ReseatInstance,
    m: *const ReseatMatching,
    delta: *const ReseatDelta,
    out_matching: *mut *mut ReseatMatching,
    out_moved: *mut usize,
) -> ReseatStatus {
    guarded(|| {
        require!(check_out(out_matching, "out_matching"));
        require!(check_out(out_moved, "out_moved"));
        let round1 = require!(read_handle(round1, "round1"));
        let m = require!(read_handle(m, "m"));
        let delta = require!(read_handle(delta, "delta"));
        let Delta::Schools(delta) = &delta.0 else {
            return fail(
                ReseatStatus::WrongDeltaKind,
                "delta holds a student-side change; this function needs a school-side one",
            );
        };
        match min_realloc_schools(&round1.0, &m.0, delta) {
            Ok(r) => {
                *out_moved = r.realloc_count;
                give(out_matching, ReseatMatching(r.matching))
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Minimum re-allocation after student-side changes. `delta` must hold a
/// student-side change document. On `OK`, `*out_matching` is the new stable
/// matching and `*out_moved` the number of re-allocated students.
///
/// # Safety
/// `round1`, `m`, and `delta` must be live handles; `out_matching` and
/// `out_moved` must be writable slots. On `OK`, `*out_matching` is released
/// with [`reseat_matching_free`].
#[no_mangle]
pub unsafe extern "C" fn reseat_min_realloc_students(
    round1: *const ReseatInstance,
    m: *const ReseatMatching,
    delta: *const ReseatDelta,
    out_matching: *mut *mut ReseatMatching,
    out_moved: *mut usize,
) -> ReseatStatus {
    guarded(|| {
        require!(check_out(out_matching, "out_matching"));
        require!(check_out(out_moved, "out_moved"));
        let round1 = require!(read_handle(round1, "round1"));
        let m = require!(read_handle(m, "m"));
        let delta = require!(read_handle(delta, "delta"));
        let Delta::Students(delta) = &delta.0 else {
            return fail(
                ReseatStatus::WrongDeltaKind,
                "delta holds a school-side change; this function needs a student-side one",
            );
        };
        match min_realloc_students(&round1.0, &m.0, delta) {
            Ok(r) => {
                *out_moved = r.realloc_count;
                give(out_matching, ReseatMatching(r.matching))
            }
            Err(e) => fail_with(&e),
        }
    })
}
