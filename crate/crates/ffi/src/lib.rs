//! C ABI over the codetations engine.
//!
//! Every fallible call returns a [`CdtStatus`]. On failure the message is
//! available from [`cdt_last_error`] on the same thread until the next call.
//! Strings handed out through `out` pointers are owned by the caller and must
//! be released with [`cdt_string_free`]. Offsets count Unicode scalar values.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use codetations::layers::{apply_layers, LayerSelection};
use codetations::model::{DocOffset, EditOperation};
use codetations::reanchor::similarity;
use codetations::repo::{AnchorSpec, ReattachMode, Repository};
use codetations::tracking::{map_position, Bias};
use codetations::Error;
use serde_json::{json, Value};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdtStatus {
    Ok = 0,
    NullArgument = 1,
    BadUtf8 = 2,
    Invalid = 3,
    OutOfBounds = 4,
    NotFound = 5,
    Ambiguous = 6,
    Stale = 7,
    Io = 8,
    Parse = 9,
    Provider = 10,
    Panic = 11,
    Precondition = 12,
}

impl From<&Error> for CdtStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::PathEscape(_) | Error::Invalid(_) => CdtStatus::Invalid,
            Error::Precondition(_) => CdtStatus::Precondition,
            Error::OutOfBounds { .. } => CdtStatus::OutOfBounds,
            Error::StaleDocument { .. } | Error::StaleProposal { .. } => CdtStatus::Stale,
            Error::NotFound(_) => CdtStatus::NotFound,
            Error::Ambiguous(_) => CdtStatus::Ambiguous,
            Error::Io { .. } => CdtStatus::Io,
            Error::Parse { .. } | Error::UnsupportedVersion { .. } => CdtStatus::Parse,
            Error::Provider(_) => CdtStatus::Provider,
        }
    }
}

/// Opaque handle to an opened repository.
pub struct CdtRepo {
    inner: Repository,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).ok());
}

struct Fail(CdtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(CdtStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CdtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CdtStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CdtStatus::Panic
        }
    }
}

unsafe fn arg_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(CdtStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CdtStatus::BadUtf8, format!("{name} is not UTF-8")))
}

unsafe fn arg_repo<'a>(p: *const CdtRepo) -> Result<&'a Repository, Fail> {
    p.as_ref()
        .map(|r| &r.inner)
        .ok_or_else(|| Fail(CdtStatus::NullArgument, "repo is null".into()))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(CdtStatus::NullArgument, "out pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_json(out: *mut *mut c_char, value: &Value) -> Result<(), Fail> {
    let s = CString::new(value.to_string()).expect("JSON text has no NUL");
    put(out, s.into_raw())
}

/// The message of the last failed call on this thread, or null.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn cdt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cdt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opens the repository rooted at `root`.
///
/// # Safety
/// `root` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdt_repo_open(root: *const c_char, out: *mut *mut CdtRepo) -> CdtStatus {
    guard(|| {
        let root = arg_str(root, "root")?;
        let repo = Repository::open(root)?;
        put(out, Box::into_raw(Box::new(CdtRepo { inner: repo })))
    })
}

/// Closes a handle from [`cdt_repo_open`]. Null is ignored.
///
/// # Safety
/// `repo` must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdt_repo_free(repo: *mut CdtRepo) {
    if !repo.is_null() {
        drop(Box::from_raw(repo));
    }
}

/// Writes the annotations of `path` as a JSON array.
///
/// # Safety
/// Pointers must be valid; `out_json` receives an owned string.
#[no_mangle]
pub unsafe extern "C" fn cdt_list(repo: *const CdtRepo, path: *const c_char, out_json: *mut *mut c_char) -> CdtStatus {
    guard(|| {
        let repo = arg_repo(repo)?;
        let file = repo.load(arg_str(path, "path")?)?;
        put_json(out_json, &json!(file.map(|f| f.annotations).unwrap_or_default()))
    })
}

/// Annotates `[start, end)` of `path`. `data_json` may be null.
/// The new tag is written to `out_json`.
///
/// # Safety
/// Pointers must be valid; `out_json` receives an owned string.
#[no_mangle]
pub unsafe extern "C" fn cdt_add(
    repo: *const CdtRepo,
    path: *const c_char,
    start: usize,
    end: usize,
    annotation_type: *const c_char,
    data_json: *const c_char,
    out_json: *mut *mut c_char,
) -> CdtStatus {
    guard(|| {
        let repo = arg_repo(repo)?;
        let data = if data_json.is_null() {
            Value::Null
        } else {
            serde_json::from_str(arg_str(data_json, "data_json")?)
                .map_err(|e| Fail(CdtStatus::Invalid, format!("data_json: {e}")))?
        };
        let tag = repo.add(
            arg_str(path, "path")?,
            &AnchorSpec::Range { start, end },
            arg_str(annotation_type, "annotation_type")?,
            data,
        )?;
        put_json(out_json, &json!(tag))
    })
}

/// Removes the tag with id (or unique id prefix) `id`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cdt_remove(repo: *const CdtRepo, path: *const c_char, id: *const c_char) -> CdtStatus {
    guard(|| {
        let repo = arg_repo(repo)?;
        repo.remove(arg_str(path, "path")?, arg_str(id, "id")?)?;
        Ok(())
    })
}

/// Writes `{"path", "state", "orphaned"}` for `path`.
///
/// # Safety
/// Pointers must be valid; `out_json` receives an owned string.
#[no_mangle]
pub unsafe extern "C" fn cdt_check(repo: *const CdtRepo, path: *const c_char, out_json: *mut *mut c_char) -> CdtStatus {
    guard(|| {
        let repo = arg_repo(repo)?;
        put_json(out_json, &json!(repo.check(arg_str(path, "path")?)?))
    })
}

/// Re-anchors detached tags of `path` with strategy `exact`, `fuzzy` or
/// `semantic` (semantic uses the configured provider). With `accept_all`
/// every proposal is applied and the sidecar saved; otherwise nothing is
/// written. The plan is reported as JSON.
///
/// # Safety
/// Pointers must be valid; `out_json` receives an owned string.
#[no_mangle]
pub unsafe extern "C" fn cdt_reattach(
    repo: *const CdtRepo,
    path: *const c_char,
    strategy: *const c_char,
    accept_all: bool,
    out_json: *mut *mut c_char,
) -> CdtStatus {
    guard(|| {
        let repo = arg_repo(repo)?;
        let mode: ReattachMode = arg_str(strategy, "strategy")?.parse()?;
        let provider = match mode {
            ReattachMode::Semantic => repo.config().provider(None)?,
            _ => None,
        };
        let plan = repo.plan_reattach(arg_str(path, "path")?, mode, &repo.config().reattach, provider.as_deref())?;
        let accepted: Vec<_> = if accept_all {
            plan.proposals.iter().map(|p| p.tag_id).collect()
        } else {
            Vec::new()
        };
        if accept_all {
            repo.apply_plan(&plan, &accepted)?;
        }
        put_json(
            out_json,
            &json!({
                "path": plan.path,
                "proposals": plan.proposals,
                "orphaned": plan.orphaned,
                "accepted": accepted,
                "applied": accept_all,
                "warnings": plan.warnings,
            }),
        )
    })
}

/// Writes a layered copy of the repository to `out_dir`. `layers_csv` is a
/// comma-separated list of layer names in splice order (may be empty).
///
/// # Safety
/// Pointers must be valid; `out_json` receives an owned string.
#[no_mangle]
pub unsafe extern "C" fn cdt_apply_layers(
    repo: *const CdtRepo,
    layers_csv: *const c_char,
    out_dir: *const c_char,
    out_json: *mut *mut c_char,
) -> CdtStatus {
    guard(|| {
        let repo = arg_repo(repo)?;
        let selection = LayerSelection::parse(arg_str(layers_csv, "layers_csv")?)?;
        let report = apply_layers(repo.root(), &selection, Path::new(arg_str(out_dir, "out_dir")?))?;
        put_json(out_json, &json!(report))
    })
}

/// Normalized edit similarity of two strings, in `[0, 1]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cdt_similarity(a: *const c_char, b: *const c_char, out: *mut f64) -> CdtStatus {
    guard(|| put(out, similarity(arg_str(a, "a")?, arg_str(b, "b")?)))
}

/// Maps offset `x` of a document of `doc_len` scalars through the edit that
/// replaces `deleted_length` scalars at `position` with `inserted_text`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cdt_map_position(
    x: usize,
    position: usize,
    deleted_length: usize,
    inserted_text: *const c_char,
    right_bias: bool,
    doc_len: usize,
    out: *mut usize,
) -> CdtStatus {
    guard(|| {
        let edit = EditOperation::new(position, deleted_length, arg_str(inserted_text, "inserted_text")?);
        let bias = if right_bias { Bias::Right } else { Bias::Left };
        put(out, map_position(DocOffset(x), &edit, bias, doc_len)?.0)
    })
}
