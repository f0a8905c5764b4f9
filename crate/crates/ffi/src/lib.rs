//! C ABI for the mesa routing engine.
//!
//! Handles are opaque pointers created by `*_load` functions and released
//! with the matching `*_free`. Every fallible call returns a `MesaStatus`;
//! on failure `mesa_last_error()` describes what went wrong on the calling
//! thread. Strings returned through out-parameters are owned by the caller
//! and must be released with `mesa_string_free`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use libc::c_char;
use mesa_core::backend::{load_script, replay_cache, ModelBackend, ScriptedBackend};
use mesa_core::bench::{
    emit_report, load_suite_with, run_matrix, script_manifest, two_prop_ztest, BenchmarkItem,
    Condition, GoldAction, ReportFormat, ResultsTable, Slice, SLICE_SIZE,
};
use mesa_core::cards::{lint_cards, load_registry, CardRegistry};
use mesa_core::router::{run_trajectory, RoutingConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MesaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    Backend = 6,
    Routing = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MesaFormat {
    Text = 0,
    Csv = 1,
    Machine = 2,
}

/// Loaded skill cards.
pub struct MesaRegistry {
    inner: CardRegistry,
}

/// A model backend (scripted or cache replay).
pub struct MesaBackend {
    inner: Arc<dyn ModelBackend>,
    scripted: Option<Arc<ScriptedBackend>>,
}

/// Results of a matrix run.
pub struct MesaReport {
    inner: ResultsTable,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Fail(MesaStatus, String);

type FfiResult<T> = Result<T, Fail>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> MesaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MesaStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside mesa");
            MesaStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Fail(MesaStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MesaStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| Fail(MesaStatus::NullArgument, format!("{name} is NULL")))
}

fn out_arg<T>(p: *mut T, name: &str) -> FfiResult<()> {
    if p.is_null() {
        Err(Fail(MesaStatus::NullArgument, format!("{name} is NULL")))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next mesa call on the same thread.
#[no_mangle]
pub extern "C" fn mesa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn mesa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from a mesa function that returns an owned string, and
/// must not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn mesa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a card file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mesa_registry_load(path: *const c_char, out: *mut *mut MesaRegistry) -> MesaStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        out_arg(out, "out")?;
        let inner = load_registry(path).map_err(|e| {
            let status = match e {
                mesa_core::cards::CardError::Io { .. } => MesaStatus::Io,
                _ => MesaStatus::Parse,
            };
            Fail(status, e.to_string())
        })?;
        *out = Box::into_raw(Box::new(MesaRegistry { inner }));
        Ok(())
    })
}

/// Number of cards, or 0 for NULL.
///
/// # Safety
/// `reg` must be NULL or a live registry handle.
#[no_mangle]
pub unsafe extern "C" fn mesa_registry_len(reg: *const MesaRegistry) -> usize {
    reg.as_ref().map_or(0, |r| r.inner.len())
}

/// Lint diagnostics, one `id:code:message` per line. `*count` receives the
/// number of diagnostics.
///
/// # Safety
/// `reg` must be a live registry handle; `out` and `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mesa_registry_lint(
    reg: *const MesaRegistry,
    out: *mut *mut c_char,
    count: *mut usize,
) -> MesaStatus {
    guard(|| {
        let reg = ref_arg(reg, "reg")?;
        out_arg(out, "out")?;
        out_arg(count, "count")?;
        let diags = lint_cards(&reg.inner);
        let text: String = diags.iter().map(|d| format!("{d}\n")).collect();
        *count = diags.len();
        *out = into_c_string(text);
        Ok(())
    })
}

/// # Safety
/// `reg` must be NULL or a handle from `mesa_registry_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mesa_registry_free(reg: *mut MesaRegistry) {
    if !reg.is_null() {
        drop(Box::from_raw(reg));
    }
}

/// Loads a behavior script as a deterministic backend.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mesa_backend_scripted(path: *const c_char, out: *mut *mut MesaBackend) -> MesaStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        out_arg(out, "out")?;
        let script = load_script(path).map_err(|e| Fail(MesaStatus::Parse, e.to_string()))?;
        let scripted = Arc::new(ScriptedBackend::new(script));
        *out = Box::into_raw(Box::new(MesaBackend {
            inner: scripted.clone(),
            scripted: Some(scripted),
        }));
        Ok(())
    })
}

/// Opens a response cache in strict replay mode.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mesa_backend_replay(path: *const c_char, out: *mut *mut MesaBackend) -> MesaStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        out_arg(out, "out")?;
        let cache = replay_cache(path).map_err(|e| Fail(MesaStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(MesaBackend {
            inner: Arc::new(cache),
            scripted: None,
        }));
        Ok(())
    })
}

/// # Safety
/// `backend` must be NULL or a backend handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mesa_backend_free(backend: *mut MesaBackend) {
    if !backend.is_null() {
        drop(Box::from_raw(backend));
    }
}

fn parse_conditions(list: Option<&str>) -> FfiResult<Vec<Condition>> {
    match list {
        None => Ok(Condition::ALL.to_vec()),
        Some(s) => s
            .split(',')
            .filter(|n| !n.trim().is_empty())
            .map(|n| n.parse().map_err(|e: mesa_core::bench::UnknownCondition| Fail(MesaStatus::InvalidArgument, e.to_string())))
            .collect(),
    }
}

/// Runs the condition matrix with default routing settings.
///
/// `conditions` is a comma-separated list of names, or NULL for all seven.
/// When `strict_sizes` is non-zero the suite must hold 50 items per slice.
/// A scripted backend is coverage-checked before any item runs.
///
/// # Safety
/// Pointers must be valid; `conditions` may be NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mesa_eval(
    suite_path: *const c_char,
    reg: *const MesaRegistry,
    backend: *const MesaBackend,
    conditions: *const c_char,
    strict_sizes: i32,
    out: *mut *mut MesaReport,
) -> MesaStatus {
    guard(|| {
        let suite_path = str_arg(suite_path, "suite_path")?;
        let reg = ref_arg(reg, "reg")?;
        let backend = ref_arg(backend, "backend")?;
        out_arg(out, "out")?;
        let conditions = if conditions.is_null() {
            parse_conditions(None)?
        } else {
            parse_conditions(Some(str_arg(conditions, "conditions")?))?
        };
        let per_slice = (strict_sizes != 0).then_some(SLICE_SIZE);
        let items = load_suite_with(Path::new(suite_path), &reg.inner, per_slice)
            .map_err(|e| Fail(MesaStatus::Parse, e.to_string()))?;
        if let Some(s) = &backend.scripted {
            let manifest = script_manifest(&items, &conditions);
            s.script().check_coverage(manifest.iter().map(|(i, c, k)| (i.as_str(), c.as_str(), k.clone())))
                .map_err(|e| Fail(MesaStatus::Backend, e.to_string()))?;
        }
        let run = run_matrix(&items, &reg.inner, backend.inner.as_ref(), &conditions, &RoutingConfig::default())
            .map_err(|e| Fail(MesaStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(MesaReport { inner: run.table }));
        Ok(())
    })
}

/// Accuracy of one cell. `slice` is 'A', 'B', 'C', or 'O' for overall.
///
/// # Safety
/// `report` must be a live report handle; `condition` a NUL-terminated
/// string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mesa_report_accuracy(
    report: *const MesaReport,
    condition: *const c_char,
    slice: c_char,
    out: *mut f64,
) -> MesaStatus {
    guard(|| {
        let report = ref_arg(report, "report")?;
        let name = str_arg(condition, "condition")?;
        out_arg(out, "out")?;
        let c: Condition = name
            .parse()
            .map_err(|e: mesa_core::bench::UnknownCondition| Fail(MesaStatus::InvalidArgument, e.to_string()))?;
        let t = &report.inner;
        let value = match slice as u8 {
            b'A' | b'a' => t.accuracy(c, Slice::A),
            b'B' | b'b' => t.accuracy(c, Slice::B),
            b'C' | b'c' => t.accuracy(c, Slice::C),
            b'O' | b'o' => t.overall(c),
            other => {
                return Err(Fail(
                    MesaStatus::InvalidArgument,
                    format!("slice must be one of A, B, C, O (got {:?})", other as char),
                ))
            }
        };
        *out = value.ok_or_else(|| Fail(MesaStatus::InvalidArgument, format!("condition {c} was not run")))?;
        Ok(())
    })
}

/// Renders a report as text, CSV or machine-readable JSON.
///
/// # Safety
/// `report` must be a live report handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mesa_report_render(
    report: *const MesaReport,
    format: MesaFormat,
    out: *mut *mut c_char,
) -> MesaStatus {
    guard(|| {
        let report = ref_arg(report, "report")?;
        out_arg(out, "out")?;
        let f = match format {
            MesaFormat::Text => ReportFormat::Text,
            MesaFormat::Csv => ReportFormat::Csv,
            MesaFormat::Machine => ReportFormat::Machine,
        };
        *out = into_c_string(emit_report(&report.inner, f));
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or a report handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mesa_report_free(report: *mut MesaReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Routes one prompt against every card in `reg` and writes the trajectory
/// as JSON. `item_id` selects the script rows the backend answers from.
///
/// # Safety
/// All pointers must be valid NUL-terminated strings or live handles;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mesa_route(
    reg: *const MesaRegistry,
    backend: *const MesaBackend,
    item_id: *const c_char,
    prompt: *const c_char,
    condition: *const c_char,
    out: *mut *mut c_char,
) -> MesaStatus {
    guard(|| {
        let reg = ref_arg(reg, "reg")?;
        let backend = ref_arg(backend, "backend")?;
        let item_id = str_arg(item_id, "item_id")?;
        let prompt = str_arg(prompt, "prompt")?;
        let condition: Condition = str_arg(condition, "condition")?
            .parse()
            .map_err(|e: mesa_core::bench::UnknownCondition| Fail(MesaStatus::InvalidArgument, e.to_string()))?;
        out_arg(out, "out")?;
        if prompt.is_empty() {
            return Err(Fail(MesaStatus::InvalidArgument, "prompt is empty".into()));
        }
        let item = BenchmarkItem {
            id: item_id.to_string(),
            slice: Slice::B,
            prompt: prompt.to_string(),
            kind_tags: Default::default(),
            attachments: Vec::new(),
            injected_card_ids: reg.inner.iter().map(|c| c.id.clone()).collect(),
            gold_action: GoldAction::GateSkill,
            gold_answer: None,
        };
        let rec = run_trajectory(&item, &reg.inner, backend.inner.as_ref(), &RoutingConfig::default(), condition)
            .map_err(|e| Fail(MesaStatus::Routing, e.to_string()))?;
        if let Some(d) = rec.diagnostics.first() {
            return Err(Fail(MesaStatus::Backend, d.clone()));
        }
        let json = serde_json::to_string(&rec).map_err(|e| Fail(MesaStatus::Routing, e.to_string()))?;
        *out = into_c_string(json);
        Ok(())
    })
}

/// Pooled two-proportion z-test.
///
/// # Safety
/// `z` and `p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mesa_two_prop_ztest(k1: u64, n1: u64, k2: u64, n2: u64, z: *mut f64, p: *mut f64) -> MesaStatus {
    guard(|| {
        out_arg(z, "z")?;
        out_arg(p, "p")?;
        let t = two_prop_ztest(k1, n1, k2, n2).map_err(|e| Fail(MesaStatus::InvalidArgument, e.to_string()))?;
        *z = t.z;
        *p = t.p_two_sided;
        Ok(())
    })
}
