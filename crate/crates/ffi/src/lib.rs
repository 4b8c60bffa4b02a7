//! C ABI over the multi-stage graph library.
//!
//! Callers hold instances behind the opaque [`MspInstance`] handle. Every
//! function returns an [`MspStatus`] code (or a sentinel value) instead of
//! unwinding; on failure a thread-local message is available through
//! [`msp_last_error_message`]. Strings returned by the library must be
//! released with [`msp_string_free`], handles with [`msp_instance_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use msp_core::format::{from_json, to_json, Provenance, Route};
use msp_core::graph::MultiStageGraph;
use msp_core::kernel::{zh_solve, Decision, KernelError, Mode, ZhOptions};
use msp_core::oracle::{sigma_path_exists, OracleBudget, OracleDecision};
use msp_core::reduction::parse_dimacs;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MspStatus {
    /// The call succeeded.
    MspOk = 0,
    /// A required pointer argument was null.
    MspErrNullArgument = 1,
    /// A string argument was not valid UTF-8.
    MspErrUtf8 = 2,
    /// The input text could not be parsed.
    MspErrParse = 3,
    /// The instance failed structural validation.
    MspErrInvalidInstance = 4,
    /// A panic was caught at the boundary; state may be stale.
    MspErrPanic = 5,
}

/// Counters of one solver run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MspSolveStats {
    pub passes: u32,
    pub prune_events: u64,
    pub initial_support: u64,
    pub kernel_size: u64,
    pub wall_millis: u64,
}

/// An instance held by the library: a graph and how it came to exist.
pub struct MspInstance {
    graph: MultiStageGraph,
    provenance: Provenance,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("nul bytes stripped");
    });
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn msp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

fn guard(body: impl FnOnce() -> MspStatus) -> MspStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".to_string());
            MspStatus::MspErrPanic
        }
    }
}

/// # Safety
/// `text` must be a valid nul-terminated string or null.
unsafe fn read_str<'a>(text: *const c_char) -> Result<&'a str, MspStatus> {
    if text.is_null() {
        set_error("null string argument".to_string());
        return Err(MspStatus::MspErrNullArgument);
    }
    CStr::from_ptr(text).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".to_string());
        MspStatus::MspErrUtf8
    })
}

unsafe fn write_handle(
    out: *mut *mut MspInstance,
    graph: MultiStageGraph,
    provenance: Provenance,
) -> MspStatus {
    if out.is_null() {
        set_error("null output handle".to_string());
        return MspStatus::MspErrNullArgument;
    }
    *out = Box::into_raw(Box::new(MspInstance { graph, provenance }));
    MspStatus::MspOk
}

/// Parses an instance document. On success `*out` owns a new handle.
///
/// # Safety
/// `json` must be nul-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msp_instance_load_json(
    json: *const c_char,
    out: *mut *mut MspInstance,
) -> MspStatus {
    guard(|| {
        let text = match read_str(json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match from_json(text) {
            Ok(loaded) => write_handle(out, loaded.graph, loaded.provenance),
            Err(e) => {
                set_error(e.to_string());
                MspStatus::MspErrParse
            }
        }
    })
}

/// Parses DIMACS CNF text and reduces it to an instance. `use_gadgets`
/// selects the degree-bounded reduction; otherwise one stage per clause.
///
/// # Safety
/// `dimacs` must be nul-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn msp_instance_from_dimacs(
    dimacs: *const c_char,
    use_gadgets: bool,
    out: *mut *mut MspInstance,
) -> MspStatus {
    guard(|| {
        let text = match read_str(dimacs) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let formula = match parse_dimacs(text, false) {
            Ok(f) => f,
            Err(e) => {
                set_error(e.to_string());
                return MspStatus::MspErrParse;
            }
        };
        let route = if use_gadgets { Route::Gadget } else { Route::Plain };
        match msp_core::format::reduce_via(&formula, route) {
            Some(graph) => write_handle(out, graph, Provenance::Dimacs { route }),
            None => {
                set_error("formula could not be reduced".to_string());
                MspStatus::MspErrParse
            }
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `h` must be a pointer returned by this library, released at most once.
#[no_mangle]
pub unsafe extern "C" fn msp_instance_free(h: *mut MspInstance) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Serializes the instance document. Returns null on failure; release the
/// string with [`msp_string_free`].
///
/// # Safety
/// `h` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn msp_instance_to_json(h: *const MspInstance) -> *mut c_char {
    let result = catch_unwind(AssertUnwindSafe(|| {
        let Some(instance) = h.as_ref() else {
            set_error("null instance handle".to_string());
            return std::ptr::null_mut();
        };
        let text = to_json(&instance.graph, instance.provenance.clone());
        match CString::new(text) {
            Ok(owned) => owned.into_raw(),
            Err(_) => {
                set_error("serialized text contained a nul byte".to_string());
                std::ptr::null_mut()
            }
        }
    }));
    result.unwrap_or_else(|_| {
        set_error("internal panic".to_string());
        std::ptr::null_mut()
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be a string returned by this library, released at most once.
#[no_mangle]
pub unsafe extern "C" fn msp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of stages `L`; 0 for a null handle.
///
/// # Safety
/// `h` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn msp_instance_stages(h: *const MspInstance) -> u64 {
    h.as_ref().map_or(0, |i| i.graph.last_stage() as u64)
}

/// Number of edges; 0 for a null handle.
///
/// # Safety
/// `h` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn msp_instance_edge_count(h: *const MspInstance) -> u64 {
    h.as_ref().map_or(0, |i| i.graph.num_edges() as u64)
}

/// Number of vertices; 0 for a null handle.
///
/// # Safety
/// `h` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn msp_instance_vertex_count(h: *const MspInstance) -> u64 {
    h.as_ref().map_or(0, |i| i.graph.num_vertices() as u64)
}

/// Checks the structural shape, and with `hygiene` also the label
/// properties after preprocessing. Violations are reported through
/// [`msp_last_error_message`], one per line.
///
/// # Safety
/// `h` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn msp_validate(h: *const MspInstance, hygiene: bool) -> MspStatus {
    guard(|| {
        let Some(instance) = h.as_ref() else {
            set_error("null instance handle".to_string());
            return MspStatus::MspErrNullArgument;
        };
        let mut violations = instance.graph.validate_2msp();
        if hygiene {
            let pre = msp_core::kernel::preprocess(&instance.graph);
            violations.extend(pre.check_properties());
        }
        if violations.is_empty() {
            MspStatus::MspOk
        } else {
            let listing: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            set_error(listing.join("\n"));
            MspStatus::MspErrInvalidInstance
        }
    })
}

/// Runs the decision kernel. `*decision_out` becomes 1 for yes, 0 for no.
/// `stats_out` may be null. In strict mode structural violations reject
/// the instance instead of solving it.
///
/// # Safety
/// `h` must be a live handle or null; `decision_out` must be a valid
/// pointer; `stats_out` must be a valid pointer or null.
#[no_mangle]
pub unsafe extern "C" fn msp_solve(
    h: *const MspInstance,
    strict: bool,
    decision_out: *mut c_int,
    stats_out: *mut MspSolveStats,
) -> MspStatus {
    guard(|| {
        let Some(instance) = h.as_ref() else {
            set_error("null instance handle".to_string());
            return MspStatus::MspErrNullArgument;
        };
        if decision_out.is_null() {
            set_error("null decision output".to_string());
            return MspStatus::MspErrNullArgument;
        }
        let options = ZhOptions {
            mode: if strict { Mode::Strict } else { Mode::Permissive },
            trace: false,
        };
        let out = match zh_solve(&instance.graph, options) {
            Ok(out) => out,
            Err(KernelError::InvalidInstance { violations }) => {
                let listing: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                set_error(listing.join("\n"));
                return MspStatus::MspErrInvalidInstance;
            }
        };
        *decision_out = match out.decision {
            Decision::Yes => 1,
            Decision::No => 0,
        };
        if !stats_out.is_null() {
            *stats_out = MspSolveStats {
                passes: out.stats.passes,
                prune_events: out.stats.prune_events,
                initial_support: out.stats.initial_support,
                kernel_size: out.stats.kernel_size as u64,
                wall_millis: out.wall_millis,
            };
        }
        MspStatus::MspOk
    })
}

/// Runs the exhaustive path search under a budget. `*decision_out`
/// becomes 1 for yes, 0 for no, and -1 when the budget ran out.
///
/// # Safety
/// `h` must be a live handle or null; `decision_out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn msp_oracle(
    h: *const MspInstance,
    max_nodes: u64,
    max_millis: u64,
    decision_out: *mut c_int,
) -> MspStatus {
    guard(|| {
        let Some(instance) = h.as_ref() else {
            set_error("null instance handle".to_string());
            return MspStatus::MspErrNullArgument;
        };
        if decision_out.is_null() {
            set_error("null decision output".to_string());
            return MspStatus::MspErrNullArgument;
        }
        let budget = OracleBudget { max_nodes, max_millis };
        *decision_out = match sigma_path_exists(&instance.graph, budget) {
            OracleDecision::Yes => 1,
            OracleDecision::No => 0,
            OracleDecision::Unknown => -1,
        };
        MspStatus::MspOk
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use msp_core::format::reduce_via;
    use msp_core::generators::gen_fn_mu;

    fn sample_json() -> CString {
        let f = gen_fn_mu(2).unwrap();
        let g = reduce_via(&f, Route::Gadget).unwrap();
        CString::new(to_json(&g, Provenance::MuFamily { n: 2, route: Route::Gadget })).unwrap()
    }

    fn last_error() -> String {
        unsafe {
            CStr::from_ptr(msp_last_error_message())
                .to_string_lossy()
                .into_owned()
        }
    }

    #[test]
    fn load_solve_roundtrip_and_free() {
        let json = sample_json();
        let mut handle: *mut MspInstance = std::ptr::null_mut();
        unsafe {
            assert_eq!(msp_instance_load_json(json.as_ptr(), &mut handle), MspStatus::MspOk);
            assert!(!handle.is_null());
            assert!(msp_instance_stages(handle) >= 5);
            assert!(msp_instance_edge_count(handle) > 0);
            assert_eq!(msp_validate(handle, true), MspStatus::MspOk);

            let mut decision: c_int = -7;
            let mut stats = MspSolveStats::default();
            assert_eq!(msp_solve(handle, false, &mut decision, &mut stats), MspStatus::MspOk);
            assert_eq!(decision, 0, "the n=2 family is unsatisfiable");
            assert_eq!(stats.kernel_size, 0);
            assert!(stats.initial_support > 0);

            let mut oracle: c_int = -7;
            assert_eq!(msp_oracle(handle, 1_000_000, 10_000, &mut oracle), MspStatus::MspOk);
            assert_eq!(oracle, 0);

            let text = msp_instance_to_json(handle);
            assert!(!text.is_null());
            let roundtrip = CStr::from_ptr(text).to_str().unwrap();
            assert_eq!(roundtrip.as_bytes(), json.as_bytes());
            msp_string_free(text);
            msp_instance_free(handle);
        }
    }

    #[test]
    fn dimacs_reduction_decides_yes() {
        let dimacs = CString::new("p cnf 2 2\n1 2 0\n-1 2 0\n").unwrap();
        let mut handle: *mut MspInstance = std::ptr::null_mut();
        unsafe {
            assert_eq!(
                msp_instance_from_dimacs(dimacs.as_ptr(), true, &mut handle),
                MspStatus::MspOk
            );
            let mut decision: c_int = -7;
            assert_eq!(
                msp_solve(handle, false, &mut decision, std::ptr::null_mut()),
                MspStatus::MspOk
            );
            assert_eq!(decision, 1, "a satisfiable formula must decide yes");
            msp_instance_free(handle);
        }
    }

    #[test]
    fn errors_set_codes_and_messages() {
        let mut handle: *mut MspInstance = std::ptr::null_mut();
        unsafe {
            assert_eq!(
                msp_instance_load_json(std::ptr::null(), &mut handle),
                MspStatus::MspErrNullArgument
            );
            assert!(!last_error().is_empty());

            let bad = CString::new("{ not json }").unwrap();
            assert_eq!(
                msp_instance_load_json(bad.as_ptr(), &mut handle),
                MspStatus::MspErrParse
            );
            assert!(handle.is_null());
            assert!(!last_error().is_empty());

            let bad_dimacs = CString::new("p cnf 1 1\n2 0\n").unwrap();
            assert_eq!(
                msp_instance_from_dimacs(bad_dimacs.as_ptr(), true, &mut handle),
                MspStatus::MspErrParse
            );

            assert_eq!(msp_validate(std::ptr::null(), false), MspStatus::MspErrNullArgument);
            let mut decision: c_int = 0;
            assert_eq!(
                msp_solve(std::ptr::null(), false, &mut decision, std::ptr::null_mut()),
                MspStatus::MspErrNullArgument
            );
        }
    }

    #[test]
    fn generated_header_declares_the_api() {
        let header_path = concat!(env!("CARGO_MANIFEST_DIR"), "/include/msp.h");
        let header = std::fs::read_to_string(header_path).expect("header generated at build time");
        for symbol in [
            "msp_instance_load_json",
            "msp_instance_from_dimacs",
            "msp_instance_free",
            "msp_instance_to_json",
            "msp_string_free",
            "msp_validate",
            "msp_solve",
            "msp_oracle",
            "msp_last_error_message",
            "MspStatus",
            "MspSolveStats",
        ] {
            assert!(header.contains(symbol), "header must declare {symbol}");
        }
    }
}
