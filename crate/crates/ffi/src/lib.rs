//! C ABI over `chainsim`.
//!
//! A simulation lives behind an opaque `ChainsimSim` handle created by one
//! of the `chainsim_sim_*` constructors and released with
//! `chainsim_sim_free`. Every fallible call returns a `ChainsimStatus`; on
//! failure `chainsim_last_error` describes what went wrong on the calling
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use chainsim::bounds::{constant_b_parts, Constants};
use chainsim::engine::{SlotRecord, Trace};
use chainsim::{report, Error, Policy, Scenario, Simulation};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    Config = 3,
    Invariant = 4,
    Io = 5,
    Contract = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainsimPolicy {
    Alg1 = 0,
    Alg2 = 1,
    Heu = 2,
}

impl From<ChainsimPolicy> for Policy {
    fn from(p: ChainsimPolicy) -> Self {
        match p {
            ChainsimPolicy::Alg1 => Policy::Alg1,
            ChainsimPolicy::Alg2 => Policy::Alg2,
            ChainsimPolicy::Heu => Policy::Heu,
        }
    }
}

/// One completed slot.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChainsimSlot {
    pub t: usize,
    pub cost: f64,
    pub avg_cost: f64,
    pub backlog: f64,
    pub truncated: bool,
}

/// Bound constants of the configured platform.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChainsimBounds {
    pub b: f64,
    pub b1: f64,
    pub b2: f64,
    pub omega_input: f64,
    pub omega_output: f64,
    pub c: f64,
}

/// Opaque simulation handle.
pub struct ChainsimSim {
    scenario: Scenario,
    sim: Simulation,
    rows: Vec<SlotRecord>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> ChainsimStatus {
    match e {
        Error::Config(_)
        | Error::ConfigParse { .. }
        | Error::Parameter(_)
        | Error::Lookup(_)
        | Error::Model(_) => ChainsimStatus::Config,
        Error::Invariant(_) | Error::Infeasible(_) => ChainsimStatus::Invariant,
        Error::Io(_) | Error::Csv(_) => ChainsimStatus::Io,
        Error::Contract(_) => ChainsimStatus::Contract,
    }
}

/// Runs `f`, turning errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), (ChainsimStatus, String)>) -> ChainsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            ChainsimStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            ChainsimStatus::Internal
        }
    }
}

fn lib(e: Error) -> (ChainsimStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (ChainsimStatus, String) {
    (ChainsimStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (ChainsimStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        (
            ChainsimStatus::InvalidString,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn sim_mut<'a>(
    p: *mut ChainsimSim,
) -> Result<&'a mut ChainsimSim, (ChainsimStatus, String)> {
    p.as_mut().ok_or_else(|| null("sim"))
}

unsafe fn sim_ref<'a>(p: *const ChainsimSim) -> Result<&'a ChainsimSim, (ChainsimStatus, String)> {
    p.as_ref().ok_or_else(|| null("sim"))
}

fn build(scenario: Scenario) -> Result<Box<ChainsimSim>, (ChainsimStatus, String)> {
    let (topo, chains) = scenario.instantiate().map_err(lib)?;
    let sim = Simulation::new(scenario.sim.clone(), topo, chains).map_err(lib)?;
    Ok(Box::new(ChainsimSim {
        scenario,
        sim,
        rows: Vec::new(),
    }))
}

unsafe fn emit(
    out: *mut *mut ChainsimSim,
    scenario: Scenario,
) -> Result<(), (ChainsimStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = ptr::null_mut();
    *out = Box::into_raw(build(scenario)?);
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn chainsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn chainsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Seven-VM reference scenario with the given policy, step size, seed and
/// horizon.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn chainsim_sim_reference(
    policy: ChainsimPolicy,
    epsilon: f64,
    seed: u64,
    horizon: usize,
    out: *mut *mut ChainsimSim,
) -> ChainsimStatus {
    guard(|| {
        let mut sc = Scenario::reference();
        sc.sim.policy = policy.into();
        sc.sim.epsilon = epsilon;
        sc.sim.seed = seed;
        sc.sim.horizon = horizon;
        emit(out, sc)
    })
}

/// Scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chainsim_sim_from_toml(
    toml: *const c_char,
    out: *mut *mut ChainsimSim,
) -> ChainsimStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        emit(out, Scenario::from_toml_str(text).map_err(lib)?)
    })
}

/// Scenario from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chainsim_sim_from_file(
    path: *const c_char,
    out: *mut *mut ChainsimSim,
) -> ChainsimStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        emit(out, Scenario::load(Path::new(path)).map_err(lib)?)
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sim` must come from a `chainsim_sim_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn chainsim_sim_free(sim: *mut ChainsimSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances one slot. `out` may be null.
///
/// # Safety
/// `sim` must be a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn chainsim_sim_step(
    sim: *mut ChainsimSim,
    out: *mut ChainsimSlot,
) -> ChainsimStatus {
    guard(|| {
        let h = sim_mut(sim)?;
        let r = h.sim.step().map_err(lib)?.record;
        if let Some(out) = out.as_mut() {
            *out = ChainsimSlot {
                t: r.t,
                cost: r.cost,
                avg_cost: r.avg_cost,
                backlog: r.backlog,
                truncated: r.truncated,
            };
        }
        h.rows.push(r);
        Ok(())
    })
}

/// Steps until the configured horizon is reached.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chainsim_sim_run(sim: *mut ChainsimSim) -> ChainsimStatus {
    guard(|| {
        let h = sim_mut(sim)?;
        while h.sim.slot() < h.scenario.sim.horizon {
            let r = h.sim.step().map_err(lib)?.record;
            h.rows.push(r);
        }
        Ok(())
    })
}

/// Slots completed so far.
///
/// # Safety
/// `sim` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn chainsim_sim_slot(sim: *const ChainsimSim) -> usize {
    sim.as_ref().map_or(0, |h| h.sim.slot())
}

/// Configured horizon.
///
/// # Safety
/// `sim` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn chainsim_sim_horizon(sim: *const ChainsimSim) -> usize {
    sim.as_ref().map_or(0, |h| h.scenario.sim.horizon)
}

/// Current total backlog.
///
/// # Safety
/// `sim` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn chainsim_sim_total_backlog(sim: *const ChainsimSim) -> f64 {
    sim.as_ref()
        .map_or(0.0, |h| chainsim::dynamics::total_backlog(h.sim.state()))
}

/// Entries per queue family, `chains * vnfs * vms`.
///
/// # Safety
/// `sim` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn chainsim_sim_queue_len(sim: *const ChainsimSim) -> usize {
    sim.as_ref().map_or(0, |h| h.sim.state().input.len())
}

/// Copies the input and output backlogs, indexed `(chain * vnfs + vnf) * vms + vm`.
///
/// # Safety
/// `input` and `output` must each hold `len` doubles; `len` must equal
/// `chainsim_sim_queue_len`.
#[no_mangle]
pub unsafe extern "C" fn chainsim_sim_copy_queues(
    sim: *const ChainsimSim,
    input: *mut f64,
    output: *mut f64,
    len: usize,
) -> ChainsimStatus {
    guard(|| {
        let h = sim_ref(sim)?;
        if input.is_null() || output.is_null() {
            return Err(null("queue buffer"));
        }
        let state = h.sim.state();
        if len != state.input.len() {
            return Err((
                ChainsimStatus::Contract,
                format!("buffer length {len}, queues have {}", state.input.len()),
            ));
        }
        ptr::copy_nonoverlapping(state.input.as_ptr(), input, len);
        ptr::copy_nonoverlapping(state.output.as_ptr(), output, len);
        Ok(())
    })
}

/// Bound constants for the handle's platform and configuration.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chainsim_sim_bounds(
    sim: *const ChainsimSim,
    out: *mut ChainsimBounds,
) -> ChainsimStatus {
    guard(|| {
        let h = sim_ref(sim)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let c = Constants::compute(&h.scenario.sim, h.sim.topology(), h.sim.chains());
        let (b1, b2) = constant_b_parts(&c.extremes);
        *out = ChainsimBounds {
            b: c.b,
            b1,
            b2,
            omega_input: c.omega_big,
            omega_output: c.omega_small,
            c: c.c,
        };
        Ok(())
    })
}

/// Writes the slots stepped so far as a trace CSV.
///
/// # Safety
/// `sim` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn chainsim_sim_write_trace(
    sim: *const ChainsimSim,
    path: *const c_char,
) -> ChainsimStatus {
    guard(|| {
        let h = sim_ref(sim)?;
        let path = str_arg(path, "path")?;
        let cfg = h.sim.config();
        let trace = Trace {
            policy: cfg.policy,
            epsilon: cfg.epsilon,
            seed: cfg.seed,
            t_delta: cfg.t_delta,
            rows: h.rows.clone(),
            snapshots: Vec::new(),
            anchors: Vec::new(),
            learn: h.sim.learn().cloned(),
        };
        let file = File::create(path).map_err(|e| lib(e.into()))?;
        report::write_trace_csv(&trace, BufWriter::new(file)).map_err(lib)
    })
}
