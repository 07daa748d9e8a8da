//! C ABI over the thermal twin, the plant line protocol, the switching rule
//! and run-log reports.
//!
//! Conventions:
//! - every fallible call returns an [`RcStatus`]; results go through out
//!   pointers, which are left untouched on failure;
//! - [`rc_last_error`] describes the most recent failure on the calling
//!   thread;
//! - handles come from `*_new*` and must be released with the matching
//!   `*_free`; strings handed out must be released with [`rc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use reprompt_control::agents::{self, Thresholds};
use reprompt_control::config::twin_params_from_json;
use reprompt_control::metrics::{self, Report, ReportFormat};
use reprompt_control::plantio::{ClockMode, HeaterAction, PlantServer};
use reprompt_control::runlog::RunLog;
use reprompt_control::twin::{self, TwinParams, TwinState};
use reprompt_control::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    InvalidState = 4,
    Config = 5,
    Parse = 6,
    Io = 7,
    LogFormat = 8,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcAction {
    Off = 0,
    On = 1,
}

impl From<HeaterAction> for RcAction {
    fn from(a: HeaterAction) -> Self {
        match a {
            HeaterAction::On => RcAction::On,
            HeaterAction::Off => RcAction::Off,
        }
    }
}

impl From<RcAction> for HeaterAction {
    fn from(a: RcAction) -> Self {
        match a {
            RcAction::On => HeaterAction::On,
            RcAction::Off => HeaterAction::Off,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcTwinState {
    pub t_heater: f64,
    pub t_sensor: f64,
    /// s
    pub clock: f64,
}

/// Opaque twin handle.
pub struct RcTwin {
    params: TwinParams,
    state: TwinState,
}

/// Opaque plant-emulator handle.
pub struct RcPlantServer {
    inner: PlantServer,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> RcStatus {
    match e {
        Error::InvalidInput(_) | Error::Template(_) => RcStatus::InvalidInput,
        Error::InvalidState(_) | Error::PlantIo(_) | Error::Backend(_) => RcStatus::InvalidState,
        Error::Config { .. } => RcStatus::Config,
        Error::Parse => RcStatus::Parse,
        Error::Io { .. } => RcStatus::Io,
        Error::LogFormat { .. } => RcStatus::LogFormat,
    }
}

struct Fail(RcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            RcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            RcStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(RcStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RcStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(RcStatus::InvalidState, "output contains a NUL byte".into()))
}

fn thresholds(low: f64, high: f64) -> Result<Thresholds, Fail> {
    Ok(Thresholds::new(low, high)?)
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn rc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Twin with default parameters, at ambient.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rc_twin_new_default(out: *mut *mut RcTwin) -> RcStatus {
    guard(|| {
        non_null(out, "out")?;
        let params = TwinParams::default();
        *out = Box::into_raw(Box::new(RcTwin {
            params,
            state: TwinState::ambient(&params),
        }));
        Ok(())
    })
}

/// Twin from a JSON parameter object, at ambient.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rc_twin_new_from_json(
    json: *const c_char,
    out: *mut *mut RcTwin,
) -> RcStatus {
    guard(|| {
        non_null(out, "out")?;
        let params = twin_params_from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(RcTwin {
            params,
            state: TwinState::ambient(&params),
        }));
        Ok(())
    })
}

/// # Safety
/// `twin` must come from `rc_twin_new_*` and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rc_twin_free(twin: *mut RcTwin) {
    if !twin.is_null() {
        drop(Box::from_raw(twin));
    }
}

/// Advances the twin by `dt` seconds at heater duty `duty` (0..=100).
///
/// # Safety
/// `twin` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rc_twin_step(twin: *mut RcTwin, duty: f64, dt: f64) -> RcStatus {
    guard(|| {
        non_null(twin, "twin")?;
        let t = &mut *twin;
        t.state = twin::step(&t.params, t.state, duty, dt)?;
        Ok(())
    })
}

/// # Safety
/// `twin` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rc_twin_state(twin: *const RcTwin, out: *mut RcTwinState) -> RcStatus {
    guard(|| {
        non_null(twin, "twin")?;
        non_null(out, "out")?;
        let s = (*twin).state;
        *out = RcTwinState {
            t_heater: s.t_heater,
            t_sensor: s.t_sensor,
            clock: s.clock,
        };
        Ok(())
    })
}

/// # Safety
/// `twin` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rc_twin_set_state(twin: *mut RcTwin, state: RcTwinState) -> RcStatus {
    guard(|| {
        non_null(twin, "twin")?;
        if ![state.t_heater, state.t_sensor, state.clock]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Fail(RcStatus::InvalidInput, "state must be finite".into()));
        }
        (*twin).state = TwinState::new(state.t_heater, state.t_sensor, state.clock);
        Ok(())
    })
}

/// Equilibrium temperatures for a constant duty.
///
/// # Safety
/// `twin` must be a live handle; `t_heater` and `t_sensor` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rc_twin_steady_state(
    twin: *const RcTwin,
    duty: f64,
    t_heater: *mut f64,
    t_sensor: *mut f64,
) -> RcStatus {
    guard(|| {
        non_null(twin, "twin")?;
        non_null(t_heater, "t_heater")?;
        non_null(t_sensor, "t_sensor")?;
        let (h, s) = twin::steady_state(&(*twin).params, duty)?;
        *t_heater = h;
        *t_sensor = s;
        Ok(())
    })
}

/// Line-protocol plant emulator. `params_json` may be null for defaults.
///
/// # Safety
/// `params_json` must be null or NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rc_plant_server_new(
    params_json: *const c_char,
    lockstep: bool,
    out: *mut *mut RcPlantServer,
) -> RcStatus {
    guard(|| {
        non_null(out, "out")?;
        let params = if params_json.is_null() {
            TwinParams::default()
        } else {
            twin_params_from_json(str_arg(params_json, "params_json")?)?
        };
        let mode = if lockstep {
            ClockMode::Lockstep
        } else {
            ClockMode::Realtime
        };
        *out = Box::into_raw(Box::new(RcPlantServer {
            inner: PlantServer::new(params, mode),
        }));
        Ok(())
    })
}

/// # Safety
/// `server` must come from `rc_plant_server_new`. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rc_plant_server_free(server: *mut RcPlantServer) {
    if !server.is_null() {
        drop(Box::from_raw(server));
    }
}

/// Handles one protocol line (without newline). The reply, `ERR` included,
/// is written to `reply` and must be freed with `rc_string_free`.
///
/// # Safety
/// `server` must be a live handle, `line` NUL-terminated, `reply` valid.
#[no_mangle]
pub unsafe extern "C" fn rc_plant_server_command(
    server: *mut RcPlantServer,
    line: *const c_char,
    reply: *mut *mut c_char,
) -> RcStatus {
    guard(|| {
        non_null(server, "server")?;
        non_null(reply, "reply")?;
        let line = str_arg(line, "line")?;
        *reply = c_string((*server).inner.handle_command(line))?;
        Ok(())
    })
}

/// Switching rule: OFF above `high`, ON below `low`, otherwise keep `prev`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rc_expected_action(
    t_sensor: f64,
    prev: RcAction,
    low: f64,
    high: f64,
    out: *mut RcAction,
) -> RcStatus {
    guard(|| {
        non_null(out, "out")?;
        let th = thresholds(low, high)?;
        *out = agents::expected_action(t_sensor, prev.into(), &th).into();
        Ok(())
    })
}

/// Checks a proposal against the switching rule.
///
/// # Safety
/// `passed` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rc_validate_rule(
    proposal: RcAction,
    t_sensor: f64,
    prev: RcAction,
    low: f64,
    high: f64,
    passed: *mut bool,
) -> RcStatus {
    guard(|| {
        non_null(passed, "passed")?;
        let th = thresholds(low, high)?;
        *passed = agents::validate_rule(proposal.into(), t_sensor, prev.into(), &th).passed;
        Ok(())
    })
}

/// Extracts the last `ACTION: ON|OFF` line from a model response.
/// Returns `Parse` when there is none.
///
/// # Safety
/// `response` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rc_parse_action(response: *const c_char, out: *mut RcAction) -> RcStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = agents::parse_action(str_arg(response, "response")?)?.into();
        Ok(())
    })
}

/// Computes the metrics report of a run log as JSON. Free the result with
/// `rc_string_free`.
///
/// # Safety
/// `log_path` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rc_report_json(
    log_path: *const c_char,
    out: *mut *mut c_char,
) -> RcStatus {
    guard(|| {
        non_null(out, "out")?;
        let log = RunLog::open(Path::new(str_arg(log_path, "log_path")?))?;
        let cfg = &log.header.config;
        let report = Report::from_log(&log.episodes, &cfg.thresholds, cfg.duration)?;
        *out = c_string(metrics::report(&report, ReportFormat::Machine))?;
        Ok(())
    })
}
