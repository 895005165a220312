//! C ABI over `sme_correlate`.
//!
//! Objects cross the boundary as opaque handles created by
//! `smec_model_from_*` and `smec_simulate` and released with the matching
//! `smec_*_free`. Every fallible call returns an [`SmecStatus`]; on failure
//! `smec_last_error_message` describes the error on the calling thread.
//! Panics are caught and reported as `SMEC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sme_correlate::analytic::{filtered_correlation, sharp_correlation, SharpPoint, WindowFilter};
use sme_correlate::model::{model_zoo, DensityMatrix, ModelFile, QuantumModel};
use sme_correlate::trajectories::{MeasurementRecord, Scheme, SimulationOptions, Simulator, TimeGrid};
use sme_correlate::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Linalg = 3,
    Model = 4,
    Superops = 5,
    Trajectory = 6,
    Analytic = 7,
    Estimator = 8,
    Io = 9,
    Panic = 10,
}

/// Trajectory integration scheme.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmecScheme {
    KrausMap = 0,
    EulerIto = 1,
}

/// A model together with its initial state.
pub struct SmecModel {
    model: QuantumModel,
    rho0: DensityMatrix,
}

/// The measurement record of one simulated trajectory.
pub struct SmecRecord {
    record: MeasurementRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SmecStatus {
    match e {
        Error::Linalg(_) => SmecStatus::Linalg,
        Error::Model(_) => SmecStatus::Model,
        Error::Superops(_) => SmecStatus::Superops,
        Error::Trajectory(_) => SmecStatus::Trajectory,
        Error::Analytic(_) => SmecStatus::Analytic,
        Error::Estimator(_) => SmecStatus::Estimator,
        Error::Io { .. } => SmecStatus::Io,
    }
}

struct Failure(SmecStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SmecStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(SmecStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SmecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SmecStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SmecStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn labels(detectors: *const *const c_char, n: usize) -> Result<Vec<String>, Failure> {
    slice_arg(detectors, n, "detectors")?
        .iter()
        .map(|&p| str_arg(p, "detector label").map(str::to_string))
        .collect()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn smec_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a `SmecStatus` value, or `"unknown"`.
#[no_mangle]
pub extern "C" fn smec_status_name(status: i32) -> *const c_char {
    let s: &'static CStr = match status {
        0 => c"ok",
        1 => c"null_pointer",
        2 => c"invalid_argument",
        3 => c"linalg",
        4 => c"model",
        5 => c"superops",
        6 => c"trajectories",
        7 => c"analytic",
        8 => c"estimator",
        9 => c"io",
        10 => c"panic",
        _ => c"unknown",
    };
    s.as_ptr()
}

fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    unsafe { *out = value };
    Ok(())
}

/// Parse a JSON model file.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smec_model_from_json(json: *const c_char, out: *mut *mut SmecModel) -> SmecStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let file = ModelFile::from_json_str(text).map_err(Error::from)?;
        let (model, rho0) = file.to_model().map_err(Error::from)?;
        store(out, SmecModel { model, rho0 })
    })
}

/// Built-in model by name.
///
/// # Safety
/// `name` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smec_model_from_zoo(name: *const c_char, out: *mut *mut SmecModel) -> SmecStatus {
    guard(|| {
        let (model, rho0) = model_zoo(str_arg(name, "name")?).map_err(Error::from)?;
        store(out, SmecModel { model, rho0 })
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn smec_model_free(model: *mut SmecModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Hilbert-space dimension and number of detectors.
///
/// # Safety
/// `model` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn smec_model_shape(
    model: *const SmecModel,
    dim: *mut usize,
    n_detectors: *mut usize,
) -> SmecStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        write_out(dim, m.model.dim)?;
        write_out(n_detectors, m.model.detectors.len())
    })
}

/// Sharp correlation `C_{t_1..t_n}` of detectors `detectors[i]` at
/// `times[i]`.
///
/// # Safety
/// `detectors` and `times` must hold `n` entries; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smec_sharp_correlation(
    model: *const SmecModel,
    detectors: *const *const c_char,
    times: *const f64,
    n: usize,
    value: *mut f64,
) -> SmecStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let labels = labels(detectors, n)?;
        let times = slice_arg(times, n, "times")?;
        let points: Vec<SharpPoint> = labels.into_iter().zip(times).map(|(d, &t)| SharpPoint::new(d, t)).collect();
        let r = sharp_correlation(&m.model, &m.rho0, &points)?;
        write_out(value, r.value)
    })
}

/// Filtered correlation of rectangular windows `[starts[i], ends[i])` on
/// `detectors[i]`, evolved up to `horizon`.
///
/// # Safety
/// `detectors`, `starts` and `ends` must hold `n` entries; `value` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn smec_filtered_correlation(
    model: *const SmecModel,
    detectors: *const *const c_char,
    starts: *const f64,
    ends: *const f64,
    n: usize,
    horizon: f64,
    value: *mut f64,
) -> SmecStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let labels = labels(detectors, n)?;
        let starts = slice_arg(starts, n, "starts")?;
        let ends = slice_arg(ends, n, "ends")?;
        let windows: Vec<WindowFilter> = labels
            .into_iter()
            .zip(starts.iter().zip(ends))
            .map(|(d, (&a, &b))| WindowFilter::rect(d, a, b))
            .collect();
        let r = filtered_correlation(&m.model, &m.rho0, &windows, horizon)?;
        write_out(value, r.value)
    })
}

/// Simulate one trajectory of `n_steps` steps of size `dt` on stream
/// `stream` of `seed`. `scheme` is a `SmecScheme` value.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn smec_simulate(
    model: *const SmecModel,
    dt: f64,
    n_steps: usize,
    seed: u64,
    stream: u64,
    scheme: u32,
    out: *mut *mut SmecRecord,
) -> SmecStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let grid = TimeGrid::new(0.0, dt, n_steps).map_err(Error::from)?;
        let scheme = match scheme {
            s if s == SmecScheme::KrausMap as u32 => Scheme::KrausMap,
            s if s == SmecScheme::EulerIto as u32 => Scheme::EulerIto,
            other => return Err(invalid(format!("unknown scheme {other}"))),
        };
        let sim = Simulator::new(&m.model, grid, scheme)?;
        let traj = sim.run(&m.rho0, seed, stream, &SimulationOptions::default())?;
        store(out, SmecRecord { record: traj.record })
    })
}

/// Release a record. Null is ignored.
///
/// # Safety
/// `record` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn smec_record_free(record: *mut SmecRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Number of steps and detectors of a record.
///
/// # Safety
/// `record` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn smec_record_shape(
    record: *const SmecRecord,
    n_steps: *mut usize,
    n_detectors: *mut usize,
) -> SmecStatus {
    guard(|| {
        let r = ref_arg(record, "record")?;
        write_out(n_steps, r.record.grid.n_steps)?;
        write_out(n_detectors, r.record.n_detectors())
    })
}

/// Borrow the increments of one detector. The array stays valid while the
/// record lives.
///
/// # Safety
/// `record` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn smec_record_increments(
    record: *const SmecRecord,
    detector: usize,
    data: *mut *const f64,
    len: *mut usize,
) -> SmecStatus {
    guard(|| {
        let r = ref_arg(record, "record")?;
        let inc = r
            .record
            .increments
            .get(detector)
            .ok_or_else(|| invalid(format!("detector index {detector} out of range")))?;
        write_out(data, inc.as_ptr())?;
        write_out(len, inc.len())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_names_are_static() {
        let name = unsafe { CStr::from_ptr(smec_status_name(SmecStatus::Analytic as i32)) };
        assert_eq!(name.to_str().unwrap(), "analytic");
    }

    #[test]
    fn errors_set_message() {
        let mut m = ptr::null_mut();
        let s = unsafe { smec_model_from_zoo(c"no_such_model".as_ptr(), &mut m) };
        assert_eq!(s, SmecStatus::Model);
        assert!(m.is_null());
        let msg = unsafe { CStr::from_ptr(smec_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("no_such_model"));
    }
}
