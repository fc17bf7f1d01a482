//! C ABI for lace-core.
//!
//! Sessions are opaque heap handles created by [`lace_session_create`] and
//! released with [`lace_session_free`]. Every fallible call returns a
//! [`LaceStatus`]; on failure a description is available from
//! [`lace_last_error`] on the same thread until the next call. Byte buffers
//! handed out by the library are released with [`lace_buffer_free`].
//!
//! Handles are not synchronized: a handle may move between threads but
//! must not be used from two threads at once.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lace_core::layers::{LayerError, LayerId, LayerProps};
use lace_core::persist::read_log;
use lace_core::raster::{encode_png, pixel_digest, RasterImage, Rgba};
use lace_core::session::{EditCommand, Measure, Session, SessionConfig, SessionError, WorkflowKind};
use lace_core::study::{effect_size_r, p_from_z, run_script, ReplayScript};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LaceStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was out of range or malformed.
    InvalidArgument = 2,
    /// The request conflicts with the session's workflow or state.
    Conflict = 3,
    /// Unknown candidate or layer.
    NotFound = 4,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 5,
    /// Encoding, decoding or replay failed.
    Failed = 6,
    /// The library panicked; the handle should be discarded.
    Panic = 7,
}

/// Straight-alpha RGBA color.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LaceRgba {
    pub r: u8,
    pub g: u8,
    pub b: u8,
    pub a: u8,
}

impl From<LaceRgba> for Rgba {
    fn from(c: LaceRgba) -> Self {
        Rgba::new(c.r, c.g, c.b, c.a)
    }
}

/// Opaque session handle.
pub struct LaceSession {
    inner: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let mut bytes = message.into().into_bytes();
    bytes.retain(|b| *b != 0);
    let c = CString::new(bytes).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(LaceStatus, String);

impl Fail {
    fn null(what: &str) -> Self {
        Fail(LaceStatus::NullArgument, format!("{what} is null"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Fail(LaceStatus::InvalidArgument, message.into())
    }
}

impl From<SessionError> for Fail {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::InvalidDims { .. }
            | SessionError::InvalidWeight(_)
            | SessionError::RatingOutOfRange(_)
            | SessionError::InvalidCadence
            | SessionError::Layer(
                LayerError::OpacityOutOfRange(_) | LayerError::IndexOutOfRange { .. } | LayerError::InvalidRadius(_),
            ) => LaceStatus::InvalidArgument,
            SessionError::WeightPinned | SessionError::ModeUnavailable(_) | SessionError::ClockRegression { .. } => {
                LaceStatus::Conflict
            }
            SessionError::UnknownCandidate(_) | SessionError::Layer(LayerError::UnknownLayer(_)) => LaceStatus::NotFound,
            _ => LaceStatus::Failed,
        };
        Fail(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LaceStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LaceStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LaceStatus::Panic
        }
    }
}

unsafe fn session<'a>(handle: *mut LaceSession) -> Result<&'a mut Session, Fail> {
    handle.as_mut().map(|h| &mut h.inner).ok_or_else(|| Fail::null("session"))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(LaceStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Hands a byte vector to the caller; release with [`lace_buffer_free`].
unsafe fn give_buffer(bytes: Vec<u8>, out: *mut *mut u8, out_len: *mut usize) -> Result<(), Fail> {
    if out.is_null() || out_len.is_null() {
        return Err(Fail::null("output buffer"));
    }
    let boxed = bytes.into_boxed_slice();
    out_len.write(boxed.len());
    out.write(Box::into_raw(boxed) as *mut u8);
    Ok(())
}

fn workflow_from(code: u32) -> Result<WorkflowKind, Fail> {
    match code {
        1 => Ok(WorkflowKind::W1),
        2 => Ok(WorkflowKind::W2),
        3 => Ok(WorkflowKind::W3),
        _ => Err(Fail::invalid(format!("workflow must be 1, 2 or 3, got {code}"))),
    }
}

fn measure_from(code: u32) -> Result<Measure, Fail> {
    Measure::ALL
        .get(code as usize)
        .copied()
        .ok_or_else(|| Fail::invalid(format!("measure code {code} out of range 0..{}", Measure::ALL.len())))
}

/// Message of the last failure on this thread, or an empty string. The
/// pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn lace_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lace_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates a session. `workflow` is 1, 2 or 3. `cadence_ms` of 0 selects
/// the default background cadence.
#[no_mangle]
pub unsafe extern "C" fn lace_session_create(
    workflow: u32,
    width: u32,
    height: u32,
    seed: u64,
    cadence_ms: u64,
    out: *mut *mut LaceSession,
) -> LaceStatus {
    guard(|| {
        let workflow = workflow_from(workflow)?;
        let mut config = SessionConfig::default();
        if cadence_ms != 0 {
            config.cadence_ms = cadence_ms;
        }
        let inner = Session::create(workflow, width, height, seed, config)?;
        write(out, Box::into_raw(Box::new(LaceSession { inner })))
    })
}

/// Rebuilds a session from its JSONL event log.
#[no_mangle]
pub unsafe extern "C" fn lace_session_from_log(data: *const u8, len: usize, out: *mut *mut LaceSession) -> LaceStatus {
    guard(|| {
        let bytes = bytes_arg(data, len, "log")?;
        let events = read_log(bytes).map_err(|e| Fail(LaceStatus::Failed, e.to_string()))?;
        let inner = Session::replay(events).map_err(|e| Fail(LaceStatus::Failed, e.to_string()))?;
        write(out, Box::into_raw(Box::new(LaceSession { inner })))
    })
}

/// Releases a session handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn lace_session_free(handle: *mut LaceSession) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

#[no_mangle]
pub unsafe extern "C" fn lace_session_set_prompt(handle: *mut LaceSession, prompt: *const c_char) -> LaceStatus {
    guard(|| {
        let s = session(handle)?;
        let text = str_arg(prompt, "prompt")?;
        s.set_prompt(text);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lace_session_set_weight(handle: *mut LaceSession, weight: f64) -> LaceStatus {
    guard(|| Ok(session(handle)?.set_weight(weight)?))
}

/// Explicit generation; writes the new candidate id.
#[no_mangle]
pub unsafe extern "C" fn lace_session_generate(handle: *mut LaceSession, out_candidate: *mut u64) -> LaceStatus {
    guard(|| {
        let id = session(handle)?.turn_generate()?;
        write(out_candidate, id)
    })
}

#[no_mangle]
pub unsafe extern "C" fn lace_session_start_parallel(handle: *mut LaceSession) -> LaceStatus {
    guard(|| Ok(session(handle)?.start_parallel()?))
}

#[no_mangle]
pub unsafe extern "C" fn lace_session_stop_parallel(handle: *mut LaceSession) -> LaceStatus {
    guard(|| Ok(session(handle)?.stop_parallel()?))
}

/// Advances the virtual clock; writes how many background candidates
/// were produced. `out_count` may be null.
#[no_mangle]
pub unsafe extern "C" fn lace_session_tick(handle: *mut LaceSession, now_ms: u64, out_count: *mut usize) -> LaceStatus {
    guard(|| {
        let produced = session(handle)?.tick(now_ms)?;
        if !out_count.is_null() {
            out_count.write(produced.len());
        }
        Ok(())
    })
}

/// Imports a cached candidate as a new top layer; writes the layer id.
#[no_mangle]
pub unsafe extern "C" fn lace_session_import(handle: *mut LaceSession, candidate: u64, out_layer: *mut u64) -> LaceStatus {
    guard(|| {
        let layer = session(handle)?.import_candidate(candidate)?;
        write(out_layer, layer.0)
    })
}

#[no_mangle]
pub unsafe extern "C" fn lace_session_add_layer(handle: *mut LaceSession, out_layer: *mut u64) -> LaceStatus {
    guard(|| {
        let layer = session(handle)?
            .edit(EditCommand::AddLayer)?
            .expect("add_layer creates a layer");
        write(out_layer, layer.0)
    })
}

#[no_mangle]
pub unsafe extern "C" fn lace_session_brush(
    handle: *mut LaceSession,
    layer: u64,
    x: i64,
    y: i64,
    radius: u32,
    color: LaceRgba,
) -> LaceStatus {
    guard(|| {
        let command = EditCommand::Brush {
            layer: LayerId(layer),
            x,
            y,
            radius,
            color: color.into(),
        };
        session(handle)?.edit(command)?;
        Ok(())
    })
}

/// Fills the inclusive rectangle `(x0, y0)-(x1, y1)`.
#[no_mangle]
pub unsafe extern "C" fn lace_session_fill(
    handle: *mut LaceSession,
    layer: u64,
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
    color: LaceRgba,
) -> LaceStatus {
    guard(|| {
        let command = EditCommand::Fill {
            layer: LayerId(layer),
            x0,
            y0,
            x1,
            y1,
            color: color.into(),
        };
        session(handle)?.edit(command)?;
        Ok(())
    })
}

/// Updates layer properties. A NaN `opacity`, a negative `visible` or a
/// negative `index` leaves that property unchanged.
#[no_mangle]
pub unsafe extern "C" fn lace_session_layer_props(
    handle: *mut LaceSession,
    layer: u64,
    opacity: f64,
    visible: i32,
    index: i64,
) -> LaceStatus {
    guard(|| {
        let props = LayerProps {
            opacity: (!opacity.is_nan()).then_some(opacity),
            visible: (visible >= 0).then_some(visible != 0),
            index: usize::try_from(index).ok(),
        };
        session(handle)?.edit(EditCommand::Props {
            layer: LayerId(layer),
            props,
        })?;
        Ok(())
    })
}

/// Records a 1-7 rating. Measure codes: 0 ownership, 1 satisfaction,
/// 2 usability, 3 expectation, 4 explainability, 5 art.
#[no_mangle]
pub unsafe extern "C" fn lace_session_rate(handle: *mut LaceSession, measure: u32, score: i64) -> LaceStatus {
    guard(|| {
        let measure = measure_from(measure)?;
        Ok(session(handle)?.record_rating(measure, score)?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn lace_session_clock(handle: *mut LaceSession, out_ms: *mut u64) -> LaceStatus {
    guard(|| write(out_ms, session(handle)?.clock()))
}

#[no_mangle]
pub unsafe extern "C" fn lace_session_cache_size(handle: *mut LaceSession, out_size: *mut usize) -> LaceStatus {
    guard(|| write(out_size, session(handle)?.cache().len()))
}

/// Pixel digest of the flattened canvas.
#[no_mangle]
pub unsafe extern "C" fn lace_session_flatten_digest(handle: *mut LaceSession, out_digest: *mut u64) -> LaceStatus {
    guard(|| write(out_digest, pixel_digest(&session(handle)?.flatten()).0))
}

/// Latent digest of a cached candidate.
#[no_mangle]
pub unsafe extern "C" fn lace_session_candidate_latent_digest(
    handle: *mut LaceSession,
    candidate: u64,
    out_digest: *mut u64,
) -> LaceStatus {
    guard(|| {
        let s = session(handle)?;
        let c = s
            .candidate(candidate)
            .ok_or_else(|| Fail::from(SessionError::UnknownCandidate(candidate)))?;
        write(out_digest, c.latent.digest().0)
    })
}

/// PNG of the flattened canvas.
#[no_mangle]
pub unsafe extern "C" fn lace_session_snapshot_png(
    handle: *mut LaceSession,
    out_data: *mut *mut u8,
    out_len: *mut usize,
) -> LaceStatus {
    guard(|| {
        let png = encode_png(&session(handle)?.flatten()).map_err(|e| Fail(LaceStatus::Failed, e.to_string()))?;
        give_buffer(png, out_data, out_len)
    })
}

/// The event log as JSONL bytes.
#[no_mangle]
pub unsafe extern "C" fn lace_session_log_jsonl(
    handle: *mut LaceSession,
    out_data: *mut *mut u8,
    out_len: *mut usize,
) -> LaceStatus {
    guard(|| {
        let mut text = String::new();
        for e in session(handle)?.log() {
            text.push_str(&e.to_json_line());
            text.push('\n');
        }
        give_buffer(text.into_bytes(), out_data, out_len)
    })
}

/// Releases a buffer returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn lace_buffer_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(data, len)));
    }
}

/// Digest of a tightly packed RGBA8 buffer of `width * height * 4` bytes.
#[no_mangle]
pub unsafe extern "C" fn lace_pixel_digest(
    rgba: *const u8,
    len: usize,
    width: u32,
    height: u32,
    out_digest: *mut u64,
) -> LaceStatus {
    guard(|| {
        let bytes = bytes_arg(rgba, len, "pixels")?;
        let img = RasterImage::from_rgba_bytes(width, height, bytes).map_err(|e| Fail::invalid(e.to_string()))?;
        write(out_digest, pixel_digest(&img).0)
    })
}

/// Runs a JSON replay script in-process and writes the final canvas
/// digest.
#[no_mangle]
pub unsafe extern "C" fn lace_run_script_json(script: *const c_char, out_digest: *mut u64) -> LaceStatus {
    guard(|| {
        let text = str_arg(script, "script")?;
        let script = ReplayScript::from_json(text).map_err(|e| Fail::invalid(e.to_string()))?;
        let outcome = run_script(&script).map_err(|e| Fail(LaceStatus::Failed, e.to_string()))?;
        write(out_digest, outcome.final_digest.0)
    })
}

/// Lower-tail normal probability of `z`.
#[no_mangle]
pub extern "C" fn lace_p_from_z(z: f64) -> f64 {
    p_from_z(z)
}

/// Effect size `|z| / sqrt(n)`.
#[no_mangle]
pub unsafe extern "C" fn lace_effect_size_r(z: f64, n: usize, out_r: *mut f64) -> LaceStatus {
    guard(|| {
        let r = effect_size_r(z, n).map_err(|e| Fail::invalid(e.to_string()))?;
        write(out_r, r)
    })
}
