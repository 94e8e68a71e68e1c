//! C ABI for the exwalk simulation core.
//!
//! Every fallible function returns an [`ExwalkStatus`]; on failure the
//! message is available from [`exwalk_last_error`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use exwalk::exceptional::{estimate_en, ExceptionalRun};
use exwalk::oracles::{gambler_exact, local_time_exact};
use exwalk::stream::{LetterStream, StreamSeed};
use exwalk::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExwalkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    LineOutOfRange = 3,
    NeverUnrevealed = 4,
    CoordinateOverflow = 5,
    Io = 6,
    Internal = 7,
}

impl From<&Error> for ExwalkStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::LineIndexOutOfRange(_) => ExwalkStatus::LineOutOfRange,
            Error::NeverUnrevealed { .. } => ExwalkStatus::NeverUnrevealed,
            Error::CoordinateOverflow => ExwalkStatus::CoordinateOverflow,
            Error::Io(_) => ExwalkStatus::Io,
            _ => ExwalkStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Run `f`, mapping core errors and panics to status codes.
fn guard<F: FnOnce() -> Result<(), ExwalkStatus>>(f: F) -> ExwalkStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ExwalkStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            ExwalkStatus::Internal
        }
    }
}

fn fail(e: Error) -> ExwalkStatus {
    let s = ExwalkStatus::from(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> ExwalkStatus {
    set_error(format!("null pointer: {what}"));
    ExwalkStatus::NullPointer
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next exwalk call on this thread.
#[no_mangle]
pub extern "C" fn exwalk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn exwalk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opaque letter stream over `2d` directions.
pub struct ExwalkLetterStream(LetterStream);

/// Create a letter stream for dimension `dim` (1..=6).
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn exwalk_letter_stream_new(
    master_seed: u64,
    stream_id: u64,
    dim: usize,
    out: *mut *mut ExwalkLetterStream,
) -> ExwalkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if dim == 0 || dim > exwalk::lattice::MAX_DIM {
            return Err(fail(Error::UnsupportedDimension(dim)));
        }
        let s = LetterStream::new(StreamSeed::new(master_seed, stream_id), dim);
        *out = Box::into_raw(Box::new(ExwalkLetterStream(s)));
        Ok(())
    })
}

/// Write the next `len` letter codes into `buf`. Code `2a` is the positive
/// direction of axis `a`, `2a + 1` the negative one.
///
/// # Safety
/// `h` must be a live handle and `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn exwalk_letter_stream_fill(h: *mut ExwalkLetterStream, buf: *mut u8, len: usize) -> ExwalkStatus {
    guard(|| {
        let h = h.as_mut().ok_or_else(|| null("handle"))?;
        if buf.is_null() && len > 0 {
            return Err(null("buf"));
        }
        for i in 0..len {
            *buf.add(i) = h.0.next_code();
        }
        Ok(())
    })
}

/// Letters emitted so far, or 0 for a NULL handle.
///
/// # Safety
/// `h` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn exwalk_letter_stream_position(h: *const ExwalkLetterStream) -> u64 {
    h.as_ref().map_or(0, |h| h.0.letters_emitted())
}

/// # Safety
/// `h` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn exwalk_letter_stream_free(h: *mut ExwalkLetterStream) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Opaque single-walk exceptional construction.
pub struct ExwalkExceptionalRun(ExceptionalRun);

/// Walk position and clocks.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExwalkWalkState {
    pub x: i64,
    pub y: i64,
    pub letters: u64,
    pub accepted: u64,
    /// Index of the gap currently being revealed.
    pub stage: u32,
}

/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn exwalk_exceptional_new(
    master_seed: u64,
    stream_id: u64,
    out: *mut *mut ExwalkExceptionalRun,
) -> ExwalkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let r = ExceptionalRun::new(StreamSeed::new(master_seed, stream_id), false);
        *out = Box::into_raw(Box::new(ExwalkExceptionalRun(r)));
        Ok(())
    })
}

/// Read `letters` letters, stopping early once the open gap index reaches
/// `max_stage` (pass 0 for no stage limit).
///
/// # Safety
/// `h` must be a live handle; `state` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn exwalk_exceptional_run(
    h: *mut ExwalkExceptionalRun,
    letters: u64,
    max_stage: u32,
    state: *mut ExwalkWalkState,
) -> ExwalkStatus {
    guard(|| {
        let h = h.as_mut().ok_or_else(|| null("handle"))?;
        for _ in 0..letters {
            if max_stage > 0 && h.0.env.stage() >= max_stage {
                break;
            }
            h.0.step().map_err(fail)?;
        }
        if let Some(s) = state.as_mut() {
            *s = walk_state(&h.0);
        }
        Ok(())
    })
}

fn walk_state(r: &ExceptionalRun) -> ExwalkWalkState {
    ExwalkWalkState {
        x: r.state.pos.x(),
        y: r.state.pos.y(),
        letters: r.state.letters_consumed,
        accepted: r.state.accepted_steps,
        stage: r.env.stage(),
    }
}

/// # Safety
/// `h` must be a live handle and `state` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn exwalk_exceptional_state(h: *const ExwalkExceptionalRun, state: *mut ExwalkWalkState) -> ExwalkStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let s = state.as_mut().ok_or_else(|| null("state"))?;
        *s = walk_state(&h.0);
        Ok(())
    })
}

/// Edge snapshot of the revealed extent as a newly allocated string; free
/// it with [`exwalk_string_free`].
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn exwalk_exceptional_snapshot(h: *const ExwalkExceptionalRun, out: *mut *mut c_char) -> ExwalkStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = h.0.env.snapshot().map_err(fail)?;
        *out = CString::new(text).expect("snapshot has no nul").into_raw();
        Ok(())
    })
}

/// # Safety
/// `h` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn exwalk_exceptional_free(h: *mut ExwalkExceptionalRun) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Back-crossing estimate; `ci_lo`/`ci_hi` are NaN when nothing was decided.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExwalkEnEstimate {
    pub n: u32,
    pub trials: u64,
    pub hits: u64,
    pub completions: u64,
    pub censored: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub master_seed: u64,
    pub stream_id: u64,
    pub horizon: u64,
}

/// Estimate the probability that after first reaching line `n` the walk
/// hits line `n - 1` before line `n + 1`; trials use at most `horizon`
/// letters each.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn exwalk_estimate_en(
    n: u32,
    trials: u64,
    master_seed: u64,
    stream_id: u64,
    horizon: u64,
    out: *mut ExwalkEnEstimate,
) -> ExwalkStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let e = estimate_en(n, trials, StreamSeed::new(master_seed, stream_id), horizon).map_err(fail)?;
        *out = ExwalkEnEstimate {
            n: e.n,
            trials: e.trials,
            hits: e.hits,
            completions: e.completions,
            censored: e.censored,
            p_hat: e.p_hat,
            ci_lo: e.ci_lo(),
            ci_hi: e.ci_hi(),
            master_seed: e.seed.master_seed,
            stream_id: e.seed.stream_id,
            horizon: e.horizon,
        };
        Ok(())
    })
}

/// Probability `1/n` that a fair walk from 1 reaches `n` before 0.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn exwalk_gambler_exact(n: u64, out: *mut f64) -> ExwalkStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = gambler_exact(n).map_err(fail)?.2;
        Ok(())
    })
}

/// Expected visits to 0 of the simple random walk at times `1..=steps`.
#[no_mangle]
pub extern "C" fn exwalk_local_time_exact(steps: u64) -> f64 {
    local_time_exact(steps)
}
