//! C interface to the core library.
//!
//! Structured values cross the boundary as NUL-terminated UTF-8 JSON
//! strings in the same shapes the command-line front end reads and
//! writes.  Parsed sequences and measures live behind opaque handles so
//! repeated evaluations skip the parse.  Every fallible entry point
//! returns an [`OpucStatus`] and stores a message for [`opuc_last_error`]
//! on failure; strings returned by the library are released with
//! [`opuc_string_free`], handles with their matching `*_free` function.
//!
//! Size arguments accept 0 as "use the library default" wherever a
//! default exists (truncation base, grid resolution, ensemble sizes).
//! All calls are safe to issue from multiple threads at once; the error
//! message slot is per thread.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::c_char;
use serde_json::{json, Value};

use opuc::ensemble::{empirical_vs_eta, ks_report, EnsembleSpec, Sampler};
use opuc::error::Error;
use opuc::measures::{measure_from_json, EtaSpec, MeasureSpec, SingularPoint, TrigPoly, GRID_LOG2_DEFAULT};
use opuc::seqcond::{classify, gagliardo_nirenberg_check, Scheme};
use opuc::sumrules::{gem_verdict, sum_rule_check, szego_sum_rule, LadderOpts, SumRuleCase, DEFAULT_BASE};
use opuc::tracepoly::expand_trace_ggt;
use opuc::verblunsky::{
    coeffs_from_measure, measure_from_coeffs, sequence_from_json, truncated_density_of,
    CoeffSequence,
};

/// Outcome of a call.  Anything other than `Ok` stores a message
/// retrievable through `opuc_last_error`.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OpucStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Malformed JSON or a value outside the documented schema.
    Parse = 3,
    /// Structurally valid input outside the function's domain.
    Domain = 4,
    /// Internal consistency failure: a bug in the library, not bad input.
    Internal = 5,
}

/// Coefficient sequence behind an opaque pointer.
pub struct OpucSequence {
    inner: CoeffSequence,
}

/// Measure behind an opaque pointer.
pub struct OpucMeasure {
    inner: MeasureSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type CallResult = Result<(), OpucStatus>;

fn store_error(msg: String) {
    // NUL bytes cannot cross the boundary inside a C string.
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn arg_err(status: OpucStatus, msg: String) -> OpucStatus {
    store_error(msg);
    status
}

fn core_err(e: Error) -> OpucStatus {
    let status = match e {
        Error::Parse(_) | Error::Io(_) => OpucStatus::Parse,
        Error::Domain(_) | Error::TruncationTooSmall { .. } => OpucStatus::Domain,
        Error::Internal(_) => OpucStatus::Internal,
    };
    store_error(e.to_string());
    status
}

/// Convert errors and panics from a call body into a status code.
fn run(body: impl FnOnce() -> CallResult) -> OpucStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => OpucStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => arg_err(OpucStatus::Internal, "panic inside the library".to_string()),
    }
}

unsafe fn utf8_in<'a>(s: *const c_char, what: &str) -> Result<&'a str, OpucStatus> {
    if s.is_null() {
        return Err(arg_err(OpucStatus::NullArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| arg_err(OpucStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle_in<'a, T>(p: *const T, what: &str) -> Result<&'a T, OpucStatus> {
    p.as_ref()
        .ok_or_else(|| arg_err(OpucStatus::NullArgument, format!("{what} is NULL")))
}

unsafe fn out_slot<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, OpucStatus> {
    p.as_mut()
        .ok_or_else(|| arg_err(OpucStatus::NullArgument, format!("{what} is NULL")))
}

fn json_value(text: &str) -> Result<Value, OpucStatus> {
    serde_json::from_str(text).map_err(|e| core_err(e.into()))
}

fn json_out(value: &Value) -> Result<*mut c_char, OpucStatus> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| arg_err(OpucStatus::Internal, e.to_string()))?;
    CString::new(text)
        .map(CString::into_raw)
        .map_err(|_| arg_err(OpucStatus::Internal, "output contained a NUL byte".to_string()))
}

fn ladder_opts(base: usize, grid_log2: u32) -> LadderOpts {
    LadderOpts {
        base: if base == 0 { DEFAULT_BASE } else { base },
        grid_log2: if grid_log2 == 0 { GRID_LOG2_DEFAULT } else { grid_log2 },
    }
}

/// Library version as a heap string; release with `opuc_string_free`.
#[no_mangle]
pub extern "C" fn opuc_version() -> *mut c_char {
    CString::new(env!("CARGO_PKG_VERSION")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message from the most recent failing call on this thread, as a heap
/// string released with `opuc_string_free`.  NULL when nothing has
/// failed yet.
#[no_mangle]
pub extern "C" fn opuc_last_error() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// Release a string returned by this library.  NULL is accepted.
///
/// # Safety
/// `s` must have been returned by a function in this library and not
/// already freed.
#[no_mangle]
pub unsafe extern "C" fn opuc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a coefficient sequence from JSON: a full sequence object with
/// "prefix" / "tail" / "real" fields, or a closed-form reference such as
/// {"closed_form": "zero"}.  On success `*out` owns the sequence;
/// release it with `opuc_sequence_free`.
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` to a writable
/// pointer slot; both must stay valid for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn opuc_sequence_parse(
    json: *const c_char,
    out: *mut *mut OpucSequence,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        let v = json_value(utf8_in(json, "json")?)?;
        let seq = sequence_from_json(&v).map_err(core_err)?;
        *slot = Box::into_raw(Box::new(OpucSequence { inner: seq }));
        Ok(())
    })
}

/// Serialize a sequence handle back to its JSON object form.
///
/// # Safety
/// `seq` must be a live handle from this library; `out` must point to a
/// writable string slot.
#[no_mangle]
pub unsafe extern "C" fn opuc_sequence_to_json(
    seq: *const OpucSequence,
    out: *mut *mut c_char,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        let seq = handle_in(seq, "seq")?;
        *slot = json_out(&seq.inner.to_json())?;
        Ok(())
    })
}

/// Length of a terminated sequence, or SIZE_MAX when the sequence
/// continues forever under its tail law.
///
/// # Safety
/// `seq` must be a live handle; `out_len` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn opuc_sequence_len(
    seq: *const OpucSequence,
    out_len: *mut usize,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out_len, "out_len")?;
        let seq = handle_in(seq, "seq")?;
        *slot = seq.inner.len().unwrap_or(usize::MAX);
        Ok(())
    })
}

/// Whether every coefficient of the sequence is real.
///
/// # Safety
/// `seq` must be a live handle; `out_real` must point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn opuc_sequence_is_real(
    seq: *const OpucSequence,
    out_real: *mut bool,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out_real, "out_real")?;
        let seq = handle_in(seq, "seq")?;
        *slot = seq.inner.is_real();
        Ok(())
    })
}

/// Release a sequence handle.  NULL is accepted.
///
/// # Safety
/// `seq` must have come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn opuc_sequence_free(seq: *mut OpucSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// Parse a measure from JSON: a density spec with "density" /
/// "point_masses" fields, or a singular-point list under
/// "singular_points" denoting the normalized reference measure vanishing
/// at those points.  Release the handle with `opuc_measure_free`.
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` to a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn opuc_measure_parse(
    json: *const c_char,
    out: *mut *mut OpucMeasure,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        let v = json_value(utf8_in(json, "json")?)?;
        let mu = measure_from_json(&v).map_err(core_err)?;
        *slot = Box::into_raw(Box::new(OpucMeasure { inner: mu }));
        Ok(())
    })
}

/// Serialize a measure handle back to its JSON object form.
///
/// # Safety
/// `measure` must be a live handle; `out` must point to a writable
/// string slot.
#[no_mangle]
pub unsafe extern "C" fn opuc_measure_to_json(
    measure: *const OpucMeasure,
    out: *mut *mut c_char,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        let mu = handle_in(measure, "measure")?;
        let v = serde_json::to_value(&mu.inner).map_err(|e| core_err(e.into()))?;
        *slot = json_out(&v)?;
        Ok(())
    })
}

/// Release a measure handle.  NULL is accepted.
///
/// # Safety
/// `measure` must have come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn opuc_measure_free(measure: *mut OpucMeasure) {
    if !measure.is_null() {
        drop(Box::from_raw(measure));
    }
}

/// Extract `count` recursion coefficients from a measure.  The sequence
/// comes back as a new handle in `*out`.
///
/// # Safety
/// `measure` must be a live handle and `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn opuc_coeffs_from_measure(
    measure: *const OpucMeasure,
    count: usize,
    out: *mut *mut OpucSequence,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        let mu = handle_in(measure, "measure")?;
        let ex = coeffs_from_measure(&mu.inner, count).map_err(core_err)?;
        *slot = Box::into_raw(Box::new(OpucSequence { inner: ex.seq }));
        Ok(())
    })
}

/// Extract `count` recursion coefficients together with conditioning
/// diagnostics, as a JSON report with "coefficients",
/// "conditioning_warning", and "norms" fields.
///
/// # Safety
/// `measure` must be a live handle and `out` a writable string slot.
#[no_mangle]
pub unsafe extern "C" fn opuc_coeffs_report(
    measure: *const OpucMeasure,
    count: usize,
    out: *mut *mut c_char,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        let mu = handle_in(measure, "measure")?;
        let ex = coeffs_from_measure(&mu.inner, count).map_err(core_err)?;
        *slot = json_out(&json!({
            "coefficients": ex.seq.to_json(),
            "conditioning_warning": ex.conditioning_warning,
            "norms": ex.norms,
        }))?;
        Ok(())
    })
}

/// Reconstruct a spectral measure from a coefficient sequence: the exact
/// finitely supported measure when the sequence terminates within
/// `steps` coefficients, the truncated density on a 2^grid_log2 grid
/// otherwise.  Zero arguments select the defaults (64 steps, the
/// standard grid).
///
/// # Safety
/// `seq` must be a live handle and `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn opuc_measure_from_coeffs(
    seq: *const OpucSequence,
    steps: usize,
    grid_log2: u32,
    out: *mut *mut OpucMeasure,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        let seq = &handle_in(seq, "seq")?.inner;
        let steps = if steps == 0 { 64 } else { steps };
        let grid = if grid_log2 == 0 { GRID_LOG2_DEFAULT } else { grid_log2 };
        let mu = match seq.len() {
            Some(len) if len <= steps => measure_from_coeffs(seq, len),
            _ => truncated_density_of(seq, steps, grid),
        }
        .map_err(core_err)?;
        *slot = Box::into_raw(Box::new(OpucMeasure { inner: mu }));
        Ok(())
    })
}

/// Evaluate both sides of the sum rule `case_id` (szego, single_K,
/// roots_K, pair_11, mixed_21) on a sequence, reporting the truncation
/// ladder as JSON.  `base` and `grid_log2` accept 0 for the defaults.
///
/// # Safety
/// `case_id` must be NUL-terminated, `seq` a live handle, `out` a
/// writable string slot.
#[no_mangle]
pub unsafe extern "C" fn opuc_sum_rule_check(
    case_id: *const c_char,
    seq: *const OpucSequence,
    base: usize,
    grid_log2: u32,
    out: *mut *mut c_char,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        let case = SumRuleCase::by_id(utf8_in(case_id, "case_id")?).map_err(core_err)?;
        let seq = handle_in(seq, "seq")?;
        let report = sum_rule_check(&case, &seq.inner, &ladder_opts(base, grid_log2))
            .map_err(core_err)?;
        *slot = json_out(&report.to_json())?;
        Ok(())
    })
}

/// Evaluate the plain entropy sum rule from a sequence, a measure, or
/// both (each side is derived from whichever input carries it; at least
/// one of `seq` and `measure` must be non-NULL).
///
/// # Safety
/// Non-NULL handles must be live; `out` must be a writable string slot.
#[no_mangle]
pub unsafe extern "C" fn opuc_szego_sum_rule(
    seq: *const OpucSequence,
    measure: *const OpucMeasure,
    base: usize,
    grid_log2: u32,
    out: *mut *mut c_char,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        if seq.is_null() && measure.is_null() {
            return Err(core_err(Error::domain("need a sequence or a measure")));
        }
        let seq = seq.as_ref().map(|s| &s.inner);
        let mu = measure.as_ref().map(|m| &m.inner);
        let report =
            szego_sum_rule(seq, mu, &ladder_opts(base, grid_log2)).map_err(core_err)?;
        *slot = json_out(&report.to_json())?;
        Ok(())
    })
}

/// Classify each coefficient-side term of a case as finite or divergent,
/// as a JSON report with per-term verdicts and ladder partials.
///
/// # Safety
/// `case_id` must be NUL-terminated, `seq` a live handle, `out` a
/// writable string slot.
#[no_mangle]
pub unsafe extern "C" fn opuc_gem_verdict(
    case_id: *const c_char,
    seq: *const OpucSequence,
    base: usize,
    grid_log2: u32,
    out: *mut *mut c_char,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        let case = SumRuleCase::by_id(utf8_in(case_id, "case_id")?).map_err(core_err)?;
        let seq = handle_in(seq, "seq")?;
        let report =
            gem_verdict(&case, &seq.inner, &ladder_opts(base, grid_log2)).map_err(core_err)?;
        let v = serde_json::to_value(&report).map_err(|e| core_err(e.into()))?;
        *slot = json_out(&v)?;
        Ok(())
    })
}

/// Run a decay-condition scheme against a singular-point list.
/// `points_json` is an array of {"theta": T, "m": M} objects; `scheme`
/// is one of uniform, decomposed, leave-one-out, reduced, relaxed, or
/// NULL for uniform.
///
/// # Safety
/// `seq` must be a live handle; `points_json` must be NUL-terminated;
/// `scheme` may be NULL, otherwise NUL-terminated; `out` must be a
/// writable string slot.
#[no_mangle]
pub unsafe extern "C" fn opuc_classify(
    seq: *const OpucSequence,
    points_json: *const c_char,
    scheme: *const c_char,
    out: *mut *mut c_char,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        let seq = handle_in(seq, "seq")?;
        let points: Vec<SingularPoint> =
            serde_json::from_value(json_value(utf8_in(points_json, "points_json")?)?)
                .map_err(|e| core_err(e.into()))?;
        let scheme = if scheme.is_null() {
            Scheme::Uniform
        } else {
            utf8_in(scheme, "scheme")?.parse().map_err(core_err)?
        };
        let report = classify(&seq.inner, &points, scheme).map_err(core_err)?;
        *slot = json_out(&report.to_json())?;
        Ok(())
    })
}

/// Expand the trace of the `power`-th matrix power into coefficient
/// monomials, as the JSON form of the symbolic decomposition.
///
/// # Safety
/// `out` must be a writable string slot.
#[no_mangle]
pub unsafe extern "C" fn opuc_trace_expand(power: usize, out: *mut *mut c_char) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        let decomp = expand_trace_ggt(power).map_err(core_err)?;
        *slot = json_out(&decomp.to_json())?;
        Ok(())
    })
}

/// Check the discrete interpolation inequality on a finite sequence,
/// reporting both sides and the verdict as JSON.
///
/// # Safety
/// `seq` must be a live handle and `out` a writable string slot.
#[no_mangle]
pub unsafe extern "C" fn opuc_gn_check(
    seq: *const OpucSequence,
    out: *mut *mut c_char,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        let seq = handle_in(seq, "seq")?;
        let report = gagliardo_nirenberg_check(&seq.inner).map_err(core_err)?;
        let v = serde_json::to_value(&report).map_err(|e| core_err(e.into()))?;
        *slot = json_out(&v)?;
        Ok(())
    })
}

/// Sample a batch of random coefficient draws and report summary
/// statistics plus per-index distribution checks as JSON.
///
/// Zero `n`, `draws`, or `bins` select the defaults (8, 100, 16).
/// `potential_json` is an optional tilt potential ({"cosine": [...]} or
/// {"coeffs": [...]}); `sampler` is "cue", "tilted", or NULL to pick
/// "tilted" exactly when a potential is given; `eta_json` optionally
/// names a singular-point list to append a binned distance report.
///
/// # Safety
/// `potential_json`, `sampler`, and `eta_json` may each be NULL,
/// otherwise NUL-terminated; `out` must be a writable string slot.
#[no_mangle]
pub unsafe extern "C" fn opuc_ensemble_sample(
    n: usize,
    draws: usize,
    seed: u64,
    potential_json: *const c_char,
    sampler: *const c_char,
    eta_json: *const c_char,
    bins: usize,
    out: *mut *mut c_char,
) -> OpucStatus {
    run(|| {
        let slot = out_slot(out, "out")?;
        *slot = ptr::null_mut();
        let potential = if potential_json.is_null() {
            None
        } else {
            let v = json_value(utf8_in(potential_json, "potential_json")?)?;
            Some(TrigPoly::from_json(&v).map_err(core_err)?)
        };
        let sampler = if sampler.is_null() {
            if potential.is_some() { Sampler::ImportanceTilted } else { Sampler::DirectCue }
        } else {
            utf8_in(sampler, "sampler")?.parse().map_err(core_err)?
        };
        let spec = EnsembleSpec {
            n: if n == 0 { 8 } else { n },
            potential: potential.unwrap_or_else(|| TrigPoly::constant(0.0)),
            sampler,
            seed,
        };
        let batch = spec.sample(if draws == 0 { 100 } else { draws }).map_err(core_err)?;
        let mut payload = json!({
            "summary": serde_json::to_value(batch.summary()).map_err(|e| core_err(e.into()))?,
            "ks": serde_json::to_value(ks_report(&batch)).map_err(|e| core_err(e.into()))?,
        });
        if !eta_json.is_null() {
            let eta = EtaSpec::from_json(&json_value(utf8_in(eta_json, "eta_json")?)?)
                .map_err(core_err)?;
            let bins = if bins == 0 { 16 } else { bins };
            let dist = empirical_vs_eta(&batch, &eta, bins).map_err(core_err)?;
            payload["distance"] =
                serde_json::to_value(&dist).map_err(|e| core_err(e.into()))?;
        }
        *slot = json_out(&payload)?;
        Ok(())
    })
}
