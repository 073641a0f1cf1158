//! C ABI for the CSI feedback laboratory.
//!
//! Conventions:
//! - Functions return [`CsiStatus`]; `CSI_STATUS_OK` is zero. On failure,
//!   [`csi_last_error_message`] returns a heap-allocated description for the
//!   calling thread (free it with [`csi_string_free`]).
//! - Objects cross the boundary as opaque handles created and destroyed by
//!   this library (`csi_*_free`). Handles are not thread-safe; share them
//!   read-only or confine them to one thread.
//! - Complex tensors are interleaved `(re, im)` float pairs in path-major,
//!   then tx, then rx order.
//! - Panics never unwind across the boundary; they surface as
//!   `CSI_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use libc::{c_char, size_t};
use num_complex::Complex64;

use csi_lab::channel::{ChannelConfig, ChannelTensor, Dataset, Split};
use csi_lab::dataset_io::{read_dataset, write_dataset};
use csi_lab::error::Error;
use csi_lab::harness::{run_pipeline, PipelineConfig};
use csi_lab::nn::softquant::soft_quant;
use csi_lab::quantize::artifact::{read_quantizer, write_quantizer, QuantizerArtifact};
use csi_lab::quantize::{
    compand, dequantize_with_spec, hard_dequant, hard_quant, lloyd_max_fit, quantize_with_spec,
    CompandDirection, CompandLaw, QuantKind, QuantizerSpec, ScalarSpec,
};

/// Result codes of every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Arguments failed validation.
    InvalidArgument = 2,
    /// Filesystem failure.
    Io = 3,
    /// A serialized artifact failed to parse.
    Parse = 4,
    /// A frame or index stream failed validation.
    Corrupt = 5,
    /// Degenerate data (e.g. zero-energy sample).
    Degenerate = 6,
    /// Training diverged.
    Diverged = 7,
    /// The caller-provided buffer is too small.
    BufferTooSmall = 8,
    /// Unexpected internal failure.
    Internal = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CsiStatus {
    match err {
        Error::Config(_) | Error::Shape(_) => CsiStatus::InvalidArgument,
        Error::Degenerate(_) => CsiStatus::Degenerate,
        Error::Parse { .. } | Error::Json(_) => CsiStatus::Parse,
        Error::Corrupt(_) => CsiStatus::Corrupt,
        Error::Diverged { .. } => CsiStatus::Diverged,
        Error::Io(_) => CsiStatus::Io,
    }
}

fn fail(err: Error) -> CsiStatus {
    let code = status_of(&err);
    set_error(err.to_string());
    code
}

/// Runs `f` with panics converted to `CSI_STATUS_INTERNAL`.
fn guarded(f: impl FnOnce() -> CsiStatus) -> CsiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            CsiStatus::Internal
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, CsiStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(CsiStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        CsiStatus::InvalidArgument
    })
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn csi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the calling thread's most recent error, or null. The caller
/// owns the returned string and must release it with [`csi_string_free`].
#[no_mangle]
pub extern "C" fn csi_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must have been returned by a `csi_*` function and not freed before.
#[no_mangle]
pub unsafe extern "C" fn csi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Opaque channel dataset handle.
pub struct CsiDataset {
    inner: Dataset,
}

/// Synthesizes a dataset from a channel-config JSON document (an empty
/// object selects the reference profile; override fields as needed).
/// `split` is 0 for train, 1 for test.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn csi_dataset_generate(
    config_json: *const c_char,
    split: u32,
    out: *mut *mut CsiDataset,
) -> CsiStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return CsiStatus::NullArgument;
        }
        let json = match cstr_arg(config_json) {
            Ok(s) => s,
            Err(code) => return code,
        };
        let config: ChannelConfig = match serde_json::from_str(json) {
            Ok(c) => c,
            Err(e) => {
                set_error(e.to_string());
                return CsiStatus::Parse;
            }
        };
        let split = match split {
            0 => Split::Train,
            1 => Split::Test,
            other => {
                set_error(format!("split {other} is not 0 (train) or 1 (test)"));
                return CsiStatus::InvalidArgument;
            }
        };
        match csi_lab::channel::synth_dataset(&config, split) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(CsiDataset { inner: ds }));
                CsiStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Reads a dataset file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn csi_dataset_open(path: *const c_char, out: *mut *mut CsiDataset) -> CsiStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return CsiStatus::NullArgument;
        }
        let path = match cstr_arg(path) {
            Ok(s) => s,
            Err(code) => return code,
        };
        match read_dataset(path) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(CsiDataset { inner: ds }));
                CsiStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Writes a dataset file.
///
/// # Safety
/// `ds` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn csi_dataset_save(ds: *const CsiDataset, path: *const c_char) -> CsiStatus {
    guarded(|| {
        let Some(ds) = ds.as_ref() else {
            set_error("null dataset handle");
            return CsiStatus::NullArgument;
        };
        let path = match cstr_arg(path) {
            Ok(s) => s,
            Err(code) => return code,
        };
        match write_dataset(&ds.inner, path) {
            Ok(()) => CsiStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn csi_dataset_len(ds: *const CsiDataset) -> u32 {
    ds.as_ref().map(|d| d.inner.samples.len() as u32).unwrap_or(0)
}

/// Sample tensor shape.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn csi_dataset_shape(
    ds: *const CsiDataset,
    n_paths: *mut u32,
    n_tx: *mut u32,
    n_rx: *mut u32,
) -> CsiStatus {
    guarded(|| {
        let Some(ds) = ds.as_ref() else {
            set_error("null dataset handle");
            return CsiStatus::NullArgument;
        };
        if n_paths.is_null() || n_tx.is_null() || n_rx.is_null() {
            set_error("null shape out pointer");
            return CsiStatus::NullArgument;
        }
        let cfg = &ds.inner.config;
        *n_paths = cfg.n_paths as u32;
        *n_tx = cfg.n_tx as u32;
        *n_rx = cfg.n_rx as u32;
        CsiStatus::Ok
    })
}

/// Copies sample `index` into `out` as interleaved `(re, im)` float pairs;
/// `out_len` must be exactly `2 * n_paths * n_tx * n_rx`.
///
/// # Safety
/// `ds` must be a live handle and `out` must point to `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn csi_dataset_sample(
    ds: *const CsiDataset,
    index: u32,
    out: *mut f32,
    out_len: size_t,
) -> CsiStatus {
    guarded(|| {
        let Some(ds) = ds.as_ref() else {
            set_error("null dataset handle");
            return CsiStatus::NullArgument;
        };
        if out.is_null() {
            set_error("null out pointer");
            return CsiStatus::NullArgument;
        }
        let Some(sample) = ds.inner.samples.get(index as usize) else {
            set_error(format!(
                "index {index} outside dataset of {}",
                ds.inner.samples.len()
            ));
            return CsiStatus::InvalidArgument;
        };
        let needed = sample.data().len() * 2;
        if out_len != needed {
            set_error(format!("buffer holds {out_len} floats, sample needs {needed}"));
            return CsiStatus::BufferTooSmall;
        }
        let slice = std::slice::from_raw_parts_mut(out, out_len);
        for (i, c) in sample.data().iter().enumerate() {
            slice[2 * i] = c.re as f32;
            slice[2 * i + 1] = c.im as f32;
        }
        CsiStatus::Ok
    })
}

/// Releases a dataset handle. Null is a no-op.
///
/// # Safety
/// `ds` must have come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn csi_dataset_free(ds: *mut CsiDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

// ---------------------------------------------------------------------------
// Metrics and scalar helpers
// ---------------------------------------------------------------------------

/// Normalized mean squared error between two interleaved complex buffers of
/// `complex_len` coefficients each.
///
/// # Safety
/// Both buffers must hold `2 * complex_len` floats.
#[no_mangle]
pub unsafe extern "C" fn csi_nmse(
    recovered: *const f32,
    original: *const f32,
    complex_len: size_t,
    out: *mut f64,
) -> CsiStatus {
    guarded(|| {
        if recovered.is_null() || original.is_null() || out.is_null() {
            set_error("null buffer");
            return CsiStatus::NullArgument;
        }
        if complex_len == 0 {
            set_error("empty buffers");
            return CsiStatus::InvalidArgument;
        }
        let rec = std::slice::from_raw_parts(recovered, complex_len * 2);
        let orig = std::slice::from_raw_parts(original, complex_len * 2);
        let to_tensor = |buf: &[f32]| {
            let data = buf
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0] as f64, p[1] as f64))
                .collect::<Vec<_>>();
            ChannelTensor::from_data(complex_len, 1, 1, data)
        };
        let (rt, ot) = match (to_tensor(rec), to_tensor(orig)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                set_error("shape construction failed");
                return CsiStatus::Internal;
            }
        };
        match csi_lab::channel::nmse(&rt, &ot) {
            Ok(v) => {
                *out = v;
                CsiStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Mid-rise uniform quantization of `x` in [0, 1].
#[no_mangle]
pub extern "C" fn csi_hard_quant(x: f64, bits: u8) -> u32 {
    hard_quant(x, bits.clamp(1, 16))
}

/// Reconstruction level `(index + 0.5) / 2^bits`.
#[no_mangle]
pub extern "C" fn csi_hard_dequant(index: u32, bits: u8) -> f64 {
    hard_dequant(index, bits.clamp(1, 16))
}

/// Differentiable staircase value and derivative at `x`.
///
/// # Safety
/// `value` and `derivative` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn csi_soft_quant(
    x: f64,
    bits: u8,
    beta: f64,
    value: *mut f64,
    derivative: *mut f64,
) -> CsiStatus {
    guarded(|| {
        if value.is_null() || derivative.is_null() {
            set_error("null out pointer");
            return CsiStatus::NullArgument;
        }
        if !(1..=16).contains(&bits) || !(beta > 0.0) {
            set_error(format!("bits {bits} / beta {beta} invalid"));
            return CsiStatus::InvalidArgument;
        }
        let (v, d) = soft_quant(x, bits, beta);
        *value = v;
        *derivative = d;
        CsiStatus::Ok
    })
}

/// Telephony companding on [-1, 1]. `law`: 0 mu-law, 1 A-law. `direction`:
/// 0 compress, 1 expand.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn csi_compand(
    x: f64,
    law: u32,
    direction: u32,
    out: *mut f64,
) -> CsiStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return CsiStatus::NullArgument;
        }
        let law = match law {
            0 => CompandLaw::Mu,
            1 => CompandLaw::A,
            other => {
                set_error(format!("law {other} is not 0 (mu) or 1 (A)"));
                return CsiStatus::InvalidArgument;
            }
        };
        let direction = match direction {
            0 => CompandDirection::Compress,
            1 => CompandDirection::Expand,
            other => {
                set_error(format!("direction {other} is not 0 (compress) or 1 (expand)"));
                return CsiStatus::InvalidArgument;
            }
        };
        match compand(x, law, direction) {
            Ok(v) => {
                *out = v;
                CsiStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Uncompressed sample size in bits (32-bit float pairs).
#[no_mangle]
pub extern "C" fn csi_raw_sample_bits(n_paths: u32, n_tx: u32, n_rx: u32) -> u64 {
    (n_paths as u64) * (n_tx as u64) * (n_rx as u64) * 2 * 32
}

// ---------------------------------------------------------------------------
// Quantizers
// ---------------------------------------------------------------------------

/// Opaque quantizer handle (scalar spec or vector codebook).
pub struct CsiQuantizer {
    inner: QuantizerArtifact,
}

/// Uniform mid-rise scalar quantizer on [0, 1].
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn csi_quantizer_uniform(bits: u8, out: *mut *mut CsiQuantizer) -> CsiStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return CsiStatus::NullArgument;
        }
        let spec = match ScalarSpec::uniform(bits) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        match QuantizerSpec::shared(QuantKind::Uniform, spec) {
            Ok(q) => {
                *out = Box::into_raw(Box::new(CsiQuantizer { inner: QuantizerArtifact::Scalar(q) }));
                CsiStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Fits a data-adaptive scalar quantizer to `samples`.
///
/// # Safety
/// `samples` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn csi_quantizer_fit_adaptive(
    samples: *const f64,
    len: size_t,
    bits: u8,
    out: *mut *mut CsiQuantizer,
) -> CsiStatus {
    guarded(|| {
        if samples.is_null() || out.is_null() {
            set_error("null pointer");
            return CsiStatus::NullArgument;
        }
        let data = std::slice::from_raw_parts(samples, len);
        match lloyd_max_fit(data, bits, 100, 1e-6) {
            Ok(fit) => match QuantizerSpec::shared(QuantKind::Adaptive, fit.spec) {
                Ok(q) => {
                    *out = Box::into_raw(Box::new(CsiQuantizer {
                        inner: QuantizerArtifact::Scalar(q),
                    }));
                    CsiStatus::Ok
                }
                Err(e) => fail(e),
            },
            Err(e) => fail(e),
        }
    })
}

/// Loads a quantizer artifact file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn csi_quantizer_open(path: *const c_char, out: *mut *mut CsiQuantizer) -> CsiStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return CsiStatus::NullArgument;
        }
        let path = match cstr_arg(path) {
            Ok(s) => s,
            Err(code) => return code,
        };
        match read_quantizer(path) {
            Ok(q) => {
                *out = Box::into_raw(Box::new(CsiQuantizer { inner: q }));
                CsiStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Saves a quantizer artifact file.
///
/// # Safety
/// `q` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn csi_quantizer_save(q: *const CsiQuantizer, path: *const c_char) -> CsiStatus {
    guarded(|| {
        let Some(q) = q.as_ref() else {
            set_error("null quantizer handle");
            return CsiStatus::NullArgument;
        };
        let path = match cstr_arg(path) {
            Ok(s) => s,
            Err(code) => return code,
        };
        match write_quantizer(&q.inner, path) {
            Ok(()) => CsiStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Quantizes `features` (doubles in the quantizer's domain). Writes up to
/// `cap` indices and the true count to `written`; fails with
/// `CSI_STATUS_BUFFER_TOO_SMALL` when `cap` is insufficient.
///
/// # Safety
/// Buffers must match their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn csi_quantizer_quantize(
    q: *const CsiQuantizer,
    features: *const f64,
    len: size_t,
    out_indices: *mut u32,
    cap: size_t,
    written: *mut size_t,
) -> CsiStatus {
    guarded(|| {
        let Some(q) = q.as_ref() else {
            set_error("null quantizer handle");
            return CsiStatus::NullArgument;
        };
        if features.is_null() || out_indices.is_null() || written.is_null() {
            set_error("null buffer");
            return CsiStatus::NullArgument;
        }
        let feats = std::slice::from_raw_parts(features, len);
        let indices = match &q.inner {
            QuantizerArtifact::Scalar(spec) => quantize_with_spec(feats, spec),
            QuantizerArtifact::Vector(cb) => csi_lab::quantize::vq_encode(feats, cb),
        };
        match indices {
            Ok(ix) => {
                if ix.len() > cap {
                    set_error(format!("need space for {} indices, cap is {cap}", ix.len()));
                    return CsiStatus::BufferTooSmall;
                }
                let out = std::slice::from_raw_parts_mut(out_indices, ix.len());
                out.copy_from_slice(&ix);
                *written = ix.len();
                CsiStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Reconstructs `feature_len` features from `indices`.
///
/// # Safety
/// Buffers must match their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn csi_quantizer_dequantize(
    q: *const CsiQuantizer,
    indices: *const u32,
    n_indices: size_t,
    out: *mut f64,
    feature_len: size_t,
) -> CsiStatus {
    guarded(|| {
        let Some(q) = q.as_ref() else {
            set_error("null quantizer handle");
            return CsiStatus::NullArgument;
        };
        if indices.is_null() || out.is_null() {
            set_error("null buffer");
            return CsiStatus::NullArgument;
        }
        let ix = std::slice::from_raw_parts(indices, n_indices);
        let features = match &q.inner {
            QuantizerArtifact::Scalar(spec) => dequantize_with_spec(ix, spec, feature_len),
            QuantizerArtifact::Vector(cb) => csi_lab::quantize::vq_decode(ix, cb),
        };
        match features {
            Ok(f) => {
                if f.len() != feature_len {
                    set_error(format!("reconstructed {} features, expected {feature_len}", f.len()));
                    return CsiStatus::InvalidArgument;
                }
                std::slice::from_raw_parts_mut(out, feature_len).copy_from_slice(&f);
                CsiStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a quantizer handle. Null is a no-op.
///
/// # Safety
/// `q` must have come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn csi_quantizer_free(q: *mut CsiQuantizer) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

/// Builds a feedback frame. `scheme` is the wire scheme id (0 uniform,
/// 1 companded, 2 adaptive, 3 vector, 4 path-level); `mask` holds one 0/1
/// byte per path. Writes up to `cap` bytes and the true length to `written`.
///
/// # Safety
/// Buffers must match their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn csi_frame_encode(
    scheme: u8,
    mask: *const u8,
    n_paths: size_t,
    indices: *const u32,
    widths: *const u8,
    n_symbols: size_t,
    out: *mut u8,
    cap: size_t,
    written: *mut size_t,
) -> CsiStatus {
    guarded(|| {
        if mask.is_null() || out.is_null() || written.is_null() || (n_symbols > 0 && (indices.is_null() || widths.is_null())) {
            set_error("null buffer");
            return CsiStatus::NullArgument;
        }
        let scheme = match csi_lab::bitstream::SchemeId::from_u8(scheme) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let mask_bits: Vec<bool> = std::slice::from_raw_parts(mask, n_paths)
            .iter()
            .map(|&b| b != 0)
            .collect();
        let ix = if n_symbols > 0 {
            std::slice::from_raw_parts(indices, n_symbols)
        } else {
            &[]
        };
        let ws = if n_symbols > 0 {
            std::slice::from_raw_parts(widths, n_symbols)
        } else {
            &[]
        };
        match csi_lab::bitstream::encode_frame(scheme, &mask_bits, ix, ws) {
            Ok(bytes) => {
                if bytes.len() > cap {
                    set_error(format!("frame needs {} bytes, cap is {cap}", bytes.len()));
                    return CsiStatus::BufferTooSmall;
                }
                std::slice::from_raw_parts_mut(out, bytes.len()).copy_from_slice(&bytes);
                *written = bytes.len();
                CsiStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Validates a frame and reports its budget charge (mask + payload bits).
///
/// # Safety
/// `bytes` must point to `len` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn csi_frame_feedback_bits(
    bytes: *const u8,
    len: size_t,
    n_paths: size_t,
    out: *mut u32,
) -> CsiStatus {
    guarded(|| {
        if bytes.is_null() || out.is_null() {
            set_error("null buffer");
            return CsiStatus::NullArgument;
        }
        let buf = std::slice::from_raw_parts(bytes, len);
        match csi_lab::bitstream::decode_frame(buf, n_paths) {
            Ok(frame) => {
                *out = csi_lab::bitstream::feedback_bit_count(&frame);
                CsiStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

/// Runs a full pipeline described by a JSON config and returns the report
/// row as JSON (free with [`csi_string_free`]). Heavy: may train networks.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string; `report_json_out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn csi_pipeline_run(
    config_json: *const c_char,
    report_json_out: *mut *mut c_char,
) -> CsiStatus {
    guarded(|| {
        if report_json_out.is_null() {
            set_error("null out pointer");
            return CsiStatus::NullArgument;
        }
        let json = match cstr_arg(config_json) {
            Ok(s) => s,
            Err(code) => return code,
        };
        let config: PipelineConfig = match serde_json::from_str(json) {
            Ok(c) => c,
            Err(e) => {
                set_error(e.to_string());
                return CsiStatus::Parse;
            }
        };
        match run_pipeline(&config) {
            Ok((row, _)) => {
                let text = serde_json::to_string(&row).unwrap_or_default();
                match CString::new(text) {
                    Ok(c) => {
                        *report_json_out = c.into_raw();
                        CsiStatus::Ok
                    }
                    Err(_) => {
                        set_error("report contains interior NUL");
                        CsiStatus::Internal
                    }
                }
            }
            Err(e) => fail(e),
        }
    })
}
