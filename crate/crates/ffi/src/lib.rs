//! C ABI over `synthattr`: load a trained checkpoint, classify or embed
//! waveforms, and compute MFCCs.
//!
//! Every fallible function returns an [`SaStatus`]. On failure a
//! human-readable message is stored per thread and can be read with
//! [`sa_last_error_message`]. Handles are opaque and must be released with
//! the matching `_free` function. Panics never cross the boundary; they are
//! reported as [`SaStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use synthattr::audio::{self, AudioClip};
use synthattr::features;
use synthattr::pipeline::train::Checkpoint;
use synthattr::pipeline::PipelineError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Bad configuration or parameters inside the library.
    Config = 3,
    /// Unreadable or malformed input data.
    Data = 4,
    /// Non-finite values or a failed numeric routine.
    Numeric = 5,
    /// Output buffer too small; the required size was written.
    BufferTooSmall = 6,
    Panic = 7,
}

/// A loaded model (network or classical baseline).
pub struct SaModel {
    checkpoint: Checkpoint,
}

/// A mono waveform with its sample rate.
pub struct SaClip {
    clip: AudioClip,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(SaStatus, String);

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match e.exit_code() {
            2 => SaStatus::Config,
            4 => SaStatus::Numeric,
            _ => SaStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

impl From<audio::AudioError> for Failure {
    fn from(e: audio::AudioError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<features::FeatureError> for Failure {
    fn from(e: features::FeatureError) -> Self {
        PipelineError::from(e).into()
    }
}

fn null(what: &str) -> Failure {
    Failure(SaStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SaStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus last-error
/// message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            SaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SaStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, Failure> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn samples_arg<'a>(samples: *const f32, len: usize) -> Result<&'a [f32], Failure> {
    if samples.is_null() {
        return Err(null("samples"));
    }
    if len == 0 {
        return Err(invalid("samples is empty"));
    }
    Ok(std::slice::from_raw_parts(samples, len))
}

/// Message of the last failed call on this thread, or null if the last
/// call succeeded. Valid until the next call into the library on this
/// thread.
#[no_mangle]
pub extern "C" fn sa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint written by `synthattr train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_model_load(path: *const c_char, out: *mut *mut SaModel) -> SaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let checkpoint = Checkpoint::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SaModel { checkpoint }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`sa_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sa_model_free(model: *mut SaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of classes, or 0 for a null model.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sa_model_num_classes(model: *const SaModel) -> usize {
    model.as_ref().map_or(0, |m| m.checkpoint.num_classes())
}

/// Embedding width, or 0 for classical models and null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sa_model_embedding_dim(model: *const SaModel) -> usize {
    model
        .as_ref()
        .and_then(|m| m.checkpoint.embedding_dim())
        .unwrap_or(0)
}

/// Clip length the model was trained on, in seconds; 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sa_model_clip_seconds(model: *const SaModel) -> f64 {
    model.as_ref().map_or(0.0, |m| m.checkpoint.clip_seconds)
}

fn prepared(model: &SaModel, clip: &AudioClip) -> Result<Vec<f32>, Failure> {
    Ok(model.checkpoint.prepare(clip)?)
}

/// Predicted class of a clip. The clip is resampled and tiled or trimmed
/// to the model's clip length first.
///
/// # Safety
/// `model` and `clip` must be live handles; `out_label` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_model_predict(model: *const SaModel, clip: *const SaClip, out_label: *mut u32) -> SaStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let clip = ref_arg(clip, "clip")?;
        let out_label = out_arg(out_label, "out_label")?;
        let wave = prepared(model, &clip.clip)?;
        let label = model.checkpoint.predict(&[wave], 1)?[0];
        *out_label = label as u32;
        Ok(())
    })
}

/// Writes the embedding of a clip into `out` (capacity `cap` values) and
/// its width into `out_len`. With a too-small buffer nothing is copied,
/// `out_len` still receives the width and `BufferTooSmall` is returned.
///
/// # Safety
/// `model` and `clip` must be live handles; `out` must hold `cap` values
/// (it may be null when `cap` is 0); `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_model_embed(
    model: *const SaModel,
    clip: *const SaClip,
    out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> SaStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let clip = ref_arg(clip, "clip")?;
        let out_len = out_arg(out_len, "out_len")?;
        let dim = model
            .checkpoint
            .embedding_dim()
            .ok_or_else(|| invalid("classical models have no embedding layer"))?;
        *out_len = dim;
        if cap < dim || out.is_null() {
            return Err(Failure(SaStatus::BufferTooSmall, format!("embedding needs {dim} values, got {cap}")));
        }
        let wave = prepared(model, &clip.clip)?;
        let emb = model.checkpoint.embed(&[wave], 1)?;
        std::slice::from_raw_parts_mut(out, dim).copy_from_slice(&emb[0]);
        Ok(())
    })
}

/// Reads a 16-bit PCM WAV file, downmixed to mono at its native rate.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_clip_load_wav(path: *const c_char, out: *mut *mut SaClip) -> SaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let clip = audio::load_wav(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SaClip { clip }));
        Ok(())
    })
}

/// Copies `len` samples in `[-1, 1]` into a new clip.
///
/// # Safety
/// `samples` must point to `len` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_clip_from_samples(
    samples: *const f32,
    len: usize,
    sample_rate: u32,
    out: *mut *mut SaClip,
) -> SaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let samples = samples_arg(samples, len)?;
        if sample_rate == 0 {
            return Err(invalid("sample_rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Failure(SaStatus::Numeric, "samples contain non-finite values".into()));
        }
        let clip = AudioClip::new(samples.iter().map(|s| s.clamp(-1.0, 1.0)).collect(), sample_rate);
        *out = Box::into_raw(Box::new(SaClip { clip }));
        Ok(())
    })
}

/// New clip resampled to 16 kHz and tiled or trimmed to `seconds`.
///
/// # Safety
/// `clip` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sa_clip_canonicalize(clip: *const SaClip, seconds: f64, out: *mut *mut SaClip) -> SaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let clip = ref_arg(clip, "clip")?;
        let resampled = audio::resample(&clip.clip, synthattr::CANONICAL_SAMPLE_RATE)?;
        let fitted = audio::normalize_length(&resampled, seconds)?;
        *out = Box::into_raw(Box::new(SaClip { clip: fitted }));
        Ok(())
    })
}

/// Releases a clip; null is ignored.
///
/// # Safety
/// `clip` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sa_clip_free(clip: *mut SaClip) {
    if !clip.is_null() {
        drop(Box::from_raw(clip));
    }
}

/// Number of samples, or 0 for null.
///
/// # Safety
/// `clip` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sa_clip_len(clip: *const SaClip) -> usize {
    clip.as_ref().map_or(0, |c| c.clip.len())
}

/// Sample rate in Hz, or 0 for null.
///
/// # Safety
/// `clip` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sa_clip_sample_rate(clip: *const SaClip) -> u32 {
    clip.as_ref().map_or(0, |c| c.clip.sample_rate)
}

/// Borrowed pointer to the samples, valid while the clip lives; null for
/// a null clip.
///
/// # Safety
/// `clip` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sa_clip_samples(clip: *const SaClip) -> *const f32 {
    clip.as_ref().map_or(ptr::null(), |c| c.clip.samples.as_ptr())
}

/// MFCC matrix of a clip, row-major `frames x n_mfcc`. The shape is always
/// written to `out_frames` / `out_coeffs`; pass `cap = 0` to query it.
///
/// # Safety
/// `clip` must be a live handle; `out` must hold `cap` values (it may be
/// null when `cap` is 0); `out_frames` and `out_coeffs` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sa_mfcc(
    clip: *const SaClip,
    n_mfcc: usize,
    n_mels: usize,
    frame_length: usize,
    hop_length: usize,
    out: *mut f64,
    cap: usize,
    out_frames: *mut usize,
    out_coeffs: *mut usize,
) -> SaStatus {
    guard(|| {
        let clip = ref_arg(clip, "clip")?;
        let out_frames = out_arg(out_frames, "out_frames")?;
        let out_coeffs = out_arg(out_coeffs, "out_coeffs")?;
        if hop_length == 0 {
            return Err(invalid("hop_length must be positive"));
        }
        let m = features::mfcc(&clip.clip, n_mfcc, n_mels, frame_length, hop_length)?;
        *out_frames = m.frames();
        *out_coeffs = m.coeffs();
        let need = m.values().len();
        if cap < need || out.is_null() {
            return Err(Failure(SaStatus::BufferTooSmall, format!("mfcc needs {need} values, got {cap}")));
        }
        std::slice::from_raw_parts_mut(out, need).copy_from_slice(m.values());
        Ok(())
    })
}
