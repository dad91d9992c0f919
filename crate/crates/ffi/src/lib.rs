//! C ABI for holoverify: load an encoder, embed ROI frames, score clips,
//! calibrate thresholds and decide.
//!
//! Every fallible call returns an [`HvStatus`]; on failure the message is
//! available from [`hv_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use holoverify::catalog::Label;
use holoverify::cli::CalibrationFile;
use holoverify::decision::{calibrate_threshold, decide_cumulative, video_score, CalibrationResult, EmbeddingSequence, Strategy};
use holoverify::encoder::{eval_input, EncoderModel};
use holoverify::metrics::Verdict;
use holoverify::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Shape = 4,
    DegenerateEmbedding = 5,
    Checkpoint = 6,
    Parse = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HvVerdict {
    Original = 0,
    Attack = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HvStrategy {
    Whole = 0,
    Cumulative = 1,
}

/// Opaque encoder handle.
pub struct HvModel(EncoderModel);

/// Opaque calibrated-threshold handle.
pub struct HvCalibration(CalibrationResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> HvStatus {
    match e {
        Error::Io { .. } | Error::Image { .. } => HvStatus::Io,
        Error::Shape(_) => HvStatus::Shape,
        Error::DegenerateEmbedding(_) => HvStatus::DegenerateEmbedding,
        Error::Checkpoint { .. } => HvStatus::Checkpoint,
        Error::Parse { .. } => HvStatus::Parse,
        _ => HvStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (HvStatus, String)>) -> HvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HvStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HvStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (HvStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (HvStatus, String) {
    (HvStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (HvStatus, String) {
    (HvStatus::InvalidArgument, msg.into())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, (HvStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn embeddings_arg(data: *const f32, n_frames: usize, dim: usize) -> Result<EmbeddingSequence, (HvStatus, String)> {
    if data.is_null() {
        return Err(null("embeddings"));
    }
    if n_frames == 0 || dim == 0 {
        return Err(invalid("embeddings must be non-empty"));
    }
    let flat = std::slice::from_raw_parts(data, n_frames * dim);
    Ok(EmbeddingSequence::new("ffi", flat.chunks(dim).map(<[f32]>::to_vec).collect()))
}

/// Message of the last failed call on this thread; empty if none. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn hv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint written by `holoverify train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hv_model_load(path: *const c_char, out: *mut *mut HvModel) -> HvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path)?;
        let model = EncoderModel::load(&path).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(HvModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`hv_model_load`] and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hv_model_free(model: *mut HvModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Embedding length of the model, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hv_model_embedding_dim(model: *const HvModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.embedding_dim())
}

/// Embeds one interleaved RGB8 ROI image (row-major, `width * height * 3` bytes).
///
/// # Safety
/// `rgb` must hold `width * height * 3` bytes and `out` `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn hv_model_embed_rgb(
    model: *const HvModel,
    rgb: *const u8,
    width: u32,
    height: u32,
    out: *mut f32,
    out_len: usize,
) -> HvStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if rgb.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        if width == 0 || height == 0 {
            return Err(invalid("image must be non-empty"));
        }
        if out_len != model.0.embedding_dim() {
            return Err((HvStatus::Shape, format!("output holds {out_len} floats, embedding has {}", model.0.embedding_dim())));
        }
        let bytes = std::slice::from_raw_parts(rgb, width as usize * height as usize * 3).to_vec();
        let img = holoverify::image::RgbImage::from_raw(width, height, bytes).ok_or_else(|| invalid("bad image buffer"))?;
        let e = model.0.embed_frame(&eval_input(&img)).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(&e);
        Ok(())
    })
}

/// Mean pairwise cosine distance of `n_frames` embeddings of length `dim`.
///
/// # Safety
/// `embeddings` must hold `n_frames * dim` floats and `out_score` be valid.
#[no_mangle]
pub unsafe extern "C" fn hv_video_score(embeddings: *const f32, n_frames: usize, dim: usize, out_score: *mut f64) -> HvStatus {
    guard(|| {
        if out_score.is_null() {
            return Err(null("out_score"));
        }
        let seq = embeddings_arg(embeddings, n_frames, dim)?;
        *out_score = video_score(&seq).map_err(lib_err)?;
        Ok(())
    })
}

/// Calibrates a threshold on `n` validation scores; `labels[i]` is 1 for attack, 0 for original.
///
/// # Safety
/// `scores` and `labels` must hold `n` elements and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn hv_calibrate(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    strategy: HvStrategy,
    out: *mut *mut HvCalibration,
) -> HvStatus {
    guard(|| {
        if out.is_null() || scores.is_null() || labels.is_null() {
            return Err(null("argument"));
        }
        *out = ptr::null_mut();
        let scores = std::slice::from_raw_parts(scores, n);
        let labels = std::slice::from_raw_parts(labels, n);
        let val = scores
            .iter()
            .zip(labels)
            .map(|(&s, &l)| match l {
                0 => Ok((s, Label::Original)),
                1 => Ok((s, Label::Attack)),
                _ => Err(invalid(format!("label {l} is neither 0 nor 1"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let strategy = match strategy {
            HvStrategy::Whole => Strategy::Whole,
            HvStrategy::Cumulative => Strategy::Cumulative,
        };
        let cal = calibrate_threshold(&val, strategy).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(HvCalibration(cal)));
        Ok(())
    })
}

/// Loads a calibration file written by `holoverify calibrate`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hv_calibration_load(path: *const c_char, out: *mut *mut HvCalibration) -> HvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path)?;
        let text = std::fs::read_to_string(&path).map_err(|e| (HvStatus::Io, format!("{}: {e}", path.display())))?;
        let file: CalibrationFile = serde_json::from_str(&text).map_err(|e| (HvStatus::Parse, format!("{}: {e}", path.display())))?;
        *out = Box::into_raw(Box::new(HvCalibration(file.calibration)));
        Ok(())
    })
}

/// # Safety
/// `cal` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hv_calibration_free(cal: *mut HvCalibration) {
    if !cal.is_null() {
        drop(Box::from_raw(cal));
    }
}

/// Calibrated threshold, or NaN for a null handle.
///
/// # Safety
/// `cal` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hv_calibration_threshold(cal: *const HvCalibration) -> f64 {
    cal.as_ref().map_or(f64::NAN, |c| c.0.threshold)
}

/// Validation F-score reached by the threshold, or NaN for a null handle.
///
/// # Safety
/// `cal` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hv_calibration_fscore(cal: *const HvCalibration) -> f64 {
    cal.as_ref().map_or(f64::NAN, |c| c.0.validation_fscore)
}

fn verdict(v: Verdict) -> HvVerdict {
    match v {
        Verdict::Original => HvVerdict::Original,
        Verdict::Attack => HvVerdict::Attack,
    }
}

/// Verdict for a precomputed clip score.
///
/// # Safety
/// `cal` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn hv_decide(cal: *const HvCalibration, score: f64, out: *mut HvVerdict) -> HvStatus {
    guard(|| {
        let cal = cal.as_ref().ok_or_else(|| null("calibration"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !score.is_finite() {
            return Err(invalid("score must be finite"));
        }
        *out = verdict(cal.0.verdict(score));
        Ok(())
    })
}

/// Streaming decision over `n_frames` embeddings; writes the verdict and the frame index it was taken at.
///
/// # Safety
/// `embeddings` must hold `n_frames * dim` floats; `cal`, `out` and `out_stop_index` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hv_decide_cumulative(
    cal: *const HvCalibration,
    embeddings: *const f32,
    n_frames: usize,
    dim: usize,
    min_buffer: usize,
    out: *mut HvVerdict,
    out_stop_index: *mut usize,
) -> HvStatus {
    guard(|| {
        let cal = cal.as_ref().ok_or_else(|| null("calibration"))?;
        if out.is_null() || out_stop_index.is_null() {
            return Err(null("out"));
        }
        let seq = embeddings_arg(embeddings, n_frames, dim)?;
        let d = decide_cumulative(seq.vectors, &cal.0, min_buffer).map_err(lib_err)?;
        *out = verdict(d.verdict);
        *out_stop_index = d.stop_index;
        Ok(())
    })
}
