//! C interface to `mixsvs`.
//!
//! Every fallible function returns a [`MixsvsStatus`]; on failure the
//! message is available from [`mixsvs_last_error`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mixsvs::analysis::identity_probe;
use mixsvs::features::MelSpectrogram;
use mixsvs::inference::{plan, synthesize, PlanMode};
use mixsvs::model::{ModelConfig, ModelParams};
use mixsvs::score::vocab::PitchVocab;
use mixsvs::score::{align_to_frames, FrameAlignment, FrameRate, Score};
use mixsvs::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixsvsStatus {
    Ok = 0,
    NullPointer = 1,
    Utf8 = 2,
    Dimension = 3,
    Parameter = 4,
    DegenerateInput = 5,
    Numeric = 6,
    Format = 7,
    Alignment = 8,
    Input = 9,
    Range = 10,
    Vocab = 11,
    Capability = 12,
    Config = 13,
    Io = 14,
    Panic = 15,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixsvsPlanMode {
    Naive = 0,
    Overlapped = 1,
}

/// A loaded or initialised model.
pub struct MixsvsModel(ModelParams);

/// A synthesized mel-spectrogram, row-major `frames x bins`.
pub struct MixsvsMel(MelSpectrogram);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MixsvsStatus {
    match e {
        Error::Dimension(_) => MixsvsStatus::Dimension,
        Error::Parameter(_) => MixsvsStatus::Parameter,
        Error::DegenerateInput(_) => MixsvsStatus::DegenerateInput,
        Error::Numeric(_) => MixsvsStatus::Numeric,
        Error::Format(_) => MixsvsStatus::Format,
        Error::Alignment(_) => MixsvsStatus::Alignment,
        Error::Input(_) => MixsvsStatus::Input,
        Error::Range(_) => MixsvsStatus::Range,
        Error::Vocab(_) => MixsvsStatus::Vocab,
        Error::Capability(_) => MixsvsStatus::Capability,
        Error::Config(_) => MixsvsStatus::Config,
        Error::Io(_) => MixsvsStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Utf8(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MixsvsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MixsvsStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            MixsvsStatus::NullPointer
        }
        Ok(Err(Fail::Utf8(what))) => {
            set_error(format!("{what} is not valid UTF-8"));
            MixsvsStatus::Utf8
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            MixsvsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn plan_mode(m: MixsvsPlanMode) -> PlanMode {
    match m {
        MixsvsPlanMode::Naive => PlanMode::Naive,
        MixsvsPlanMode::Overlapped => PlanMode::Overlapped,
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mixsvs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mixsvs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint (`.ten1` plus its `.json` config sidecar).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_model_load(path: *const c_char, out: *mut *mut MixsvsModel) -> MixsvsStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let params = ModelParams::load(&PathBuf::from(path))?;
        put(out, MixsvsModel(params));
        Ok(())
    })
}

/// Initialises a model from a JSON model config, or the default config when
/// `config_json` is NULL.
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_model_init(config_json: *const c_char, seed: u64, out: *mut *mut MixsvsModel) -> MixsvsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let config = if config_json.is_null() {
            ModelConfig::default()
        } else {
            let text = str_arg(config_json, "config_json")?;
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        put(out, MixsvsModel(ModelParams::init(&config, seed)?));
        Ok(())
    })
}

/// # Safety
/// `model` and `path` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_model_save(model: *const MixsvsModel, path: *const c_char) -> MixsvsStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let path = str_arg(path, "path")?;
        model.0.save(&PathBuf::from(path))?;
        Ok(())
    })
}

/// Releases a model; NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_model_free(model: *mut MixsvsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Segment length in frames, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_model_seq_len(model: *const MixsvsModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.config.seq_len)
}

/// Number of trainable scalars, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_model_param_count(model: *const MixsvsModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.param_count())
}

/// Synthesizes a score given as JSON text.
///
/// # Safety
/// `model` and `score_json` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_synthesize_score(
    model: *const MixsvsModel,
    score_json: *const c_char,
    mode: MixsvsPlanMode,
    overlap: usize,
    k: usize,
    out: *mut *mut MixsvsMel,
) -> MixsvsStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let text = str_arg(score_json, "score_json")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let score = Score::from_json(text.as_bytes())?;
        let align = align_to_frames(&score, k, None, FrameRate::default(), &PitchVocab::default())?;
        let p = plan(plan_mode(mode), align.frames(), model.0.config.seq_len, overlap)?;
        put(out, MixsvsMel(synthesize(&model.0, &align, &p)?.mel));
        Ok(())
    })
}

/// Synthesizes from per-frame pitch and phoneme ids, `frames` of each.
///
/// # Safety
/// The id arrays must hold `frames` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_synthesize_ids(
    model: *const MixsvsModel,
    pitch_ids: *const u32,
    phoneme_ids: *const u32,
    frames: usize,
    mode: MixsvsPlanMode,
    overlap: usize,
    out: *mut *mut MixsvsMel,
) -> MixsvsStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        if pitch_ids.is_null() || phoneme_ids.is_null() {
            return Err(Fail::Null("ids"));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let ids = |p: *const u32| std::slice::from_raw_parts(p, frames).iter().map(|&i| i as usize).collect();
        let align = FrameAlignment {
            pitch_ids: ids(pitch_ids),
            phoneme_ids: ids(phoneme_ids),
        };
        let p = plan(plan_mode(mode), frames, model.0.config.seq_len, overlap)?;
        put(out, MixsvsMel(synthesize(&model.0, &align, &p)?.mel));
        Ok(())
    })
}

/// Diagonal constancy of the identity probe of one block's token mixer.
///
/// # Safety
/// `model` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_probe_constancy(model: *const MixsvsModel, block: usize, out: *mut f64) -> MixsvsStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = identity_probe(&model.0, block)?.diagonal_constancy;
        Ok(())
    })
}

/// # Safety
/// `mel` must be NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_mel_frames(mel: *const MixsvsMel) -> usize {
    mel.as_ref().map_or(0, |m| m.0.frames())
}

/// # Safety
/// `mel` must be NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_mel_bins(mel: *const MixsvsMel) -> usize {
    mel.as_ref().map_or(0, |m| m.0.bins())
}

/// Row-major values, owned by `mel`.
///
/// # Safety
/// `mel` must be NULL or valid; the pointer dies with `mel`.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_mel_data(mel: *const MixsvsMel) -> *const f32 {
    mel.as_ref().map_or(ptr::null(), |m| m.0.values.data().as_ptr())
}

/// Writes the spectrogram as a MEL1 file.
///
/// # Safety
/// `mel` and `path` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_mel_write(mel: *const MixsvsMel, path: *const c_char) -> MixsvsStatus {
    guard(|| {
        let mel = ref_arg(mel, "mel")?;
        let path = str_arg(path, "path")?;
        mel.0.write(&PathBuf::from(path))?;
        Ok(())
    })
}

/// # Safety
/// `mel` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mixsvs_mel_free(mel: *mut MixsvsMel) {
    if !mel.is_null() {
        drop(Box::from_raw(mel));
    }
}
