//! C interface to moodseq: load a checkpoint, score raw windows or a whole
//! subject, and map PHQ-8 scores to labels.
//!
//! Every fallible function returns a [`MoodseqStatus`]. On failure the
//! message is kept per thread and read with [`moodseq_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use moodseq::checkpoint::Checkpoint;
use moodseq::cli::predict_raw;
use moodseq::models::{phq_to_label, BinaryLabel, Modality, ModelGraph, ModelInput, AUDIO_FEATURES};
use moodseq::tensor::Tensor;
use moodseq::Error;

pub const MOODSEQ_NUM_CLASSES: usize = 5;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoodseqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    Io = 4,
    Shape = 5,
    Diverged = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoodseqModality {
    Audio = 0,
    Text = 1,
    Both = 2,
}

/// Input geometry of a loaded model.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MoodseqModelInfo {
    pub modality: MoodseqModality,
    /// Frames per audio window.
    pub timestep: usize,
    /// Tokens per text window.
    pub window: usize,
    /// Values per audio frame.
    pub features: usize,
    /// Valid token indices are `0..vocab_rows`.
    pub vocab_rows: usize,
    pub num_classes: usize,
}

/// Patient-level outcome of [`moodseq_predict_files`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct MoodseqVote {
    pub voted: u32,
    pub windows: usize,
    pub tally: [u32; MOODSEQ_NUM_CLASSES],
}

/// Opaque handle to a loaded model.
pub struct MoodseqModel {
    checkpoint: Checkpoint,
    model: ModelGraph<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MoodseqStatus {
    match e {
        Error::Usage(_) | Error::Config(_) | Error::OutOfRange { .. } => MoodseqStatus::InvalidArgument,
        Error::Format { .. } | Error::Parse { .. } => MoodseqStatus::Format,
        Error::Io { .. } => MoodseqStatus::Io,
        Error::Shape { .. } => MoodseqStatus::Shape,
        Error::Diverged(_) => MoodseqStatus::Diverged,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (MoodseqStatus, String)>) -> MoodseqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MoodseqStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MoodseqStatus::Panic
        }
    }
}

fn fail(e: Error) -> (MoodseqStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MoodseqStatus, String) {
    (MoodseqStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<Option<PathBuf>, (MoodseqStatus, String)> {
    if p.is_null() {
        return Ok(None);
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (MoodseqStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(Some(PathBuf::from(s)))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn moodseq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn moodseq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint. On success `*out` owns a handle to release with
/// [`moodseq_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn moodseq_model_load(path: *const c_char, out: *mut *mut MoodseqModel) -> MoodseqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let path = path_arg(path, "path")?.ok_or_else(|| null("path"))?;
        let checkpoint = Checkpoint::load(&path).map_err(fail)?;
        let model = checkpoint.model().map_err(fail)?;
        *out = Box::into_raw(Box::new(MoodseqModel { checkpoint, model }));
        Ok(())
    })
}

/// Releases a handle from [`moodseq_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must come from [`moodseq_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn moodseq_model_free(model: *mut MoodseqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn moodseq_model_info(model: *const MoodseqModel, out: *mut MoodseqModelInfo) -> MoodseqStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let spec = &m.checkpoint.meta.model;
        *out = MoodseqModelInfo {
            modality: match spec.kind.modality() {
                Modality::Audio => MoodseqModality::Audio,
                Modality::Text => MoodseqModality::Text,
                Modality::Both => MoodseqModality::Both,
            },
            timestep: spec.timestep,
            window: spec.window,
            features: AUDIO_FEATURES,
            vocab_rows: spec.vocab_rows,
            num_classes: MOODSEQ_NUM_CLASSES,
        };
        Ok(())
    })
}

/// Class probabilities for `batch` windows, written to `probs` as
/// `batch × 5` floats. `frames` holds `batch × timestep × 73` unstandardised
/// voiced-frame features (null for text models); `tokens` holds
/// `batch × window` vocabulary indices (null for audio models).
///
/// # Safety
/// Non-null buffers must have the lengths stated above.
#[no_mangle]
pub unsafe extern "C" fn moodseq_predict(
    model: *const MoodseqModel,
    frames: *const f32,
    tokens: *const u32,
    batch: usize,
    probs: *mut f32,
) -> MoodseqStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if probs.is_null() {
            return Err(null("probs"));
        }
        if batch == 0 {
            return Err((MoodseqStatus::InvalidArgument, "batch must be positive".into()));
        }
        let spec = &m.checkpoint.meta.model;
        let modality = spec.kind.modality();
        let audio = if modality != Modality::Text {
            if frames.is_null() {
                return Err(null("frames"));
            }
            let mut data = std::slice::from_raw_parts(frames, batch * spec.timestep * AUDIO_FEATURES).to_vec();
            if let Some(stats) = &m.checkpoint.meta.pipeline.stats {
                stats.apply(&mut data);
            }
            Some(Tensor::new([batch, spec.timestep, AUDIO_FEATURES], data).map_err(fail)?)
        } else {
            None
        };
        let ids = if modality != Modality::Audio {
            if tokens.is_null() {
                return Err(null("tokens"));
            }
            let ids: Vec<usize> = std::slice::from_raw_parts(tokens, batch * spec.window)
                .iter()
                .map(|&t| t as usize)
                .collect();
            if let Some(&bad) = ids.iter().find(|&&t| t >= spec.vocab_rows) {
                return Err((
                    MoodseqStatus::InvalidArgument,
                    format!("token index {bad} outside 0..{}", spec.vocab_rows),
                ));
            }
            Some(ids)
        } else {
            None
        };
        let input = ModelInput { audio, tokens: ids, batch };
        let prediction = m.model.predict(&input).map_err(fail)?;
        let out = std::slice::from_raw_parts_mut(probs, batch * MOODSEQ_NUM_CLASSES);
        for (row, p) in out.chunks_exact_mut(MOODSEQ_NUM_CLASSES).zip(&prediction.probs) {
            for (o, &v) in row.iter_mut().zip(p) {
                *o = v as f32;
            }
        }
        Ok(())
    })
}

/// Scores every window of one subject's files and votes. Either path may be
/// null when the model does not read that modality.
///
/// # Safety
/// Non-null paths must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn moodseq_predict_files(
    model: *const MoodseqModel,
    audio_path: *const c_char,
    transcript_path: *const c_char,
    seed: u64,
    out: *mut MoodseqVote,
) -> MoodseqStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let audio = path_arg(audio_path, "audio_path")?;
        let transcript = path_arg(transcript_path, "transcript_path")?;
        let pipeline = &m.checkpoint.meta.pipeline;
        let raw = pipeline
            .load_files("subject", audio.as_deref(), transcript.as_deref())
            .map_err(fail)?;
        let p = predict_raw(&m.model, pipeline, &raw, 32, seed).map_err(fail)?;
        let mut tally = [0u32; MOODSEQ_NUM_CLASSES];
        for (t, &v) in tally.iter_mut().zip(&p.vote.tally) {
            *t = v as u32;
        }
        *out = MoodseqVote {
            voted: p.vote.voted as u32,
            windows: p.vote.windows.len(),
            tally,
        };
        Ok(())
    })
}

/// Severity class (0 healthy … 4 severe) and binary view of a PHQ-8 score.
///
/// # Safety
/// `severity` and `significant` must be writable.
#[no_mangle]
pub unsafe extern "C" fn moodseq_phq_to_label(score: i32, severity: *mut u32, significant: *mut bool) -> MoodseqStatus {
    guard(|| {
        let severity = severity.as_mut().ok_or_else(|| null("severity"))?;
        let significant = significant.as_mut().ok_or_else(|| null("significant"))?;
        let (s, b) = phq_to_label(score as i64).map_err(fail)?;
        *severity = s.index() as u32;
        *significant = b == BinaryLabel::Significant;
        Ok(())
    })
}
