use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;
use std::sync::OnceLock;

use moodseq::cli::{cmd_gen_data, cmd_train, RunConfig};
use moodseq::data::{Corpus, Pipeline};
use moodseq_ffi::*;

struct Fixture {
    _dir: tempfile::TempDir,
    corpus: PathBuf,
    checkpoint: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        let mut cfg = RunConfig::default();
        cfg.seed = 3;
        cfg.out = corpus.clone();
        cfg.generator.train_per_class = [2; 5];
        cfg.generator.val_per_class = [1; 5];
        cfg.generator.test_per_class = [1; 5];
        cfg.generator.mean_seconds = 12.0;
        cfg.generator.std_seconds = 1.0;
        cfg.generator.min_seconds = 10.0;
        cmd_gen_data(&cfg).unwrap();

        cfg.corpus = Some(corpus.clone());
        cfg.out = dir.path().join("run");
        cfg.model = "fused_attn_fuse".into();
        cfg.window = 16;
        cfg.epochs = 1;
        cfg.samples_per_epoch = 64;
        cfg.val_samples = 32;
        cmd_train(&cfg).unwrap();
        Fixture {
            checkpoint: cfg.checkpoint_path(),
            corpus,
            _dir: dir,
        }
    })
}

fn cstring(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = moodseq_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(path: &Path) -> *mut MoodseqModel {
    let mut model = ptr::null_mut();
    let status = unsafe { moodseq_model_load(cstring(path).as_ptr(), &mut model) };
    assert_eq!(status, MoodseqStatus::Ok, "{}", last_error());
    assert!(!model.is_null());
    model
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(moodseq_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn missing_checkpoint_is_io_error() {
    let mut model = ptr::null_mut();
    let path = CString::new("/nonexistent/model.mseq").unwrap();
    let status = unsafe { moodseq_model_load(path.as_ptr(), &mut model) };
    assert_eq!(status, MoodseqStatus::Io);
    assert!(model.is_null());
    assert!(last_error().contains("/nonexistent/model.mseq"));
}

#[test]
fn garbage_checkpoint_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.mseq");
    std::fs::write(&path, b"not a checkpoint").unwrap();
    let mut model = ptr::null_mut();
    let status = unsafe { moodseq_model_load(cstring(&path).as_ptr(), &mut model) };
    assert_eq!(status, MoodseqStatus::Format);
    assert!(last_error().contains("magic"));
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        assert_eq!(moodseq_model_load(ptr::null(), &mut ptr::null_mut()), MoodseqStatus::NullPointer);
        let path = CString::new("x").unwrap();
        assert_eq!(moodseq_model_load(path.as_ptr(), ptr::null_mut()), MoodseqStatus::NullPointer);
        let mut info = std::mem::MaybeUninit::<MoodseqModelInfo>::uninit();
        assert_eq!(moodseq_model_info(ptr::null(), info.as_mut_ptr()), MoodseqStatus::NullPointer);
        moodseq_model_free(ptr::null_mut());
    }
}

#[test]
fn phq_labels() {
    let mut severity = 0u32;
    let mut significant = false;
    let expected = [(0, 0, false), (4, 0, false), (5, 1, false), (9, 1, false), (10, 2, false), (11, 2, true), (15, 3, true), (20, 4, true), (24, 4, true)];
    for (score, class, sig) in expected {
        let status = unsafe { moodseq_phq_to_label(score, &mut severity, &mut significant) };
        assert_eq!(status, MoodseqStatus::Ok);
        assert_eq!((severity, significant), (class, sig), "score {score}");
    }
    for bad in [-1, 25] {
        let status = unsafe { moodseq_phq_to_label(bad, &mut severity, &mut significant) };
        assert_eq!(status, MoodseqStatus::InvalidArgument);
    }
}

#[test]
fn info_and_window_prediction() {
    let f = fixture();
    let model = load(&f.checkpoint);
    let mut info = std::mem::MaybeUninit::<MoodseqModelInfo>::uninit();
    let info = unsafe {
        assert_eq!(moodseq_model_info(model, info.as_mut_ptr()), MoodseqStatus::Ok);
        info.assume_init()
    };
    assert_eq!(info.modality, MoodseqModality::Both);
    assert_eq!((info.timestep, info.window, info.features, info.num_classes), (16, 16, 73, 5));
    assert!(info.vocab_rows > 2);

    let batch = 3;
    let frames: Vec<f32> = (0..batch * info.timestep * info.features).map(|i| (i % 17) as f32 * 0.1).collect();
    let tokens: Vec<u32> = (0..batch * info.window).map(|i| (i % info.vocab_rows) as u32).collect();
    let mut probs = vec![0f32; batch * MOODSEQ_NUM_CLASSES];
    let status = unsafe { moodseq_predict(model, frames.as_ptr(), tokens.as_ptr(), batch, probs.as_mut_ptr()) };
    assert_eq!(status, MoodseqStatus::Ok, "{}", last_error());
    for row in probs.chunks(MOODSEQ_NUM_CLASSES) {
        let sum: f32 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-5, "{row:?}");
    }

    let mut bad = tokens.clone();
    bad[0] = info.vocab_rows as u32;
    let status = unsafe { moodseq_predict(model, frames.as_ptr(), bad.as_ptr(), batch, probs.as_mut_ptr()) };
    assert_eq!(status, MoodseqStatus::InvalidArgument);
    let status = unsafe { moodseq_predict(model, ptr::null(), tokens.as_ptr(), batch, probs.as_mut_ptr()) };
    assert_eq!(status, MoodseqStatus::NullPointer);
    let status = unsafe { moodseq_predict(model, frames.as_ptr(), tokens.as_ptr(), 0, probs.as_mut_ptr()) };
    assert_eq!(status, MoodseqStatus::InvalidArgument);
    unsafe { moodseq_model_free(model) };
}

#[test]
fn file_prediction_matches_library() {
    let f = fixture();
    let model = load(&f.checkpoint);
    let corpus = Corpus::open(&f.corpus).unwrap();
    let id = &corpus.subjects[0].id;
    let audio = Corpus::audio_path(&corpus.root, id);
    let transcript = Corpus::transcript_path(&corpus.root, id);
    let mut vote = MoodseqVote::default();
    let status = unsafe {
        moodseq_predict_files(model, cstring(&audio).as_ptr(), cstring(&transcript).as_ptr(), 5, &mut vote)
    };
    assert_eq!(status, MoodseqStatus::Ok, "{}", last_error());
    assert!(vote.windows > 0);
    assert_eq!(vote.tally.iter().sum::<u32>() as usize, vote.windows);
    assert_eq!(vote.tally.iter().copied().max(), Some(vote.tally[vote.voted as usize]));

    let checkpoint = moodseq::checkpoint::Checkpoint::load(&f.checkpoint).unwrap();
    let pipeline: &Pipeline = &checkpoint.meta.pipeline;
    let raw = pipeline.load_files("subject", Some(&audio), Some(&transcript)).unwrap();
    let expected = moodseq::cli::predict_raw(&checkpoint.model().unwrap(), pipeline, &raw, 32, 5).unwrap();
    assert_eq!(vote.voted as usize, expected.vote.voted);

    let status = unsafe { moodseq_predict_files(model, cstring(&audio).as_ptr(), ptr::null(), 5, &mut vote) };
    assert_ne!(status, MoodseqStatus::Ok);
    unsafe { moodseq_model_free(model) };
}
