//! Corpus layout, subject registry and the windowed datasets fed to training.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{self, CovarepOptions, FeatureStats, FEATURES};
use crate::error::{Error, Result};
use crate::eval::SubjectMeasures;
use crate::models::{phq_to_label, Modality, ModelInput, SeverityLabel};
use crate::tensor::{Real, Tensor};
use crate::text::{self, Normalizer, Vocabulary};
use crate::training::BatchSource;

pub const REGISTRY_FILE: &str = "registry.csv";
pub const AUDIO_DIR: &str = "audio";
pub const TRANSCRIPT_DIR: &str = "transcripts";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const REGISTRY_HEADER: &str = "subject_id,phq8,gender,partition";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Partition::Train),
            "val" | "dev" => Ok(Partition::Val),
            "test" => Ok(Partition::Test),
            other => Err(Error::config(format!("unknown partition {other:?} (expected train, val or test)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn name(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f" | "female" | "0" => Ok(Gender::Female),
            "m" | "male" | "1" => Ok(Gender::Male),
            other => Err(Error::config(format!("unknown gender {other:?}"))),
        }
    }
}

/// One participant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub phq8: i64,
    pub label: SeverityLabel,
    pub gender: Gender,
    pub partition: Partition,
}

impl SubjectRecord {
    pub fn new(id: impl Into<String>, phq8: i64, gender: Gender, partition: Partition) -> Result<Self> {
        Ok(SubjectRecord {
            id: id.into(),
            phq8,
            label: phq_to_label(phq8)?.0,
            gender,
            partition,
        })
    }
}

/// Reads `subject_id,phq8,gender,partition` rows (header required).
pub fn read_registry(path: &Path) -> Result<Vec<SubjectRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    let expected: Vec<&str> = REGISTRY_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::format(path, format!("expected header {REGISTRY_HEADER:?}")));
    }
    let mut out: Vec<SubjectRecord> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let line = record.position().map_or(row + 2, |p| p.line() as usize);
        if record.len() != 4 {
            return Err(Error::parse(path, line, format!("expected 4 fields, found {}", record.len())));
        }
        let bad = |field: &str, e: String| Error::parse(path, line, format!("{field}: {e}"));
        let phq8: i64 = record[1].parse().map_err(|e: std::num::ParseIntError| bad("phq8", e.to_string()))?;
        let gender: Gender = record[2].parse().map_err(|e: Error| bad("gender", e.to_string()))?;
        let partition: Partition = record[3].parse().map_err(|e: Error| bad("partition", e.to_string()))?;
        let subject = SubjectRecord::new(&record[0], phq8, gender, partition).map_err(|e| bad("phq8", e.to_string()))?;
        if out.iter().any(|s| s.id == subject.id) {
            return Err(Error::parse(path, line, format!("duplicate subject {}", subject.id)));
        }
        out.push(subject);
    }
    Ok(out)
}

pub fn format_registry(subjects: &[SubjectRecord]) -> String {
    let mut s = format!("{REGISTRY_HEADER}\n");
    for r in subjects {
        s.push_str(&format!("{},{},{},{}\n", r.id, r.phq8, r.gender.name(), r.partition));
    }
    s
}

/// A corpus directory: registry, `audio/<id>_COVAREP.csv`,
/// `transcripts/<id>_TRANSCRIPT.csv` and `embeddings.txt`.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub root: PathBuf,
    pub subjects: Vec<SubjectRecord>,
}

impl Corpus {
    pub fn open(root: &Path) -> Result<Self> {
        let registry = root.join(REGISTRY_FILE);
        if !registry.is_file() {
            return Err(Error::io(
                &registry,
                std::io::Error::new(std::io::ErrorKind::NotFound, "registry not found"),
            ));
        }
        Ok(Corpus {
            root: root.to_path_buf(),
            subjects: read_registry(&registry)?,
        })
    }

    pub fn audio_path(root: &Path, id: &str) -> PathBuf {
        root.join(AUDIO_DIR).join(format!("{id}_COVAREP.csv"))
    }

    pub fn transcript_path(root: &Path, id: &str) -> PathBuf {
        root.join(TRANSCRIPT_DIR).join(format!("{id}_TRANSCRIPT.csv"))
    }

    pub fn embeddings_path(&self) -> PathBuf {
        self.root.join(EMBEDDINGS_FILE)
    }

    pub fn partition(&self, p: Partition) -> Vec<&SubjectRecord> {
        self.subjects.iter().filter(|s| s.partition == p).collect()
    }

    pub fn subject(&self, id: &str) -> Result<&SubjectRecord> {
        self.subjects
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::config(format!("subject {id} is not in the registry")))
    }
}

/// File-format switches shared by loading and preprocessing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataOptions {
    pub covarep: CovarepOptions,
    pub transcript_header: bool,
    pub remove_stopwords: bool,
}

impl Default for DataOptions {
    fn default() -> Self {
        DataOptions {
            covarep: CovarepOptions::default(),
            transcript_header: true,
            remove_stopwords: true,
        }
    }
}

/// One subject's data before windowing.
#[derive(Clone, Debug)]
pub struct RawSubject {
    pub id: String,
    pub label: usize,
    /// Voiced frames, 73 values each, unstandardised.
    pub voiced: Option<Vec<f32>>,
    /// Normalised participant tokens.
    pub tokens: Option<Vec<String>>,
}

/// Loads the files each record needs for `modality`, in record order.
pub fn load_raw(
    root: &Path,
    records: &[&SubjectRecord],
    modality: Modality,
    opts: &DataOptions,
    normalizer: &Normalizer,
) -> Result<Vec<RawSubject>> {
    let audio = modality != Modality::Text;
    let text = modality != Modality::Audio;
    records
        .par_iter()
        .map(|r| {
            let voiced = if audio {
                let m = audio::load_covarep(&Corpus::audio_path(root, &r.id), &r.id, &opts.covarep)?;
                Some(m.voiced_stream())
            } else {
                None
            };
            let tokens = if text {
                let entries = text::load_transcript(&Corpus::transcript_path(root, &r.id), opts.transcript_header)?;
                Some(normalizer.participant_stream(&entries))
            } else {
                None
            };
            Ok(RawSubject {
                id: r.id.clone(),
                label: r.label.index(),
                voiced,
                tokens,
            })
        })
        .collect()
}

/// Duration and sentence lengths for every subject, for group statistics.
pub fn subject_measures(corpus: &Corpus, opts: &DataOptions) -> Result<Vec<SubjectMeasures>> {
    corpus
        .subjects
        .par_iter()
        .map(|r| {
            let m = audio::load_covarep(&Corpus::audio_path(&corpus.root, &r.id), &r.id, &opts.covarep)?;
            let entries = text::load_transcript(&Corpus::transcript_path(&corpus.root, &r.id), opts.transcript_header)?;
            Ok(SubjectMeasures {
                subject: r.id.clone(),
                phq8: r.phq8,
                duration_seconds: m.duration_seconds(),
                sentence_lengths: text::participant_utterances(&entries)
                    .iter()
                    .map(|u| u.split_whitespace().count())
                    .collect(),
            })
        })
        .collect()
}

/// Preprocessing fitted on the training partition: feature statistics and
/// vocabulary. Stored with checkpoints so evaluation reuses it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub modality: Modality,
    pub timestep: usize,
    pub window: usize,
    pub options: DataOptions,
    pub stats: Option<FeatureStats>,
    pub vocab: Option<Vocabulary>,
}

impl Pipeline {
    pub fn fit(modality: Modality, timestep: usize, window: usize, options: DataOptions, train: &[RawSubject]) -> Result<Self> {
        let stats = if modality != Modality::Text {
            Some(FeatureStats::fit(
                train.iter().filter_map(|s| s.voiced.as_deref()),
                FEATURES,
            )?)
        } else {
            None
        };
        let vocab = if modality != Modality::Audio {
            Some(Vocabulary::build(train.iter().filter_map(|s| s.tokens.as_ref()))?)
        } else {
            None
        };
        Ok(Pipeline {
            modality,
            timestep,
            window,
            options,
            stats,
            vocab,
        })
    }

    pub fn normalizer(&self) -> Normalizer {
        Normalizer::new(self.options.remove_stopwords)
    }

    /// Loads one subject from explicit files; each is required only when the
    /// modality reads it.
    pub fn load_files(&self, id: &str, audio_file: Option<&Path>, transcript_file: Option<&Path>) -> Result<RawSubject> {
        let voiced = if self.modality != Modality::Text {
            let path = audio_file.ok_or_else(|| Error::config("this model needs a COVAREP file"))?;
            Some(audio::load_covarep(path, id, &self.options.covarep)?.voiced_stream())
        } else {
            None
        };
        let tokens = if self.modality != Modality::Audio {
            let path = transcript_file.ok_or_else(|| Error::config("this model needs a transcript file"))?;
            let entries = text::load_transcript(path, self.options.transcript_header)?;
            Some(self.normalizer().participant_stream(&entries))
        } else {
            None
        };
        Ok(RawSubject {
            id: id.to_string(),
            label: 0,
            voiced,
            tokens,
        })
    }

    /// Frames and windows one subject.
    pub fn windows(&self, raw: &RawSubject) -> Result<SubjectWindows> {
        let audio = match (&self.stats, &raw.voiced) {
            (Some(stats), Some(voiced)) => {
                let usable = voiced.len() / (self.timestep * FEATURES) * self.timestep * FEATURES;
                let mut frames = voiced[..usable].to_vec();
                stats.apply(&mut frames);
                frames
            }
            (Some(_), None) => return Err(Error::usage(format!("subject {} was loaded without audio", raw.id))),
            _ => Vec::new(),
        };
        let windows = match (&self.vocab, &raw.tokens) {
            (Some(vocab), Some(tokens)) => text::window_tokens(&vocab.encode(tokens), self.window)?,
            (Some(_), None) => return Err(Error::usage(format!("subject {} was loaded without text", raw.id))),
            _ => Vec::new(),
        };
        Ok(SubjectWindows {
            subject: raw.id.clone(),
            label: raw.label,
            audio,
            text: windows,
        })
    }

    pub fn window_set(&self, raws: &[RawSubject]) -> Result<WindowSet> {
        let subjects = raws.par_iter().map(|r| self.windows(r)).collect::<Result<Vec<_>>>()?;
        WindowSet::new(self.modality, self.timestep, self.window, subjects)
    }
}

/// All windows of one subject.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectWindows {
    pub subject: String,
    pub label: usize,
    /// Standardised audio windows, `timestep × 73` values each.
    pub audio: Vec<f32>,
    pub text: Vec<Vec<usize>>,
}

impl SubjectWindows {
    pub fn audio_windows(&self, timestep: usize) -> usize {
        self.audio.len() / (timestep * FEATURES)
    }
}

/// A windowed dataset. Audio and text sets have one sample per window; fused
/// sets have one per audio window, each paired with a text window of the same
/// subject drawn uniformly at batch time.
#[derive(Clone, Debug)]
pub struct WindowSet {
    pub modality: Modality,
    pub timestep: usize,
    pub window: usize,
    subjects: Vec<SubjectWindows>,
    samples: Vec<(usize, usize)>,
}

impl WindowSet {
    pub fn new(modality: Modality, timestep: usize, window: usize, subjects: Vec<SubjectWindows>) -> Result<Self> {
        if timestep == 0 || window == 0 {
            return Err(Error::config("timestep and window must be positive"));
        }
        let mut kept = Vec::with_capacity(subjects.len());
        for s in subjects {
            let n_audio = s.audio_windows(timestep);
            let n_text = s.text.len();
            let usable = match modality {
                Modality::Audio => n_audio > 0,
                Modality::Text => n_text > 0,
                Modality::Both => n_audio > 0 && n_text > 0,
            };
            if usable {
                kept.push(s);
            } else {
                warn!("subject {} has no usable windows and is skipped", s.subject);
            }
        }
        let samples = kept
            .iter()
            .enumerate()
            .flat_map(|(si, s)| {
                let n = match modality {
                    Modality::Text => s.text.len(),
                    _ => s.audio_windows(timestep),
                };
                (0..n).map(move |w| (si, w))
            })
            .collect();
        Ok(WindowSet {
            modality,
            timestep,
            window,
            subjects: kept,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subjects(&self) -> &[SubjectWindows] {
        &self.subjects
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|&(s, _)| self.subjects[s].label).collect()
    }

    /// Subject id of every sample.
    pub fn sample_subjects(&self) -> Vec<String> {
        self.samples.iter().map(|&(s, _)| self.subjects[s].subject.clone()).collect()
    }

    /// Keeps at most `max` randomly chosen samples per subject, in order.
    pub fn cap_per_subject(&self, max: usize, seed: u64) -> WindowSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::new();
        let mut start = 0;
        while start < self.samples.len() {
            let subject = self.samples[start].0;
            let end = start + self.samples[start..].iter().take_while(|s| s.0 == subject).count();
            let n = end - start;
            if n <= max {
                samples.extend_from_slice(&self.samples[start..end]);
            } else {
                let mut picked = sample(&mut rng, n, max).into_vec();
                picked.sort_unstable();
                samples.extend(picked.into_iter().map(|i| self.samples[start + i]));
            }
            start = end;
        }
        WindowSet {
            samples,
            ..self.clone()
        }
    }

    fn audio_slice(&self, subject: usize, w: usize) -> &[f32] {
        let len = self.timestep * FEATURES;
        &self.subjects[subject].audio[w * len..(w + 1) * len]
    }
}

impl<T: Real> BatchSource<T> for WindowSet {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn label(&self, index: usize) -> usize {
        self.subjects[self.samples[index].0].label
    }

    fn batch(&self, indices: &[usize], rng: &mut ChaCha8Rng) -> Result<ModelInput<T>> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.samples.len()) {
            return Err(Error::OutOfRange {
                what: "sample index",
                value: bad as i64,
                valid: format!("0..{}", self.samples.len()),
            });
        }
        let b = indices.len();
        let audio = || {
            let mut data = Vec::with_capacity(b * self.timestep * FEATURES);
            for &i in indices {
                let (s, w) = self.samples[i];
                data.extend(self.audio_slice(s, w).iter().map(|&x| T::from_f32(x)));
            }
            Tensor::new([b, self.timestep, FEATURES], data)
        };
        match self.modality {
            Modality::Audio => Ok(ModelInput::audio(audio()?)),
            Modality::Text => {
                let mut tokens = Vec::with_capacity(b * self.window);
                for &i in indices {
                    let (s, w) = self.samples[i];
                    tokens.extend_from_slice(&self.subjects[s].text[w]);
                }
                Ok(ModelInput::text(tokens, b))
            }
            Modality::Both => {
                let mut tokens = Vec::with_capacity(b * self.window);
                for &i in indices {
                    let s = &self.subjects[self.samples[i].0];
                    tokens.extend_from_slice(&s.text[rng.random_range(0..s.text.len())]);
                }
                Ok(ModelInput::paired(audio()?, tokens))
            }
        }
    }
}
