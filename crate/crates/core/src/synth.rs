//! Deterministic generator for a synthetic corpus in the DAIC-WOZ file
//! layout: COVAREP feature CSVs, tab-separated transcripts, a 100-d
//! embedding file and a subject registry, with class-dependent signal.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::audio::{CovarepMatrix, COVAREP_COLUMNS, DEFAULT_VUV_COLUMN, FEATURES, FRAME_SECONDS};
use crate::data::{self, Corpus, Gender, Partition, SubjectRecord};
use crate::error::{Error, Result};
use crate::eval::Group;
use crate::models::NUM_CLASSES;
use crate::text::{self, Normalizer, EMBEDDING_DIM};

/// Feature indices (after dropping the VUV column) that carry class signal.
pub const SIGNAL_FEATURES: [usize; 8] = [0, 1, 4, 8, 13, 19, 26, 34];

/// Subject ids start here, as in DAIC-WOZ.
pub const FIRST_SUBJECT_ID: usize = 300;

pub const TRANSCRIPT_HEADER: &str = "start_time\tstop_time\tspeaker\tvalue";

/// Class signal confined to short bursts of consecutive frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurstConfig {
    /// Frames per burst.
    pub length: usize,
    /// Probability that a burst starts at a frame outside a burst.
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub train_per_class: [usize; NUM_CLASSES],
    pub val_per_class: [usize; NUM_CLASSES],
    pub test_per_class: [usize; NUM_CLASSES],
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
    /// Probability that a frame is voiced.
    pub voiced_rate: f64,
    pub vuv_column: usize,
    /// Per-class mean shift on the signal features, in noise units.
    pub audio_shift: f64,
    /// AR(1) coefficient of the frame noise.
    pub ar_coefficient: f64,
    /// Standard deviation of per-subject offsets on the signal features.
    pub subject_jitter: f64,
    pub burst: Option<BurstConfig>,
    /// Participant utterances per transcript.
    pub utterances: usize,
    pub sentence_mean_words: f64,
    pub sentence_std_words: f64,
    /// Sentence-length multiplier for subjects with PHQ-8 > 10.
    pub experiment_length_factor: f64,
    /// Probability that a content word is a marker of the subject's class.
    pub marker_rate: f64,
    /// Probability that a content word is a marker of a neighbouring class.
    pub confusion_rate: f64,
    /// Probability that a word is a stopword.
    pub stopword_rate: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 7,
            train_per_class: [22, 22, 21, 21, 21],
            val_per_class: [7; NUM_CLASSES],
            test_per_class: [10, 10, 9, 9, 9],
            mean_seconds: 30.0,
            std_seconds: 8.0,
            min_seconds: 10.0,
            max_seconds: 60.0,
            voiced_rate: 0.7,
            vuv_column: DEFAULT_VUV_COLUMN,
            audio_shift: 1.0,
            ar_coefficient: 0.7,
            subject_jitter: 0.2,
            burst: None,
            utterances: 30,
            sentence_mean_words: 9.0,
            sentence_std_words: 3.0,
            experiment_length_factor: 0.8,
            marker_rate: 0.14,
            confusion_rate: 0.04,
            stopword_rate: 0.3,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, counts) in [
            ("train", &self.train_per_class),
            ("val", &self.val_per_class),
            ("test", &self.test_per_class),
        ] {
            if counts.contains(&0) {
                return Err(Error::config(format!("every class needs a {name} subject")));
            }
        }
        if self.vuv_column >= COVAREP_COLUMNS {
            return Err(Error::config(format!("VUV column {} outside 0..{COVAREP_COLUMNS}", self.vuv_column)));
        }
        let probs = [
            ("voiced_rate", self.voiced_rate),
            ("marker_rate", self.marker_rate),
            ("confusion_rate", self.confusion_rate),
            ("stopword_rate", self.stopword_rate),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.marker_rate + self.confusion_rate > 1.0 {
            return Err(Error::config("marker_rate + confusion_rate exceeds 1"));
        }
        if !(0.0..1.0).contains(&self.ar_coefficient.abs()) {
            return Err(Error::config("ar_coefficient must satisfy |phi| < 1"));
        }
        if self.min_seconds <= 0.0 || self.min_seconds > self.max_seconds {
            return Err(Error::config("need 0 < min_seconds <= max_seconds"));
        }
        if self.utterances == 0 || self.sentence_mean_words < 1.0 || self.experiment_length_factor <= 0.0 {
            return Err(Error::config("utterances, sentence_mean_words and experiment_length_factor must be positive"));
        }
        if let Some(b) = self.burst {
            if b.length == 0 || !(0.0..=1.0).contains(&b.rate) {
                return Err(Error::config("burst length must be positive and rate in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn subjects(&self) -> usize {
        [self.train_per_class, self.val_per_class, self.test_per_class]
            .iter()
            .flatten()
            .sum()
    }
}

/// Sign pattern of class `c` on the signal features: rows 1..=5 of the
/// order-8 Sylvester Hadamard matrix, pairwise differing in 4 positions.
pub fn class_code(c: usize) -> [f64; 8] {
    let row = c + 1;
    std::array::from_fn(|j| if (row & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
}

const PHQ_BINS: [(i64, i64); NUM_CLASSES] = [(0, 4), (5, 9), (10, 14), (15, 19), (20, 24)];

/// Subject registry for `cfg`: ids are shuffled across classes and partitions.
pub fn plan_subjects(cfg: &GeneratorConfig) -> Result<Vec<SubjectRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cells = Vec::new();
    for (partition, counts) in [
        (Partition::Train, cfg.train_per_class),
        (Partition::Val, cfg.val_per_class),
        (Partition::Test, cfg.test_per_class),
    ] {
        for (class, &n) in counts.iter().enumerate() {
            cells.extend(std::iter::repeat_n((partition, class), n));
        }
    }
    cells.shuffle(&mut rng);
    cells
        .into_iter()
        .enumerate()
        .map(|(i, (partition, class))| {
            let (lo, hi) = PHQ_BINS[class];
            let gender = if rng.random_bool(0.5) { Gender::Female } else { Gender::Male };
            SubjectRecord::new((FIRST_SUBJECT_ID + i).to_string(), rng.random_range(lo..=hi), gender, partition)
        })
        .collect()
}

/// Recording lengths in frames, one per subject. Within each PHQ group the
/// lengths are normal quantiles in shuffled order, so both groups share the
/// same duration distribution.
pub fn plan_durations(cfg: &GeneratorConfig, subjects: &[SubjectRecord]) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let normal = StdNormal::new(0.0, 1.0).expect("standard normal");
    let mut frames = vec![0; subjects.len()];
    for group in [Group::Control, Group::Experiment] {
        let mut members: Vec<usize> = (0..subjects.len()).filter(|&i| Group::of(subjects[i].phq8) == group).collect();
        members.shuffle(&mut rng);
        let n = members.len();
        for (rank, &i) in members.iter().enumerate() {
            let z = normal.inverse_cdf((rank as f64 + 0.5) / n as f64);
            let secs = (cfg.mean_seconds + cfg.std_seconds * z).clamp(cfg.min_seconds, cfg.max_seconds);
            frames[i] = (secs / FRAME_SECONDS).round() as usize;
        }
    }
    frames
}

/// Per-column location and scale shared by every recording; scales span
/// several orders of magnitude like real COVAREP features.
fn column_scales(seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    (0..FEATURES)
        .map(|_| {
            let scale = 10f64.powf(rng.random_range(-1.0..1.5));
            (scale * rng.random_range(-2.0..2.0), scale)
        })
        .collect()
}

fn subject_rng(seed: u64, index: usize, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    rng.set_stream(16 + lane);
    rng
}

fn quantize(x: f64, digits: i32) -> f32 {
    let p = 10f64.powi(digits);
    ((x * p).round() / p) as f32
}

/// One subject's COVAREP matrix.
pub fn subject_audio(cfg: &GeneratorConfig, index: usize, subject: &SubjectRecord, frames: usize) -> Result<CovarepMatrix> {
    let mut rng = subject_rng(cfg.seed, index, 0);
    let scales = column_scales(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let class = subject.label.index();
    let code = class_code(class);
    let mut offset = [0.0f64; FEATURES];
    for &f in &SIGNAL_FEATURES {
        offset[f] = cfg.subject_jitter * std_normal.sample(&mut rng);
    }
    let phi = cfg.ar_coefficient;
    let innovation = (1.0 - phi * phi).sqrt();
    let mut state: Vec<f64> = (0..FEATURES).map(|_| std_normal.sample(&mut rng)).collect();
    let mut burst_left = 0usize;
    let mut data = Vec::with_capacity(frames * COVAREP_COLUMNS);
    for _ in 0..frames {
        let active = match cfg.burst {
            None => true,
            Some(b) => {
                if burst_left == 0 && rng.random_bool(b.rate) {
                    burst_left = b.length;
                }
                let on = burst_left > 0;
                burst_left = burst_left.saturating_sub(1);
                on
            }
        };
        for s in state.iter_mut() {
            *s = phi * *s + innovation * std_normal.sample(&mut rng);
        }
        let voiced = rng.random_bool(cfg.voiced_rate);
        let mut feature = 0;
        for col in 0..COVAREP_COLUMNS {
            if col == cfg.vuv_column {
                data.push(if voiced { 1.0 } else { 0.0 });
                continue;
            }
            let mut z = state[feature] + offset[feature];
            if let Some(k) = SIGNAL_FEATURES.iter().position(|&f| f == feature) {
                if active {
                    z += cfg.audio_shift * code[k];
                }
            }
            let (mu, sd) = scales[feature];
            data.push(quantize(mu + sd * z, 4));
            feature += 1;
        }
    }
    CovarepMatrix::new(subject.id.clone(), cfg.vuv_column, data)
}

/// COVAREP CSV text, one frame per line, values in shortest round-trip form.
pub fn format_covarep(m: &CovarepMatrix) -> String {
    let mut s = String::with_capacity(m.data().len() * 9);
    for i in 0..m.frames() {
        for (j, v) in m.frame(i).iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

const NEUTRAL_WORDS: &[&str] = &[
    "weather", "house", "garden", "coffee", "music", "movie", "city", "travel", "friend", "family", "job", "work",
    "school", "book", "dinner", "car", "park", "dog", "cat", "beach", "food", "game", "phone", "computer", "weekend",
    "summer", "winter", "trip", "story", "idea", "plan", "kitchen", "road", "river", "mountain", "sister", "brother",
    "mother", "father", "daughter", "son", "office", "boss", "money", "rent", "bus", "train", "street", "church",
    "college", "army", "doctor", "nurse", "hospital", "television", "radio", "guitar", "piano", "paint", "picture",
    "camera", "holiday", "birthday", "party", "wedding", "lunch", "breakfast", "sandwich", "pizza", "chicken", "fish",
    "garage", "yard", "neighbor", "town", "country", "ocean", "lake", "forest", "hike", "bike", "soccer", "football",
    "baseball", "team", "coach", "class", "teacher", "student", "project", "computer", "software", "engineer",
    "manager", "customer", "store", "market", "shop", "price", "bill", "insurance", "apartment", "room", "bed",
    "couch", "window", "door", "table", "chair", "clock", "hour", "minute", "week", "month", "year", "today",
    "tomorrow", "yesterday", "tonight", "moment", "memory", "advice", "question", "answer", "problem", "reason",
    "change", "choice", "career", "degree", "language", "culture", "history", "science", "art", "drawing", "poem",
    "letter", "email", "message", "photo", "video", "internet", "website", "news", "paper", "magazine", "cousin",
    "uncle", "aunt", "grandmother", "grandfather", "husband", "wife", "partner", "baby", "kid", "puppy", "horse",
];

const MARKER_WORDS: [&[&str]; NUM_CLASSES] = [
    &[
        "great", "happy", "energetic", "calm", "cheerful", "optimistic", "confident", "grateful", "joyful", "content",
    ],
    &[
        "okay", "busy", "restless", "uneasy", "bored", "distracted", "moody", "irritable", "fidgety", "meh",
    ],
    &[
        "sad", "lonely", "worried", "anxious", "tearful", "gloomy", "withdrawn", "blue", "heavy", "unmotivated",
    ],
    &[
        "hopeless", "empty", "exhausted", "numb", "worthless", "guilty", "helpless", "insomnia", "drained", "sluggish",
    ],
    &[
        "suicidal", "despair", "unbearable", "miserable", "trapped", "agony", "broken", "dread", "anguish", "torment",
    ],
];

/// Single-token stopword forms used to pad sentences.
const FILLER_STOPWORDS: &[&str] = &[
    "i", "the", "a", "and", "to", "of", "it", "that", "was", "my", "in", "is", "just", "so", "but", "for", "with",
    "about", "very", "really", "i'm", "don't", "it's", "we", "they", "me", "at", "on", "when", "there",
];

const ELLIE_PROMPTS: &[&str] = &[
    "hi i'm ellie thanks for coming in today",
    "how are you doing today",
    "where are you from originally",
    "what do you do to relax",
    "how easy is it for you to get a good night's sleep",
    "how have you been feeling lately",
    "tell me about your last vacation",
    "what are you most proud of in your life",
    "can you tell me more about that",
    "how do you cope with stress",
    "when was the last time you felt really happy",
    "what advice would you give yourself ten years ago",
];

/// Word lists after dropping anything the normaliser would alter.
#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    pub neutral: Vec<&'static str>,
    pub markers: [Vec<&'static str>; NUM_CLASSES],
}

impl Lexicon {
    pub fn new() -> Self {
        let norm = Normalizer::new(true);
        let keep = |w: &&str| norm.normalize(w) == [w.to_string()];
        let mut neutral: Vec<&'static str> = NEUTRAL_WORDS.iter().copied().filter(keep).collect();
        neutral.sort_unstable();
        neutral.dedup();
        let markers = std::array::from_fn(|c| MARKER_WORDS[c].iter().copied().filter(keep).collect());
        Lexicon { neutral, markers }
    }

    /// Every normalised token the generator can emit, with either stopword
    /// setting, in a fixed order.
    pub fn vocabulary(&self) -> Vec<String> {
        let keep_all = Normalizer::new(false);
        let mut words: Vec<String> = self.neutral.iter().map(|w| w.to_string()).collect();
        for m in &self.markers {
            words.extend(m.iter().map(|w| w.to_string()));
        }
        for w in FILLER_STOPWORDS.iter().chain(ELLIE_PROMPTS) {
            words.extend(keep_all.normalize(w));
        }
        let mut seen = std::collections::HashSet::new();
        words.retain(|w| seen.insert(w.clone()));
        words
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::new()
    }
}

fn sentence_length(cfg: &GeneratorConfig, experiment: bool, rng: &mut ChaCha8Rng) -> usize {
    let factor = if experiment { cfg.experiment_length_factor } else { 1.0 };
    let normal = Normal::new(cfg.sentence_mean_words * factor, cfg.sentence_std_words * factor).expect("length distribution");
    (normal.sample(rng).round() as i64).max(1) as usize
}

/// One subject's transcript, tab-separated with a header row.
pub fn subject_transcript(cfg: &GeneratorConfig, lexicon: &Lexicon, index: usize, subject: &SubjectRecord) -> String {
    let mut rng = subject_rng(cfg.seed, index, 1);
    let class = subject.label.index();
    let experiment = Group::of(subject.phq8) == Group::Experiment;
    let neighbours: Vec<usize> = [class.wrapping_sub(1), class + 1]
        .into_iter()
        .filter(|&c| c < NUM_CLASSES)
        .collect();
    let mut out = format!("{TRANSCRIPT_HEADER}\n");
    let mut t = rng.random_range(1.0..5.0);
    for turn in 0..cfg.utterances {
        let prompt = ELLIE_PROMPTS[if turn == 0 { 0 } else { rng.random_range(1..ELLIE_PROMPTS.len()) }];
        let dur = 1.5 + 0.25 * prompt.split_whitespace().count() as f64;
        let _ = writeln!(out, "{t:.3}\t{:.3}\tEllie\t{prompt}", t + dur);
        t += dur + rng.random_range(0.3..1.5);
        let n = sentence_length(cfg, experiment, &mut rng);
        let mut words = Vec::with_capacity(n);
        for _ in 0..n {
            let w = if rng.random_bool(cfg.stopword_rate) {
                FILLER_STOPWORDS[rng.random_range(0..FILLER_STOPWORDS.len())]
            } else {
                let u: f64 = rng.random();
                let pool: &[&str] = if u < cfg.marker_rate {
                    &lexicon.markers[class]
                } else if u < cfg.marker_rate + cfg.confusion_rate {
                    &lexicon.markers[neighbours[rng.random_range(0..neighbours.len())]]
                } else {
                    &lexicon.neutral
                };
                pool[rng.random_range(0..pool.len())]
            };
            words.push(w);
        }
        let dur = 0.4 * n as f64 + rng.random_range(0.2..1.0);
        let _ = writeln!(out, "{t:.3}\t{:.3}\tParticipant\t{}", t + dur, words.join(" "));
        t += dur + rng.random_range(0.3..1.5);
    }
    out
}

/// 100-d vectors for the lexicon: markers cluster around a per-class
/// centroid, everything else is spread around the origin.
pub fn embedding_vectors(cfg: &GeneratorConfig, lexicon: &Lexicon) -> Vec<(String, Vec<f32>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut draw = |scale: f64, center: Option<&[f64]>| -> Vec<f32> {
        (0..EMBEDDING_DIM)
            .map(|d| quantize(center.map_or(0.0, |c| c[d]) + scale * normal.sample(&mut rng), 5))
            .collect()
    };
    let centroids: Vec<Vec<f64>> = (0..NUM_CLASSES)
        .map(|_| draw(0.6, None).iter().map(|&x| x as f64).collect())
        .collect();
    let mut out = Vec::new();
    for (c, words) in lexicon.markers.iter().enumerate() {
        for w in words {
            out.push((w.to_string(), draw(0.25, Some(&centroids[c]))));
        }
    }
    for w in lexicon.vocabulary() {
        if !out.iter().any(|(x, _)| *x == w) {
            out.push((w, draw(0.4, None)));
        }
    }
    out
}

/// What [`generate`] wrote.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedCorpus {
    pub subjects: Vec<SubjectRecord>,
    pub frames: Vec<usize>,
    pub embedding_words: usize,
}

/// Writes the corpus under `out`, creating `audio/` and `transcripts/`.
pub fn generate(cfg: &GeneratorConfig, out: &Path) -> Result<GeneratedCorpus> {
    let subjects = plan_subjects(cfg)?;
    let frames = plan_durations(cfg, &subjects);
    let lexicon = Lexicon::new();
    for dir in [out.to_path_buf(), out.join(data::AUDIO_DIR), out.join(data::TRANSCRIPT_DIR)] {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    subjects
        .par_iter()
        .enumerate()
        .try_for_each(|(i, s)| -> Result<()> {
            let m = subject_audio(cfg, i, s, frames[i])?;
            write(&Corpus::audio_path(out, &s.id), &format_covarep(&m))?;
            write(&Corpus::transcript_path(out, &s.id), &subject_transcript(cfg, &lexicon, i, s))
        })?;
    let vectors = embedding_vectors(cfg, &lexicon);
    write(&out.join(data::EMBEDDINGS_FILE), &text::format_embeddings(&vectors))?;
    write(&out.join(data::REGISTRY_FILE), &data::format_registry(&subjects))?;
    Ok(GeneratedCorpus {
        subjects,
        frames,
        embedding_words: vectors.len(),
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
