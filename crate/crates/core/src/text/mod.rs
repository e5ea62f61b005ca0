//! Transcripts: parsing, normalisation, vocabulary, sliding windows and
//! pretrained embeddings.

mod lexicon;

pub use lexicon::{CONTRACTIONS, LEMMA_EXCEPTIONS, STOPWORDS};

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const EMBEDDING_DIM: usize = 100;
pub const UNK_TOKEN: &str = "[UNK]";
pub const PAD_INDEX: usize = 0;
/// Window sizes the text models accept.
pub const WINDOW_SIZES: [usize; 4] = [16, 32, 64, 128];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    Ellie,
    Participant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptEntry {
    pub start_time: f64,
    pub stop_time: f64,
    pub speaker: Speaker,
    pub utterance: String,
}

pub fn load_transcript(path: &Path, has_header: bool) -> Result<Vec<TranscriptEntry>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_transcript(file, path, has_header)
}

/// Parses tab-separated `start stop speaker utterance` rows.
pub fn parse_transcript<R: Read>(reader: R, path: &Path, has_header: bool) -> Result<Vec<TranscriptEntry>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if (has_header && i == 0) || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let time = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|t| t.is_finite())
                .ok_or_else(|| Error::parse(path, line_no, format!("{what} is not a number: {s:?}")))
        };
        let start_time = time(fields[0], "start time")?;
        let stop_time = time(fields[1], "stop time")?;
        if start_time > stop_time {
            return Err(Error::parse(path, line_no, "start time after stop time"));
        }
        let speaker = match fields[2].trim().to_lowercase().as_str() {
            "ellie" => Speaker::Ellie,
            "participant" => Speaker::Participant,
            other => return Err(Error::parse(path, line_no, format!("unknown speaker {other:?}"))),
        };
        out.push(TranscriptEntry {
            start_time,
            stop_time,
            speaker,
            utterance: fields[3].to_string(),
        });
    }
    Ok(out)
}

/// Participant utterances in file order.
pub fn participant_utterances(entries: &[TranscriptEntry]) -> Vec<&str> {
    entries
        .iter()
        .filter(|e| e.speaker == Speaker::Participant)
        .map(|e| e.utterance.as_str())
        .collect()
}

/// Lowercasing, contraction expansion, punctuation stripping, optional
/// stopword removal and suffix-rule lemmatisation.
#[derive(Clone, Debug)]
pub struct Normalizer {
    pub remove_stopwords: bool,
    stopwords: HashSet<String>,
    contractions: HashMap<String, String>,
    exceptions: HashMap<String, String>,
}

impl Normalizer {
    pub fn new(remove_stopwords: bool) -> Self {
        Normalizer {
            remove_stopwords,
            stopwords: STOPWORDS.iter().map(|w| w.replace('\'', "")).collect(),
            contractions: CONTRACTIONS.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            exceptions: LEMMA_EXCEPTIONS.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        }
    }

    /// Replaces the stopword list with one word per line.
    pub fn load_stopwords(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.stopwords = text
            .lines()
            .map(|l| l.trim().to_lowercase().replace('\'', ""))
            .filter(|l| !l.is_empty())
            .collect();
        Ok(())
    }

    /// Replaces the lemma exceptions with `form lemma` lines.
    pub fn load_lemma_exceptions(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(Error::parse(path, i + 1, "expected `form lemma`"));
            }
            map.insert(parts[0].to_lowercase(), parts[1].to_lowercase());
        }
        self.exceptions = map;
        Ok(())
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    /// Surface tokens after case folding, contraction expansion and
    /// punctuation stripping.
    pub fn surface_tokens(&self, text: &str) -> Vec<String> {
        let lowered = text.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'");
        let mut out = Vec::new();
        for raw in lowered.split_whitespace() {
            let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
            let expanded = self.contractions.get(trimmed).map_or(trimmed, String::as_str);
            let cleaned: String = expanded
                .chars()
                .filter(|&c| c != '\'')
                .map(|c| if c.is_alphanumeric() { c } else { ' ' })
                .collect();
            out.extend(cleaned.split_whitespace().map(str::to_string));
        }
        out
    }

    /// Base form of a single cleaned token, iterated to a fixed point.
    pub fn lemma(&self, word: &str) -> String {
        let mut w = word.to_string();
        for _ in 0..8 {
            let next = self.lemma_step(&w);
            if next == w {
                break;
            }
            w = next;
        }
        w
    }

    fn lemma_step(&self, w: &str) -> String {
        if let Some(l) = self.exceptions.get(w) {
            return l.clone();
        }
        let n = w.len();
        if !w.is_ascii() {
            return w.to_string();
        }
        if n >= 5 && w.ends_with("ies") {
            return format!("{}y", &w[..n - 3]);
        }
        for suffix in ["sses", "ches", "shes", "xes", "zes"] {
            if n > suffix.len() + 1 && w.ends_with(suffix) {
                return w[..n - 2].to_string();
            }
        }
        if n >= 4 && w.ends_with('s') && !["ss", "us", "is"].iter().any(|s| w.ends_with(s)) {
            return w[..n - 1].to_string();
        }
        for suffix in ["ing", "ed"] {
            if w.ends_with(suffix) {
                let stem = &w[..n - suffix.len()];
                if stem.len() >= 3 && has_vowel(stem) && !stem.ends_with('e') {
                    return restore_stem(stem);
                }
            }
        }
        w.to_string()
    }

    pub fn normalize(&self, text: &str) -> Vec<String> {
        let keep = |w: &str| !(self.remove_stopwords && self.is_stopword(w));
        self.surface_tokens(text)
            .into_iter()
            .filter(|w| keep(w))
            .map(|w| self.lemma(&w))
            .filter(|w| keep(w))
            .collect()
    }

    /// Normalised tokens of every participant utterance, concatenated.
    pub fn participant_stream(&self, entries: &[TranscriptEntry]) -> Vec<String> {
        participant_utterances(entries)
            .into_iter()
            .flat_map(|u| self.normalize(u))
            .collect()
    }
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn has_vowel(s: &str) -> bool {
    s.bytes().any(|c| is_vowel(c) || c == b'y')
}

/// Undoes consonant doubling (`runn` → `run`) or restores a silent `e` on
/// short consonant-vowel-consonant stems (`hop` → `hope`).
fn restore_stem(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    let last = b[n - 1];
    if n >= 2 && last == b[n - 2] && !is_vowel(last) && !matches!(last, b'l' | b's' | b'z') {
        return stem[..n - 1].to_string();
    }
    if n == 3 && !is_vowel(b[0]) && is_vowel(b[1]) && !is_vowel(last) && !matches!(last, b'w' | b'x' | b'y') {
        return format!("{stem}e");
    }
    stem.to_string()
}

/// Word ↔ index map. Index 0 pads, words take `1..=n` by descending
/// frequency (ties alphabetical) and `[UNK]` is `n + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        Vocabulary::from_words(words)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    pub fn build<'a, S, I>(streams: S) -> Result<Self>
    where
        S: IntoIterator<Item = I>,
        I: IntoIterator<Item = &'a String>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for stream in streams {
            for w in stream {
                *counts.entry(w.as_str()).or_default() += 1;
            }
        }
        counts.remove(UNK_TOKEN);
        if counts.is_empty() {
            return Err(Error::usage("cannot build a vocabulary from an empty corpus"));
        }
        let mut entries: Vec<(&str, usize)> = counts.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Ok(Self::from_words(entries.into_iter().map(|(w, _)| w.to_string()).collect()))
    }

    /// Rebuilds from words in index order (index 1 first).
    pub fn from_words(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i + 1)).collect();
        Vocabulary { words, index }
    }

    /// Number of indexed entries including `[UNK]`.
    pub fn len(&self) -> usize {
        self.words.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn unk(&self) -> usize {
        self.words.len() + 1
    }

    /// Rows needed by an embedding table: padding + words + `[UNK]`.
    pub fn table_rows(&self) -> usize {
        self.len() + 1
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(self.unk())
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        match index {
            0 => None,
            i if i == self.unk() => Some(UNK_TOKEN),
            i => self.words.get(i - 1).map(String::as_str),
        }
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_of(t)).collect()
    }

    /// Stable FNV-1a digest of the word list.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for w in &self.words {
            for b in w.bytes().chain(std::iter::once(b'\n')) {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

/// Number of tokens shared by neighbouring windows.
pub fn window_overlap(window: usize) -> usize {
    window / 5
}

pub fn window_stride(window: usize) -> usize {
    window - window_overlap(window)
}

/// Slides a window over `tokens` with 20% overlap. A final partial window is
/// zero-padded if it holds at least a fifth of `window` tokens, otherwise
/// dropped.
pub fn window_tokens(tokens: &[usize], window: usize) -> Result<Vec<Vec<usize>>> {
    if window < 5 {
        return Err(Error::config(format!("window size must be at least 5, got {window}")));
    }
    let stride = window_stride(window);
    let mut out = Vec::new();
    let mut start = 0;
    while start < tokens.len() {
        let end = (start + window).min(tokens.len());
        let len = end - start;
        if len == window || 5 * len >= window {
            let mut w = tokens[start..end].to_vec();
            w.resize(window, PAD_INDEX);
            out.push(w);
        }
        if end == tokens.len() {
            break;
        }
        start += stride;
    }
    Ok(out)
}

/// Frozen `(vocab + 1) × 100` table aligned to a vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub table: Tensor<f32>,
    /// Fraction of vocabulary words (excluding `[UNK]`) found in the file.
    pub coverage: f64,
}

/// Reads `token v1 … v100` lines.
pub fn read_embedding_file(path: &Path) -> Result<Vec<(String, Vec<f32>)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("nonempty line").to_string();
        let values = parts
            .map(|p| p.parse::<f32>())
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|e| Error::parse(path, i + 1, format!("bad vector component: {e}")))?;
        if values.len() != EMBEDDING_DIM {
            return Err(Error::format(
                path,
                format!("line {}: expected {EMBEDDING_DIM} components, found {}", i + 1, values.len()),
            ));
        }
        out.push((word, values));
    }
    Ok(out)
}

pub fn load_embeddings(path: &Path, vocab: &Vocabulary) -> Result<EmbeddingTable> {
    let vectors = read_embedding_file(path)?;
    if vectors.is_empty() {
        return Err(Error::format(path, "embedding file is empty"));
    }
    Ok(align_embeddings(&vectors, vocab))
}

/// Builds the table: row 0 zero, known words copied, everything else (and
/// `[UNK]`) the mean of all vectors.
pub fn align_embeddings(vectors: &[(String, Vec<f32>)], vocab: &Vocabulary) -> EmbeddingTable {
    let mut mean = vec![0.0f64; EMBEDDING_DIM];
    for (_, v) in vectors {
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += x as f64;
        }
    }
    let mean: Vec<f32> = mean.iter().map(|m| (m / vectors.len().max(1) as f64) as f32).collect();
    let lookup: HashMap<&str, &[f32]> = vectors.iter().map(|(w, v)| (w.as_str(), v.as_slice())).collect();
    let rows = vocab.table_rows();
    let mut data = vec![0.0f32; rows * EMBEDDING_DIM];
    let mut found = 0;
    for row in 1..rows {
        let src = match vocab.word(row) {
            Some(w) if row != vocab.unk() => match lookup.get(w) {
                Some(v) => {
                    found += 1;
                    *v
                }
                None => &mean[..],
            },
            _ => &mean[..],
        };
        data[row * EMBEDDING_DIM..(row + 1) * EMBEDDING_DIM].copy_from_slice(src);
    }
    let words = vocab.words().len().max(1);
    EmbeddingTable {
        table: Tensor::new([rows, EMBEDDING_DIM], data).expect("table shape"),
        coverage: found as f64 / words as f64,
    }
}

/// Serialises vectors in the format [`read_embedding_file`] reads.
pub fn format_embeddings(vectors: &[(String, Vec<f32>)]) -> String {
    let mut s = String::new();
    for (w, v) in vectors {
        s.push_str(w);
        for x in v {
            let _ = write!(s, " {x}");
        }
        s.push('\n');
    }
    s
}
