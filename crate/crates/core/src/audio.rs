//! COVAREP feature files: loading, voicing filter, fixed-length framing and
//! z-score standardisation.

use std::io::Read;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COVAREP_COLUMNS: usize = 74;
/// Features left per frame once the voicing flag is dropped.
pub const FEATURES: usize = COVAREP_COLUMNS - 1;
pub const DEFAULT_VUV_COLUMN: usize = 1;
pub const FRAME_SECONDS: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovarepOptions {
    pub vuv_column: usize,
    pub has_header: bool,
}

impl Default for CovarepOptions {
    fn default() -> Self {
        CovarepOptions {
            vuv_column: DEFAULT_VUV_COLUMN,
            has_header: false,
        }
    }
}

/// Frames × 74 features for one recording.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarepMatrix {
    pub subject: String,
    pub vuv_column: usize,
    data: Vec<f32>,
}

impl CovarepMatrix {
    pub fn new(subject: impl Into<String>, vuv_column: usize, data: Vec<f32>) -> Result<Self> {
        if vuv_column >= COVAREP_COLUMNS {
            return Err(Error::config(format!("VUV column {vuv_column} outside 0..{COVAREP_COLUMNS}")));
        }
        if data.len() % COVAREP_COLUMNS != 0 {
            return Err(Error::usage(format!("{} values do not form 74-column rows", data.len())));
        }
        Ok(CovarepMatrix {
            subject: subject.into(),
            vuv_column,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.data.len() / COVAREP_COLUMNS
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * COVAREP_COLUMNS..(i + 1) * COVAREP_COLUMNS]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_voiced(&self, i: usize) -> bool {
        self.frame(i)[self.vuv_column] == 1.0
    }

    pub fn voiced_frames(&self) -> usize {
        (0..self.frames()).filter(|&i| self.is_voiced(i)).count()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frames() as f64 * FRAME_SECONDS
    }

    /// Voiced frames in order, each without the VUV column.
    pub fn voiced_stream(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.voiced_frames() * FEATURES);
        for i in 0..self.frames() {
            if self.is_voiced(i) {
                let f = self.frame(i);
                out.extend_from_slice(&f[..self.vuv_column]);
                out.extend_from_slice(&f[self.vuv_column + 1..]);
            }
        }
        out
    }
}

pub fn load_covarep(path: &Path, subject: &str, opts: &CovarepOptions) -> Result<CovarepMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_covarep(file, path, subject, opts)
}

/// Parses COVAREP CSV text; `path` only labels errors.
pub fn parse_covarep<R: Read>(reader: R, path: &Path, subject: &str, opts: &CovarepOptions) -> Result<CovarepMatrix> {
    if opts.vuv_column >= COVAREP_COLUMNS {
        return Err(Error::config(format!(
            "VUV column {} outside 0..{COVAREP_COLUMNS}",
            opts.vuv_column
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let line = record.position().map_or(row as u64 + 1, |p| p.line()) as usize;
        if record.len() != COVAREP_COLUMNS {
            return Err(Error::format(
                path,
                format!("line {line}: expected {COVAREP_COLUMNS} columns, found {}", record.len()),
            ));
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f32 = cell
                .parse()
                .map_err(|_| Error::parse(path, line, format!("column {}: not a number: {cell:?}", col + 1)))?;
            if v.is_nan() {
                return Err(Error::parse(path, line, format!("column {}: NaN", col + 1)));
            }
            if col == opts.vuv_column && v != 0.0 && v != 1.0 {
                return Err(Error::format(path, format!("line {line}: VUV flag must be 0 or 1, found {v}")));
            }
            data.push(v);
        }
    }
    CovarepMatrix::new(subject, opts.vuv_column, data)
}

/// A `timestep × 73` slice of consecutive voiced frames.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioWindow {
    pub subject: String,
    pub timestep: usize,
    pub frames: Vec<f32>,
    pub label: usize,
}

/// Splits the voiced stream into non-overlapping windows, discarding the
/// remainder.
pub fn frame_sequences(m: &CovarepMatrix, timestep: usize, label: usize) -> Result<Vec<AudioWindow>> {
    if timestep == 0 {
        return Err(Error::config("timestep must be positive"));
    }
    let stream = m.voiced_stream();
    if stream.is_empty() {
        warn!("subject {} has no voiced frames", m.subject);
    }
    Ok(stream
        .chunks_exact(timestep * FEATURES)
        .map(|c| AudioWindow {
            subject: m.subject.clone(),
            timestep,
            frames: c.to_vec(),
            label,
        })
        .collect())
}

/// Per-feature mean and standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Statistics over rows of `width` values drawn from every stream.
    pub fn fit<'a>(streams: impl IntoIterator<Item = &'a [f32]>, width: usize) -> Result<Self> {
        let mut n = 0usize;
        let mut mean = vec![0.0f64; width];
        let mut m2 = vec![0.0f64; width];
        for s in streams {
            for row in s.chunks_exact(width) {
                n += 1;
                for (j, &x) in row.iter().enumerate() {
                    let x = x as f64;
                    let d = x - mean[j];
                    mean[j] += d / n as f64;
                    m2[j] += d * (x - mean[j]);
                }
            }
        }
        if n == 0 {
            return Err(Error::usage("no frames to standardise"));
        }
        let std = m2
            .iter()
            .map(|&v| {
                let s = (v / n as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(FeatureStats { mean, std })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, values: &mut [f32]) {
        let w = self.width();
        for row in values.chunks_exact_mut(w) {
            for (j, x) in row.iter_mut().enumerate() {
                *x = ((*x as f64 - self.mean[j]) / self.std[j]) as f32;
            }
        }
    }
}
