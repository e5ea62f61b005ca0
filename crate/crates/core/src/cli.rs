//! Run configuration and the command implementations behind the binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::audio::CovarepOptions;
use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::data::{self, Corpus, DataOptions, Partition, Pipeline, RawSubject, WindowSet};
use crate::error::{Error, Result};
use crate::eval::{self, EvaluationReport, GroupReport, PatientPrediction};
use crate::models::{EncoderKind, Modality, ModelGraph, ModelKind, ModelSpec, SeverityLabel, NUM_CLASSES};
use crate::synth::{self, GeneratedCorpus, GeneratorConfig};
use crate::text::{self, Normalizer};
use crate::training::{self, AdamConfig, BatchSource, History, TrainConfig};

pub const CHECKPOINT_FILE: &str = "model.mseq";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopwordMode {
    Keep,
    Remove,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestKind {
    Welch,
    Pooled,
}

macro_rules! keyword_from_str {
    ($t:ty, $($name:literal => $v:expr),+) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($v),)+
                    other => Err(Error::config(format!(
                        "invalid value {other:?} (expected {})",
                        [$($name),+].join(" or ")
                    ))),
                }
            }
        }
    };
}

keyword_from_str!(Switch, "on" => Switch::On, "off" => Switch::Off);
keyword_from_str!(StopwordMode, "keep" => StopwordMode::Keep, "remove" => StopwordMode::Remove);
keyword_from_str!(TTestKind, "welch" => TTestKind::Welch, "pooled" => TTestKind::Pooled);

/// Every setting of a run. Config files hold `key = value` lines using these
/// field names; generator settings use `generator.<field>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    /// Defaults to `<corpus>/embeddings.txt`.
    pub embeddings: Option<PathBuf>,
    /// Defaults to `<out>/model.mseq`.
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub model: String,
    pub encoder: EncoderKind,
    pub timestep: usize,
    pub window: usize,
    pub stopwords: StopwordMode,
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
    pub patience: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip; 0 disables.
    pub clip_norm: f64,
    /// Training windows per epoch; 0 uses all.
    pub samples_per_epoch: usize,
    /// Validation windows per epoch; 0 uses all.
    pub val_samples: usize,
    pub balance: Switch,
    pub partition: Partition,
    /// Windows kept per subject at evaluation; 0 keeps all.
    pub max_windows: usize,
    pub ttest: TTestKind,
    pub bins: usize,
    pub vuv_column: usize,
    pub covarep_header: bool,
    pub transcript_header: bool,
    /// Unimodal checkpoints whose weights initialise a fused model.
    pub audio_checkpoint: Option<PathBuf>,
    pub text_checkpoint: Option<PathBuf>,
    pub freeze_extractors: bool,
    pub subject: Option<String>,
    pub audio_file: Option<PathBuf>,
    pub transcript_file: Option<PathBuf>,
    /// Worker threads for file loading; 0 picks automatically.
    pub threads: usize,
    pub generator: GeneratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            embeddings: None,
            checkpoint: None,
            out: PathBuf::from("moodseq-out"),
            model: "bilstm_tcnn".into(),
            encoder: EncoderKind::Bi,
            timestep: 16,
            window: 64,
            stopwords: StopwordMode::Remove,
            seed: 0,
            epochs: 100,
            batch: 32,
            patience: 5,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            samples_per_epoch: 0,
            val_samples: 0,
            balance: Switch::On,
            partition: Partition::Test,
            max_windows: 0,
            ttest: TTestKind::Welch,
            bins: 20,
            vuv_column: crate::audio::DEFAULT_VUV_COLUMN,
            covarep_header: false,
            transcript_header: true,
            audio_checkpoint: None,
            text_checkpoint: None,
            freeze_extractors: false,
            subject: None,
            audio_file: None,
            transcript_file: None,
            threads: 0,
            generator: GeneratorConfig::default(),
        }
    }
}

impl RunConfig {
    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("{}:{}: expected key = value", origin.display(), i + 1)))?;
            self.set(key.trim(), value.trim()).map_err(|e| {
                let msg = match e {
                    Error::Config(m) => m,
                    other => other.to_string(),
                };
                Error::config(format!("{}:{}: {msg}", origin.display(), i + 1))
            })?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Sets one (possibly dotted) key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parts: Vec<&str> = key.split('.').collect();
        let mut tree = serde_json::to_value(&*self).expect("config serialises");
        if lookup_mut(&mut tree, &parts).is_none() {
            return Err(Error::config(format!("unknown config key {key:?}")));
        }
        let mut candidates = Vec::new();
        if let Ok(v) = serde_json::from_str::<Value>(value) {
            candidates.push(v);
        }
        candidates.push(Value::String(value.to_string()));
        let mut last = None;
        for candidate in candidates {
            *lookup_mut(&mut tree, &parts).expect("key checked") = candidate;
            match serde_json::from_value::<RunConfig>(tree.clone()) {
                Ok(cfg) => {
                    *self = cfg;
                    return Ok(());
                }
                Err(e) => last = Some(e),
            }
        }
        Err(Error::config(format!(
            "invalid value {value:?} for {key}: {}",
            last.map(|e| e.to_string()).unwrap_or_default()
        )))
    }

    /// `key = default` lines for every settable key.
    pub fn describe_defaults() -> String {
        fn walk(prefix: &str, v: &Value, out: &mut String) {
            match v {
                Value::Object(m) => {
                    for (k, v) in m {
                        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        if matches!(v, Value::Object(_)) {
                            walk(&key, v, out);
                        } else {
                            let shown = match v {
                                Value::Null => "(unset)".to_string(),
                                Value::String(s) => s.clone(),
                                other => other.to_string(),
                            };
                            let _ = writeln!(out, "  {key} = {shown}");
                        }
                    }
                }
                _ => unreachable!("config is an object"),
            }
        }
        let mut out = String::new();
        walk("", &serde_json::to_value(RunConfig::default()).expect("config serialises"), &mut out);
        out
    }

    pub fn data_options(&self) -> DataOptions {
        DataOptions {
            covarep: CovarepOptions {
                vuv_column: self.vuv_column,
                has_header: self.covarep_header,
            },
            transcript_header: self.transcript_header,
            remove_stopwords: self.stopwords == StopwordMode::Remove,
        }
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        ModelKind::from_cli_name(&self.model, self.encoder)
    }

    pub fn train_config(&self, frozen_prefixes: Vec<String>) -> TrainConfig {
        let nonzero = |n: usize| (n > 0).then_some(n);
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            patience: self.patience,
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
            seed: self.seed,
            samples_per_epoch: nonzero(self.samples_per_epoch),
            val_samples: nonzero(self.val_samples),
            frozen_prefixes,
        }
    }

    pub fn corpus_dir(&self) -> Result<&Path> {
        self.corpus
            .as_deref()
            .ok_or_else(|| Error::config("no corpus directory given (--corpus)"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join(CHECKPOINT_FILE))
    }
}

fn lookup_mut<'a>(tree: &'a mut Value, parts: &[&str]) -> Option<&'a mut Value> {
    parts
        .iter()
        .try_fold(tree, |node, part| node.as_object_mut().and_then(|m| m.get_mut(*part)))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes a synthetic corpus to `out`, seeded by `seed`.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<GeneratedCorpus> {
    let mut gen = cfg.generator.clone();
    gen.seed = cfg.seed;
    gen.vuv_column = cfg.vuv_column;
    let corpus = synth::generate(&gen, &cfg.out)?;
    info!(
        "wrote {} subjects and {} embedding vectors to {}",
        corpus.subjects.len(),
        corpus.embedding_words,
        cfg.out.display()
    );
    Ok(corpus)
}

/// Training and validation data for a model, with the fitted preprocessing.
pub struct PreparedData {
    pub corpus: Corpus,
    pub pipeline: Pipeline,
    pub train: WindowSet,
    pub val: WindowSet,
    pub embeddings: Option<text::EmbeddingTable>,
}

pub fn prepare_data(cfg: &RunConfig, modality: Modality) -> Result<PreparedData> {
    let corpus = Corpus::open(cfg.corpus_dir()?)?;
    let options = cfg.data_options();
    let normalizer = Normalizer::new(options.remove_stopwords);
    let load = |p: Partition| data::load_raw(&corpus.root, &corpus.partition(p), modality, &options, &normalizer);
    let train_raw = load(Partition::Train)?;
    let val_raw = load(Partition::Val)?;
    if train_raw.is_empty() {
        return Err(Error::config("the corpus has no training subjects"));
    }
    let pipeline = Pipeline::fit(modality, cfg.timestep, cfg.window, options, &train_raw)?;
    let embeddings = match &pipeline.vocab {
        Some(vocab) => {
            let path = cfg.embeddings.clone().unwrap_or_else(|| corpus.embeddings_path());
            let table = text::load_embeddings(&path, vocab)?;
            info!("vocabulary of {} words, embedding coverage {:.3}", vocab.len(), table.coverage);
            Some(table)
        }
        None => None,
    };
    Ok(PreparedData {
        train: pipeline.window_set(&train_raw)?,
        val: pipeline.window_set(&val_raw)?,
        corpus,
        pipeline,
        embeddings,
    })
}

pub struct TrainOutcome {
    pub model: ModelGraph<f32>,
    pub history: History,
    pub checkpoint: Checkpoint,
}

/// Builds the configured model, trains it and writes the checkpoint and
/// history CSV under `out`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let kind = cfg.model_kind()?;
    let data = prepare_data(cfg, kind.modality())?;
    let outcome = train_prepared(cfg, kind, &data)?;
    create_dir(&cfg.out)?;
    outcome.checkpoint.save(&cfg.checkpoint_path())?;
    outcome.history.write_csv(&cfg.out.join(HISTORY_FILE))?;
    Ok(outcome)
}

/// Trains on already prepared data without writing files.
pub fn train_prepared(cfg: &RunConfig, kind: ModelKind, data: &PreparedData) -> Result<TrainOutcome> {
    let vocab_rows = data.pipeline.vocab.as_ref().map_or(0, |v| v.table_rows());
    let spec = ModelSpec::new(kind, cfg.timestep, cfg.window, vocab_rows, cfg.seed);
    let mut model = ModelGraph::<f32>::build(&spec, data.embeddings.as_ref().map(|e| &e.table))?;
    let vocab_hash = data.pipeline.vocab.as_ref().map(|v| v.hash());
    let mut frozen = Vec::new();
    for (path, what) in [(&cfg.audio_checkpoint, "audio"), (&cfg.text_checkpoint, "text")] {
        let Some(path) = path else { continue };
        if kind.modality() != Modality::Both {
            return Err(Error::config(format!("{what}_checkpoint only applies to fused models")));
        }
        let source = Checkpoint::load(path)?;
        if what == "text" && source.meta.vocab_hash != vocab_hash {
            return Err(Error::config(format!(
                "{} was trained with a different vocabulary",
                path.display()
            )));
        }
        let copied = model.params.load_matching(&source.params);
        let copied: Vec<String> = copied.into_iter().filter(|n| n.starts_with(what)).collect();
        info!("initialised {} {what} parameters from {}", copied.len(), path.display());
        if cfg.freeze_extractors {
            frozen.extend(copied);
        }
    }
    if data.train.is_empty() {
        return Err(Error::config("no training windows (check timestep/window against the corpus)"));
    }
    let val: Option<&dyn BatchSource<f32>> = if data.val.is_empty() { None } else { Some(&data.val) };
    let history = training::fit(&mut model, &data.train, val, &cfg.train_config(frozen))?;
    let meta = CheckpointMeta {
        model: spec,
        pipeline: data.pipeline.clone(),
        vocab_hash,
        best_epoch: history.best_epoch,
    };
    let checkpoint = Checkpoint::new(meta, &model);
    Ok(TrainOutcome {
        model,
        history,
        checkpoint,
    })
}

pub struct EvalOutcome {
    pub sequence: EvaluationReport,
    pub patient: EvaluationReport,
    pub roc: eval::RocReport,
    pub confusion: eval::ConfusionMatrix,
    pub patients: Vec<PatientPrediction>,
}

/// Window set for one partition under a checkpoint's preprocessing.
pub fn partition_windows(cfg: &RunConfig, pipeline: &Pipeline, partition: Partition) -> Result<WindowSet> {
    let corpus = Corpus::open(cfg.corpus_dir()?)?;
    let records = corpus.partition(partition);
    if records.is_empty() {
        return Err(Error::config(format!("the corpus has no {partition} subjects")));
    }
    let raw = data::load_raw(&corpus.root, &records, pipeline.modality, &pipeline.options, &pipeline.normalizer())?;
    let set = pipeline.window_set(&raw)?;
    Ok(if cfg.max_windows > 0 {
        set.cap_per_subject(cfg.max_windows, cfg.seed)
    } else {
        set
    })
}

/// Sequence- and patient-level evaluation of a trained model on `set`.
pub fn evaluate_set(model: &ModelGraph<f32>, set: &WindowSet, balance: bool, batch: usize, seed: u64) -> Result<EvalOutcome> {
    let n = BatchSource::<f32>::len(set);
    if n == 0 {
        return Err(Error::config("nothing to evaluate: no windows"));
    }
    let all: Vec<usize> = (0..n).collect();
    let probs = training::predict_indices(model, set, &all, batch, seed)?;
    let preds: Vec<usize> = probs.iter().map(|p| crate::models::argmax(p)).collect();
    let labels = set.labels();
    let chosen = if balance {
        eval::balance_by_oversampling(&labels, NUM_CLASSES, seed)?
    } else {
        all
    };
    let seq_preds: Vec<usize> = chosen.iter().map(|&i| preds[i]).collect();
    let seq_labels: Vec<usize> = chosen.iter().map(|&i| labels[i]).collect();
    let seq_scores: Vec<Vec<f64>> = chosen.iter().map(|&i| probs[i].to_vec()).collect();
    let sequence = eval::metrics(&seq_preds, &seq_labels, NUM_CLASSES)?;
    let confusion = eval::ConfusionMatrix::new(&seq_preds, &seq_labels, NUM_CLASSES)?;
    let roc = eval::roc_micro_auc(&seq_scores, &seq_labels)?;

    let patients = eval::vote_by_subject(&set.sample_subjects(), &preds, NUM_CLASSES)?;
    let patient_labels: Vec<usize> = patients
        .iter()
        .map(|p| {
            set.subjects()
                .iter()
                .find(|s| s.subject == p.subject)
                .map(|s| s.label)
                .expect("voted subject exists")
        })
        .collect();
    let patient_chosen = if balance {
        eval::balance_by_oversampling(&patient_labels, NUM_CLASSES, seed)?
    } else {
        (0..patients.len()).collect()
    };
    let patient = eval::metrics(
        &patient_chosen.iter().map(|&i| patients[i].voted).collect::<Vec<_>>(),
        &patient_chosen.iter().map(|&i| patient_labels[i]).collect::<Vec<_>>(),
        NUM_CLASSES,
    )?;
    Ok(EvalOutcome {
        sequence,
        patient,
        roc,
        confusion,
        patients,
    })
}

/// Evaluates the checkpoint on the configured partition and writes
/// `metrics.csv`, `report.txt`, `roc.csv`, `confusion.csv`,
/// `confusion_normalized.csv` and `patients.csv` under `out`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalOutcome> {
    let checkpoint = Checkpoint::load(&cfg.checkpoint_path())?;
    let model = checkpoint.model()?;
    let set = partition_windows(cfg, &checkpoint.meta.pipeline, cfg.partition)?;
    let outcome = evaluate_set(&model, &set, cfg.balance.is_on(), cfg.batch, cfg.seed)?;
    create_dir(&cfg.out)?;
    let o = &cfg.out;
    write_file(
        &o.join("metrics.csv"),
        &format!(
            "{}\n{}\n{}\n",
            EvaluationReport::CSV_HEADER,
            outcome.sequence.csv_row("sequence"),
            outcome.patient.csv_row("patient")
        ),
    )?;
    let mut report = format!(
        "model {} on {} ({} windows, {} subjects, balance {})\n\n",
        checkpoint.meta.model.kind,
        cfg.partition,
        set.len(),
        outcome.patients.len(),
        if cfg.balance.is_on() { "on" } else { "off" }
    );
    report.push_str(&outcome.sequence.to_text("sequence level"));
    report.push('\n');
    report.push_str(&outcome.patient.to_text("patient level (majority vote)"));
    let _ = writeln!(report, "\nmicro-average AUC {:.4}", outcome.roc.micro_auc);
    write_file(&o.join("report.txt"), &report)?;
    write_file(&o.join("roc.csv"), &outcome.roc.to_csv())?;
    write_file(&o.join("confusion.csv"), &outcome.confusion.to_csv(false))?;
    write_file(&o.join("confusion_normalized.csv"), &outcome.confusion.to_csv(true))?;
    write_file(&o.join("patients.csv"), &patients_csv(&outcome.patients, &set))?;
    print!("{report}");
    Ok(outcome)
}

fn patients_csv(patients: &[PatientPrediction], set: &WindowSet) -> String {
    let mut s = String::from("subject,label,voted,windows");
    for c in SeverityLabel::ALL {
        let _ = write!(s, ",votes_{c}");
    }
    s.push('\n');
    for p in patients {
        let label = set.subjects().iter().find(|x| x.subject == p.subject).map_or(0, |x| x.label);
        let _ = write!(
            s,
            "{},{},{},{}",
            p.subject,
            SeverityLabel::ALL[label],
            SeverityLabel::ALL[p.voted],
            p.windows.len()
        );
        for t in &p.tally {
            let _ = write!(s, ",{t}");
        }
        s.push('\n');
    }
    s
}

/// Group statistics and t-tests; writes `stats.txt`, `stats.csv` and
/// `histogram.csv` under `out`.
pub fn cmd_stats(cfg: &RunConfig) -> Result<GroupReport> {
    let corpus = Corpus::open(cfg.corpus_dir()?)?;
    let measures = data::subject_measures(&corpus, &cfg.data_options())?;
    let report = eval::group_statistics(&measures, cfg.ttest == TTestKind::Pooled)?;
    create_dir(&cfg.out)?;
    write_file(&cfg.out.join("stats.txt"), &report.to_text())?;
    write_file(&cfg.out.join("stats.csv"), &report.to_csv())?;
    write_file(&cfg.out.join("histogram.csv"), &eval::histogram_csv(&measures, cfg.bins.max(1)))?;
    print!("{}", report.to_text());
    Ok(report)
}

/// Per-window classes, vote tally and exported attention for one subject.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectPrediction {
    pub vote: PatientPrediction,
    pub probs: Vec<[f64; NUM_CLASSES]>,
    pub attention: Option<Vec<Vec<f64>>>,
    pub modality_weights: Option<Vec<[f64; 2]>>,
}

impl SubjectPrediction {
    pub fn to_text(&self) -> String {
        let mut s = format!("subject {}\n", self.vote.subject);
        for (i, p) in self.probs.iter().enumerate() {
            let c = crate::models::argmax(p);
            let _ = write!(s, "window {i:4}: {:<17} p={:.3}", SeverityLabel::ALL[c].name(), p[c]);
            if let Some(w) = &self.modality_weights {
                let _ = write!(s, "  audio/text weights {:.3}/{:.3}", w[i][0], w[i][1]);
            }
            s.push('\n');
            if let Some(a) = &self.attention {
                let weights: Vec<String> = a[i].iter().map(|x| format!("{x:.3}")).collect();
                let _ = writeln!(s, "  attention {}", weights.join(" "));
            }
        }
        s.push_str("votes");
        for (c, t) in SeverityLabel::ALL.iter().zip(&self.vote.tally) {
            let _ = write!(s, " {c}={t}");
        }
        let _ = writeln!(s, "\nvoted severity: {}", SeverityLabel::ALL[self.vote.voted]);
        s
    }
}

/// Scores one subject's windows and votes.
pub fn predict_raw(
    model: &ModelGraph<f32>,
    pipeline: &Pipeline,
    raw: &RawSubject,
    batch: usize,
    seed: u64,
) -> Result<SubjectPrediction> {
    let set = pipeline.window_set(std::slice::from_ref(raw))?;
    if set.is_empty() {
        return Err(Error::config(format!("subject {} yields no windows", raw.id)));
    }
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut probs = Vec::new();
    let mut attention: Option<Vec<Vec<f64>>> = None;
    let mut modality: Option<Vec<[f64; 2]>> = None;
    let all: Vec<usize> = (0..set.len()).collect();
    for chunk in all.chunks(batch.max(1)) {
        let input = set.batch(chunk, &mut rng)?;
        let p = model.predict(&input)?;
        probs.extend(p.probs);
        if let Some(a) = p.attention {
            attention.get_or_insert_with(Vec::new).extend(a);
        }
        if let Some(m) = p.modality_weights {
            modality.get_or_insert_with(Vec::new).extend(m);
        }
    }
    let classes: Vec<usize> = probs.iter().map(|p| crate::models::argmax(p)).collect();
    Ok(SubjectPrediction {
        vote: eval::majority_vote(&raw.id, &classes, NUM_CLASSES)?,
        probs,
        attention,
        modality_weights: modality,
    })
}

/// Scores one subject, from the corpus (`subject`) or from explicit files.
pub fn cmd_predict(cfg: &RunConfig) -> Result<SubjectPrediction> {
    let checkpoint = Checkpoint::load(&cfg.checkpoint_path())?;
    let model = checkpoint.model()?;
    let pipeline = &checkpoint.meta.pipeline;
    let raw = match (&cfg.subject, &cfg.corpus) {
        (Some(id), Some(dir)) => {
            let corpus = Corpus::open(dir)?;
            let record = corpus.subject(id)?;
            data::load_raw(&corpus.root, &[record], pipeline.modality, &pipeline.options, &pipeline.normalizer())?.remove(0)
        }
        _ => {
            let id = cfg.subject.clone().unwrap_or_else(|| "subject".into());
            pipeline.load_files(&id, cfg.audio_file.as_deref(), cfg.transcript_file.as_deref())?
        }
    };
    let prediction = predict_raw(&model, pipeline, &raw, cfg.batch, cfg.seed)?;
    print!("{}", prediction.to_text());
    Ok(prediction)
}

/// Command-line flags. Each overrides the matching config-file key.
#[derive(Args, Clone, Debug, Default)]
pub struct Flags {
    /// `key = value` config file; run `moodseq --help` for the keys.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Corpus directory (registry.csv, audio/, transcripts/).
    #[arg(long, global = true, value_name = "DIR")]
    pub corpus: Option<PathBuf>,
    /// Embedding file [default: <corpus>/embeddings.txt].
    #[arg(long, global = true, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Checkpoint to write or read [default: <out>/model.mseq].
    #[arg(long, global = true, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Model variant [default: bilstm_tcnn].
    #[arg(long, global = true, value_parser = clap::builder::PossibleValuesParser::new(ModelKind::CLI_NAMES))]
    pub model: Option<String>,
    /// Encoder of fused models [default: bi].
    #[arg(long, global = true, value_parser = ["uni", "bi"])]
    pub encoder: Option<String>,
    /// Audio frames per window [default: 16].
    #[arg(long, global = true, value_parser = ["16", "32", "64"])]
    pub timestep: Option<String>,
    /// Tokens per text window [default: 64].
    #[arg(long, global = true, value_parser = ["16", "32", "64", "128"])]
    pub window: Option<String>,
    /// Stopword handling [default: remove].
    #[arg(long, global = true, value_parser = ["keep", "remove"])]
    pub stopwords: Option<String>,
    /// Seed for every random choice [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Maximum training epochs [default: 100].
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Batch size [default: 32].
    #[arg(long, global = true)]
    pub batch: Option<usize>,
    /// Oversample the evaluated partition to equal class counts [default: on].
    #[arg(long, global = true, value_parser = ["on", "off"])]
    pub balance: Option<String>,
    /// Output directory [default: moodseq-out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for file loading; 0 picks automatically [default: 0].
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Partition to evaluate [default: test].
    #[arg(long, global = true, value_parser = ["train", "val", "test"])]
    pub partition: Option<String>,
    /// Subject id for `predict`.
    #[arg(long, global = true)]
    pub subject: Option<String>,
    /// COVAREP file for `predict` without a corpus.
    #[arg(long, global = true, value_name = "FILE")]
    pub audio_file: Option<PathBuf>,
    /// Transcript file for `predict` without a corpus.
    #[arg(long, global = true, value_name = "FILE")]
    pub transcript_file: Option<PathBuf>,
    /// t-test used by `stats` [default: welch].
    #[arg(long, global = true, value_parser = ["welch", "pooled"])]
    pub ttest: Option<String>,
}

#[derive(Subcommand, Clone, Debug)]
pub enum Command {
    /// Write a synthetic corpus to --out.
    GenData,
    /// Train a model and write its checkpoint and history.
    Train,
    /// Evaluate a checkpoint on a corpus partition.
    Eval,
    /// Group statistics and t-tests over a corpus.
    Stats,
    /// Score one subject with a checkpoint.
    Predict,
}

#[derive(Parser, Clone, Debug)]
#[command(name = "moodseq", version, about = "Depression-severity classification from COVAREP features and interview transcripts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let f = &self.flags;
        if let Some(path) = &f.config {
            cfg.load_file(path)?;
        }
        let set_path = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                slot.clone_from(v);
            }
        };
        set_path(&mut cfg.corpus, &f.corpus);
        set_path(&mut cfg.embeddings, &f.embeddings);
        set_path(&mut cfg.checkpoint, &f.checkpoint);
        set_path(&mut cfg.audio_file, &f.audio_file);
        set_path(&mut cfg.transcript_file, &f.transcript_file);
        if let Some(v) = &f.out {
            cfg.out.clone_from(v);
        }
        if let Some(v) = &f.model {
            cfg.model.clone_from(v);
        }
        if let Some(v) = &f.subject {
            cfg.subject = Some(v.clone());
        }
        for (key, value) in [
            ("encoder", &f.encoder),
            ("timestep", &f.timestep),
            ("window", &f.window),
            ("stopwords", &f.stopwords),
            ("balance", &f.balance),
            ("partition", &f.partition),
            ("ttest", &f.ttest),
        ] {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.seed = f.seed.unwrap_or(cfg.seed);
        cfg.epochs = f.epochs.unwrap_or(cfg.epochs);
        cfg.batch = f.batch.unwrap_or(cfg.batch);
        cfg.threads = f.threads.unwrap_or(cfg.threads);
        Ok(cfg)
    }
}

/// Runs one command with a resolved configuration.
pub fn run(command: &Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::GenData => cmd_gen_data(cfg).map(drop),
        Command::Train => {
            let outcome = cmd_train(cfg)?;
            let best = outcome.history.best_epoch;
            if let Some(r) = outcome.history.records.get(best.saturating_sub(1)) {
                println!(
                    "best epoch {best}: val loss {:.4}, val accuracy {:.4}; checkpoint {}",
                    r.val_loss,
                    r.val_acc,
                    cfg.checkpoint_path().display()
                );
            }
            Ok(())
        }
        Command::Eval => cmd_eval(cfg).map(drop),
        Command::Stats => cmd_stats(cfg).map(drop),
        Command::Predict => cmd_predict(cfg).map(drop),
    }
}

/// Warns about flags the chosen command ignores.
pub fn warn_unused(command: &Command, cfg: &RunConfig) {
    if matches!(command, Command::GenData) && cfg.corpus.is_some() {
        warn!("gen-data writes to --out; --corpus is ignored");
    }
}
