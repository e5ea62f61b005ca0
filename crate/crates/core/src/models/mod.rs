//! The audio, text and fused architectures, assembled from [`crate::nn`]
//! layers into a [`ModelGraph`].

mod label;
mod nets;

pub use label::{phq_to_label, BinaryLabel, SeverityLabel, NUM_CLASSES};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Ctx, ParamStore, PoolChoice};
use crate::tensor::{Real, Tape, Tensor, Var};
use nets::{AudioNet, FusedNet, Net, TextNet};

/// Per-frame acoustic features after the voicing flag is dropped.
pub const AUDIO_FEATURES: usize = 73;
pub const AUDIO_HIDDEN: usize = 73;
pub const TEXT_EMBEDDING_DIM: usize = 100;
pub const TEXT_HIDDEN: usize = 100;
/// Output width of audio/text models used as feature extractors.
pub const EXTRACTOR_WIDTH: usize = 32;
pub const DEFAULT_DROPOUT: f64 = 0.2;

pub const AUDIO_TIMESTEPS: [usize; 3] = [16, 32, 64];
pub const TEXT_WINDOWS: [usize; 4] = [16, 32, 64, 128];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioVariant {
    LstmFc,
    BilstmFc,
    LstmTcnn,
    BilstmTcnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextVariant {
    LstmFc,
    BilstmFc,
    BilstmAttn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Uni,
    Bi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    MaxpoolConcat,
    AttnAlign,
    AttnAlignFuse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelKind {
    Audio { variant: AudioVariant },
    Text { variant: TextVariant },
    Fused { encoder: EncoderKind, fusion: FusionKind },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    Text,
    Both,
}

impl ModelKind {
    pub const CLI_NAMES: [&'static str; 10] = [
        "lstm_fc",
        "bilstm_fc",
        "lstm_tcnn",
        "bilstm_tcnn",
        "text_lstm",
        "text_bilstm",
        "text_bilstm_attn",
        "fused_maxpool",
        "fused_attn_align",
        "fused_attn_fuse",
    ];

    /// Name used on the command line. Fused models carry their encoder
    /// separately.
    pub fn cli_name(self) -> &'static str {
        use AudioVariant as A;
        use TextVariant as Tx;
        match self {
            ModelKind::Audio { variant: A::LstmFc } => "lstm_fc",
            ModelKind::Audio { variant: A::BilstmFc } => "bilstm_fc",
            ModelKind::Audio { variant: A::LstmTcnn } => "lstm_tcnn",
            ModelKind::Audio { variant: A::BilstmTcnn } => "bilstm_tcnn",
            ModelKind::Text { variant: Tx::LstmFc } => "text_lstm",
            ModelKind::Text { variant: Tx::BilstmFc } => "text_bilstm",
            ModelKind::Text { variant: Tx::BilstmAttn } => "text_bilstm_attn",
            ModelKind::Fused { fusion: FusionKind::MaxpoolConcat, .. } => "fused_maxpool",
            ModelKind::Fused { fusion: FusionKind::AttnAlign, .. } => "fused_attn_align",
            ModelKind::Fused { fusion: FusionKind::AttnAlignFuse, .. } => "fused_attn_fuse",
        }
    }

    /// Parses a command-line model name; `encoder` applies to fused models.
    pub fn from_cli_name(name: &str, encoder: EncoderKind) -> Result<Self> {
        use AudioVariant as A;
        use TextVariant as Tx;
        Ok(match name {
            "lstm_fc" => ModelKind::Audio { variant: A::LstmFc },
            "bilstm_fc" => ModelKind::Audio { variant: A::BilstmFc },
            "lstm_tcnn" => ModelKind::Audio { variant: A::LstmTcnn },
            "bilstm_tcnn" => ModelKind::Audio { variant: A::BilstmTcnn },
            "text_lstm" => ModelKind::Text { variant: Tx::LstmFc },
            "text_bilstm" => ModelKind::Text { variant: Tx::BilstmFc },
            "text_bilstm_attn" => ModelKind::Text { variant: Tx::BilstmAttn },
            "fused_maxpool" => ModelKind::Fused {
                encoder,
                fusion: FusionKind::MaxpoolConcat,
            },
            "fused_attn_align" => ModelKind::Fused {
                encoder,
                fusion: FusionKind::AttnAlign,
            },
            "fused_attn_fuse" => ModelKind::Fused {
                encoder,
                fusion: FusionKind::AttnAlignFuse,
            },
            other => {
                return Err(Error::config(format!(
                    "unknown model variant {other:?} (expected one of {})",
                    Self::CLI_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn modality(self) -> Modality {
        match self {
            ModelKind::Audio { .. } => Modality::Audio,
            ModelKind::Text { .. } => Modality::Text,
            ModelKind::Fused { .. } => Modality::Both,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uni" => Ok(EncoderKind::Uni),
            "bi" => Ok(EncoderKind::Bi),
            other => Err(Error::config(format!("unknown encoder {other:?} (expected uni or bi)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    /// Five class logits per sequence.
    Classifier,
    /// Per-timestep 32-wide features for fusion.
    Extractor,
}

/// Everything needed to rebuild a model's structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Audio frames per window (audio and fused models).
    pub timestep: usize,
    /// Tokens per text window (text and fused models).
    pub window: usize,
    /// Rows of the embedding table, i.e. vocabulary size + 1.
    pub vocab_rows: usize,
    pub head: HeadMode,
    pub pool: PoolChoice,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, timestep: usize, window: usize, vocab_rows: usize, seed: u64) -> Self {
        ModelSpec {
            kind,
            timestep,
            window,
            vocab_rows,
            head: HeadMode::Classifier,
            pool: PoolChoice::Max,
            dropout: DEFAULT_DROPOUT,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let modality = self.kind.modality();
        if modality != Modality::Text && !AUDIO_TIMESTEPS.contains(&self.timestep) {
            return Err(Error::config(format!(
                "audio timestep must be one of {AUDIO_TIMESTEPS:?}, got {}",
                self.timestep
            )));
        }
        if modality != Modality::Audio && !TEXT_WINDOWS.contains(&self.window) {
            return Err(Error::config(format!(
                "text window must be one of {TEXT_WINDOWS:?}, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

/// A batch of model inputs.
#[derive(Clone, Debug)]
pub struct ModelInput<T> {
    /// `[B, timestep, 73]` standardised frames.
    pub audio: Option<Tensor<T>>,
    /// `B · window` token indices, row-major.
    pub tokens: Option<Vec<usize>>,
    pub batch: usize,
}

impl<T: Real> ModelInput<T> {
    pub fn audio(frames: Tensor<T>) -> Self {
        let batch = frames.shape()[0];
        ModelInput {
            audio: Some(frames),
            tokens: None,
            batch,
        }
    }

    pub fn text(tokens: Vec<usize>, batch: usize) -> Self {
        ModelInput {
            audio: None,
            tokens: Some(tokens),
            batch,
        }
    }

    pub fn paired(frames: Tensor<T>, tokens: Vec<usize>) -> Self {
        let batch = frames.shape()[0];
        ModelInput {
            audio: Some(frames),
            tokens: Some(tokens),
            batch,
        }
    }
}

/// Handles produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    /// `[B, 5]` class logits, or extractor features.
    pub logits: Var,
    /// Attention weights over the text sequence, `[B, T]`.
    pub attention: Option<Var>,
    /// Fusion weights over (audio, text), `[B, 2]`.
    pub modality_weights: Option<Var>,
}

/// Probabilities and exported attention for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: Vec<[f64; NUM_CLASSES]>,
    pub attention: Option<Vec<Vec<f64>>>,
    pub modality_weights: Option<Vec<[f64; 2]>>,
}

impl Prediction {
    pub fn classes(&self) -> Vec<usize> {
        self.probs.iter().map(|p| argmax(p)).collect()
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// A built network: its structural spec, named parameters, and layers.
#[derive(Clone, Debug)]
pub struct ModelGraph<T: Real> {
    pub spec: ModelSpec,
    pub params: ParamStore<T>,
    net: Net,
}

impl<T: Real> ModelGraph<T> {
    /// Builds the model described by `spec`. Text and fused models need the
    /// frozen embedding table (`vocab_rows × 100`).
    pub fn build(spec: &ModelSpec, embeddings: Option<&Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut params = ParamStore::new();
        let needs_text = spec.kind.modality() != Modality::Audio;
        let table = if needs_text {
            let table = embeddings.ok_or_else(|| Error::usage("text models need a built vocabulary and embedding table"))?;
            if table.rank() != 2 || table.shape()[1] != TEXT_EMBEDDING_DIM || table.shape()[0] < 2 {
                return Err(Error::config(format!(
                    "embedding table must be [vocab + 1, {TEXT_EMBEDDING_DIM}], got {:?}",
                    table.shape()
                )));
            }
            Some(table.clone())
        } else {
            None
        };
        let mut spec = spec.clone();
        if let Some(t) = &table {
            spec.vocab_rows = t.shape()[0];
        }
        let net = match spec.kind {
            ModelKind::Audio { variant } => Net::Audio(AudioNet::new(&mut params, "audio", variant, &spec, spec.head, &mut rng)?),
            ModelKind::Text { variant } => Net::Text(TextNet::new(
                &mut params,
                "text",
                variant,
                &spec,
                spec.head,
                table.expect("checked"),
                &mut rng,
            )?),
            ModelKind::Fused { encoder, fusion } => {
                if spec.head != HeadMode::Classifier {
                    return Err(Error::config("fused models are always classifiers"));
                }
                Net::Fused(FusedNet::new(&mut params, encoder, fusion, &spec, table.expect("checked"), &mut rng)?)
            }
        };
        Ok(ModelGraph { spec, params, net })
    }

    /// Rebuilds the structure for `spec` with a placeholder embedding table,
    /// for loading stored parameters over it.
    pub fn skeleton(spec: &ModelSpec) -> Result<Self> {
        let table = (spec.kind.modality() != Modality::Audio)
            .then(|| Tensor::zeros([spec.vocab_rows.max(2), TEXT_EMBEDDING_DIM]));
        Self::build(spec, table.as_ref())
    }

    pub fn forward(&self, ctx: &mut Ctx<T>, input: &ModelInput<T>) -> Result<ForwardOutput> {
        match &self.net {
            Net::Audio(net) => {
                let x = audio_var(ctx, input, self.spec.timestep)?;
                Ok(ForwardOutput {
                    logits: net.forward(ctx, x)?,
                    attention: None,
                    modality_weights: None,
                })
            }
            Net::Text(net) => {
                let tokens = tokens_of(input, self.spec.window)?;
                let (logits, attention) = net.forward(ctx, tokens, input.batch)?;
                Ok(ForwardOutput {
                    logits,
                    attention,
                    modality_weights: None,
                })
            }
            Net::Fused(net) => {
                let x = audio_var(ctx, input, self.spec.timestep)?;
                let tokens = tokens_of(input, self.spec.window)?;
                net.forward(ctx, x, tokens, input.batch)
            }
        }
    }

    /// Inference-mode class probabilities.
    pub fn predict(&self, input: &ModelInput<T>) -> Result<Prediction> {
        if self.spec.head != HeadMode::Classifier {
            return Err(Error::usage("predict needs a classifier head"));
        }
        let mut tape = Tape::new();
        let mut ctx = Ctx::inference(&mut tape, &self.params);
        let out = self.forward(&mut ctx, input)?;
        let probs = ctx.tape.softmax(out.logits, 1)?;
        let rows = |v: Var, tape: &Tape<T>| -> Vec<Vec<f64>> {
            let t = tape.value(v);
            (0..t.shape()[0]).map(|r| t.row(r).iter().map(|x| x.as_f64()).collect()).collect()
        };
        let probs = rows(probs, ctx.tape)
            .into_iter()
            .map(|r| r.try_into().expect("five classes"))
            .collect();
        let attention = out.attention.map(|a| rows(a, ctx.tape));
        let modality_weights = out
            .modality_weights
            .map(|m| rows(m, ctx.tape).into_iter().map(|r| [r[0], r[1]]).collect());
        Ok(Prediction {
            probs,
            attention,
            modality_weights,
        })
    }

    /// Names of the layers in construction order.
    pub fn layer_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for (_, p) in self.params.iter() {
            let layer = p.name.rsplit_once('.').map_or(p.name.as_str(), |(l, _)| l);
            if names.last().map(String::as_str) != Some(layer) {
                names.push(layer.to_string());
            }
        }
        names
    }

    /// Copies parameters into a model of another precision.
    pub fn cast<U: Real>(&self) -> ModelGraph<U> {
        ModelGraph {
            spec: self.spec.clone(),
            params: self.params.cast(),
            net: self.net.clone(),
        }
    }
}

fn audio_var<T: Real>(ctx: &mut Ctx<T>, input: &ModelInput<T>, timestep: usize) -> Result<Var> {
    let frames = input
        .audio
        .as_ref()
        .ok_or_else(|| Error::usage("model needs audio input"))?;
    let want = [input.batch, timestep, AUDIO_FEATURES];
    if frames.shape() != want {
        return Err(Error::shape("audio input", frames.shape(), &want));
    }
    Ok(ctx.tape.constant(frames.clone()))
}

fn tokens_of<T>(input: &ModelInput<T>, window: usize) -> Result<&[usize]> {
    let tokens = input
        .tokens
        .as_deref()
        .ok_or_else(|| Error::usage("model needs token input"))?;
    if tokens.len() != input.batch * window {
        return Err(Error::shape("token input", &[tokens.len()], &[input.batch, window]));
    }
    Ok(tokens)
}

pub fn build_audio_model<T: Real>(variant: AudioVariant, timestep: usize, seed: u64) -> Result<ModelGraph<T>> {
    ModelGraph::build(&ModelSpec::new(ModelKind::Audio { variant }, timestep, 0, 0, seed), None)
}

pub fn build_text_model<T: Real>(
    variant: TextVariant,
    window: usize,
    embeddings: Option<&Tensor<T>>,
    seed: u64,
) -> Result<ModelGraph<T>> {
    let rows = embeddings.map_or(0, |t| t.shape()[0]);
    ModelGraph::build(&ModelSpec::new(ModelKind::Text { variant }, 0, window, rows, seed), embeddings)
}

pub fn build_fused_model<T: Real>(
    encoder: EncoderKind,
    fusion: FusionKind,
    window: usize,
    timestep: usize,
    embeddings: Option<&Tensor<T>>,
    seed: u64,
) -> Result<ModelGraph<T>> {
    let rows = embeddings.map_or(0, |t| t.shape()[0]);
    ModelGraph::build(
        &ModelSpec::new(ModelKind::Fused { encoder, fusion }, timestep, window, rows, seed),
        embeddings,
    )
}
