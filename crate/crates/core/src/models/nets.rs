use rand_chacha::ChaCha8Rng;

use super::{
    AudioVariant, EncoderKind, ForwardOutput, FusionKind, HeadMode, ModelSpec, TextVariant, AUDIO_FEATURES,
    AUDIO_HIDDEN, EXTRACTOR_WIDTH, NUM_CLASSES, TEXT_HIDDEN,
};
use crate::attention::SelfAttention;
use crate::error::{Error, Result};
use crate::nn::{
    global_average_pool_time, run_bilstm, run_lstm, stack_output_features, BatchNorm, BiLstm, Ctx, Dense, Dropout,
    Embedding, LstmCell, ParamStore, TcnnBlock, TcnnBlockConfig,
};
use crate::tensor::{Real, Tensor, Var};

const TEXT_RECURRENT_DROPOUT: f64 = 0.2;

#[derive(Clone, Debug)]
pub(crate) enum Net {
    Audio(AudioNet),
    Text(TextNet),
    Fused(FusedNet),
}

#[derive(Clone, Debug)]
pub(crate) enum Recurrent {
    Uni(LstmCell),
    Bi(BiLstm),
}

impl Recurrent {
    fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        bidirectional: bool,
        input: usize,
        hidden: usize,
        recurrent_dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(if bidirectional {
            Recurrent::Bi(BiLstm::new(store, name, input, hidden, recurrent_dropout, rng)?)
        } else {
            Recurrent::Uni(LstmCell::new(store, name, input, hidden, recurrent_dropout, rng)?)
        })
    }

    fn width(&self) -> usize {
        match self {
            Recurrent::Uni(c) => c.hidden,
            Recurrent::Bi(b) => b.output_width(),
        }
    }

    fn run<T: Real>(&self, ctx: &mut Ctx<T>, seq: Var, return_all: bool) -> Result<Var> {
        match self {
            Recurrent::Uni(c) => run_lstm(ctx, c, seq, return_all),
            Recurrent::Bi(b) => run_bilstm(ctx, b, seq, return_all),
        }
    }
}

fn head_width(head: HeadMode) -> usize {
    match head {
        HeadMode::Classifier => NUM_CLASSES,
        HeadMode::Extractor => EXTRACTOR_WIDTH,
    }
}

/// dense → relu → dropout
fn hidden_layer<T: Real>(ctx: &mut Ctx<T>, layer: &Dense, dropout: &Dropout, x: Var) -> Result<Var> {
    let y = layer.forward(ctx, x)?;
    let y = ctx.tape.relu(y);
    dropout.forward(ctx, y)
}

#[derive(Clone, Debug)]
pub(crate) struct AudioNet {
    input_bn: Option<BatchNorm>,
    rnn: Recurrent,
    blocks: Vec<TcnnBlock>,
    fc1: Dense,
    fc2: Dense,
    head_bn: Option<BatchNorm>,
    out: Dense,
    dropout: Dropout,
    head: HeadMode,
}

impl AudioNet {
    pub(crate) fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        variant: AudioVariant,
        spec: &ModelSpec,
        head: HeadMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let bidirectional = matches!(variant, AudioVariant::BilstmFc | AudioVariant::BilstmTcnn);
        let tcnn = matches!(variant, AudioVariant::LstmTcnn | AudioVariant::BilstmTcnn);
        let dropout = Dropout::new(spec.dropout)?;
        let input_bn = (!tcnn).then(|| BatchNorm::new(store, &format!("{name}.input_bn"), AUDIO_FEATURES));
        let rnn = Recurrent::new(store, &format!("{name}.lstm"), bidirectional, AUDIO_FEATURES, AUDIO_HIDDEN, 0.0, rng)?;
        let mut blocks = Vec::new();
        let mut fc_input = rnn.width();
        if tcnn {
            let mut channels = 1;
            let mut cfgs = TcnnBlockConfig::proposed();
            for cfg in &mut cfgs {
                cfg.pool = spec.pool;
            }
            for (i, cfg) in cfgs.iter().enumerate() {
                blocks.push(TcnnBlock::new(store, &format!("{name}.tcnn{i}"), channels, *cfg, rng)?);
                channels = cfg.kernel_count;
            }
            fc_input = stack_output_features(rnn.width(), &cfgs) * channels;
        }
        let fc1 = Dense::new(store, &format!("{name}.fc1"), fc_input, 128, rng);
        let fc2 = Dense::new(store, &format!("{name}.fc2"), 128, 64, rng);
        let head_bn = (!tcnn).then(|| BatchNorm::new(store, &format!("{name}.head_bn"), 64));
        let out = Dense::new(store, &format!("{name}.out"), 64, head_width(head), rng);
        Ok(AudioNet {
            input_bn,
            rnn,
            blocks,
            fc1,
            fc2,
            head_bn,
            out,
            dropout,
            head,
        })
    }

    /// `[B, T, 73]` → `[B, 5]` logits, or `[B, T, 32]` features.
    pub(crate) fn forward<T: Real>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let extract = self.head == HeadMode::Extractor;
        let mut h = x;
        if let Some(bn) = &self.input_bn {
            h = bn.forward(ctx, h)?;
        }
        let tcnn = !self.blocks.is_empty();
        let states = self.rnn.run(ctx, h, tcnn || extract)?;
        let mut h = states;
        if tcnn {
            let shape = ctx.tape.shape(states).to_vec();
            let (b, t, w) = (shape[0], shape[1], shape[2]);
            h = ctx.tape.reshape(states, [b, t, w, 1])?;
            for block in &self.blocks {
                h = block.forward(ctx, h)?;
            }
            h = if extract {
                let s = ctx.tape.shape(h).to_vec();
                ctx.tape.reshape(h, [b, t, s[2] * s[3]])?
            } else {
                global_average_pool_time(ctx, h)?
            };
        }
        let h = hidden_layer(ctx, &self.fc1, &self.dropout, h)?;
        let mut h = hidden_layer(ctx, &self.fc2, &self.dropout, h)?;
        if let Some(bn) = &self.head_bn {
            h = bn.forward(ctx, h)?;
        }
        self.out.forward(ctx, h)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct TextNet {
    embedding: Embedding,
    input_bn: BatchNorm,
    rnn: Recurrent,
    attention: Option<SelfAttention>,
    fc1: Dense,
    fc2: Dense,
    out: Dense,
    dropout: Dropout,
    head: HeadMode,
}

impl TextNet {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        variant: TextVariant,
        spec: &ModelSpec,
        head: HeadMode,
        table: Tensor<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let bidirectional = matches!(variant, TextVariant::BilstmFc | TextVariant::BilstmAttn);
        let dropout = Dropout::new(spec.dropout)?;
        let dim = table.shape()[1];
        let embedding = Embedding::new(store, &format!("{name}.embedding"), table)?;
        let input_bn = BatchNorm::new(store, &format!("{name}.input_bn"), dim);
        let rnn = Recurrent::new(
            store,
            &format!("{name}.lstm"),
            bidirectional,
            dim,
            TEXT_HIDDEN,
            TEXT_RECURRENT_DROPOUT,
            rng,
        )?;
        let fc1 = Dense::new(store, &format!("{name}.fc1"), rnn.width(), 256, rng);
        let fc2 = Dense::new(store, &format!("{name}.fc2"), 256, 128, rng);
        let attention = (variant == TextVariant::BilstmAttn && head == HeadMode::Classifier)
            .then(|| SelfAttention::new(store, &format!("{name}.attention"), rnn.width(), rng));
        let out = Dense::new(store, &format!("{name}.out"), 128, head_width(head), rng);
        Ok(TextNet {
            embedding,
            input_bn,
            rnn,
            attention,
            fc1,
            fc2,
            out,
            dropout,
            head,
        })
    }

    /// Tokens `[B·window]` → logits `[B, 5]` (with attention weights for the
    /// attention variant) or features `[B, T, 32]`.
    pub(crate) fn forward<T: Real>(&self, ctx: &mut Ctx<T>, tokens: &[usize], batch: usize) -> Result<(Var, Option<Var>)> {
        let x = self.embedding.lookup(ctx, tokens, batch)?;
        let x = self.input_bn.forward(ctx, x)?;
        let return_all = self.head == HeadMode::Extractor || self.attention.is_some();
        let states = self.rnn.run(ctx, x, return_all)?;
        let (h, weights) = match &self.attention {
            Some(att) => {
                let out = att.summarise(ctx, states)?;
                (out.context, Some(out.weights))
            }
            None => (states, None),
        };
        let h = hidden_layer(ctx, &self.fc1, &self.dropout, h)?;
        let h = hidden_layer(ctx, &self.fc2, &self.dropout, h)?;
        Ok((self.out.forward(ctx, h)?, weights))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FusedNet {
    audio: AudioNet,
    text: TextNet,
    align: Option<(SelfAttention, SelfAttention)>,
    fuse: Option<SelfAttention>,
    out: Dense,
}

impl FusedNet {
    pub(crate) fn new<T: Real>(
        store: &mut ParamStore<T>,
        encoder: EncoderKind,
        fusion: FusionKind,
        spec: &ModelSpec,
        table: Tensor<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let (audio_variant, text_variant) = match encoder {
            EncoderKind::Uni => (AudioVariant::LstmTcnn, TextVariant::LstmFc),
            EncoderKind::Bi => (AudioVariant::BilstmTcnn, TextVariant::BilstmFc),
        };
        let audio = AudioNet::new(store, "audio", audio_variant, spec, HeadMode::Extractor, rng)?;
        let text = TextNet::new(store, "text", text_variant, spec, HeadMode::Extractor, table, rng)?;
        for (what, width) in [("audio", audio.out.output), ("text", text.out.output)] {
            if width != EXTRACTOR_WIDTH {
                return Err(Error::config(format!(
                    "{what} extractor emits {width} features, fusion needs {EXTRACTOR_WIDTH}"
                )));
            }
        }
        let align = (fusion != FusionKind::MaxpoolConcat).then(|| {
            (
                SelfAttention::new(store, "fusion.audio_attention", EXTRACTOR_WIDTH, rng),
                SelfAttention::new(store, "fusion.text_attention", EXTRACTOR_WIDTH, rng),
            )
        });
        let fuse = (fusion == FusionKind::AttnAlignFuse)
            .then(|| SelfAttention::new(store, "fusion.modality_attention", EXTRACTOR_WIDTH, rng));
        let joint = if fuse.is_some() { EXTRACTOR_WIDTH } else { 2 * EXTRACTOR_WIDTH };
        let out = Dense::new(store, "fusion.out", joint, NUM_CLASSES, rng);
        Ok(FusedNet {
            audio,
            text,
            align,
            fuse,
            out,
        })
    }

    pub(crate) fn forward<T: Real>(&self, ctx: &mut Ctx<T>, audio: Var, tokens: &[usize], batch: usize) -> Result<ForwardOutput> {
        let a = self.audio.forward(ctx, audio)?;
        let (t, _) = self.text.forward(ctx, tokens, batch)?;
        let (a, t, attention) = match &self.align {
            None => (ctx.tape.max_axis(a, 1)?, ctx.tape.max_axis(t, 1)?, None),
            Some((audio_att, text_att)) => {
                let a = audio_att.summarise(ctx, a)?;
                let t = text_att.summarise(ctx, t)?;
                (a.context, t.context, Some(t.weights))
            }
        };
        let (joint, modality_weights) = match &self.fuse {
            None => (ctx.tape.concat(&[a, t], 1)?, None),
            Some(att) => {
                let both = ctx.tape.stack(&[a, t], 1)?;
                let out = att.summarise(ctx, both)?;
                (out.context, Some(out.weights))
            }
        };
        Ok(ForwardOutput {
            logits: self.out.forward(ctx, joint)?,
            attention,
            modality_weights,
        })
    }
}
