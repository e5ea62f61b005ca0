use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BatchNorm, Ctx, ParamId, ParamStore, PoolKind};
use crate::error::{Error, Result};
use crate::tensor::{Real, Var};

/// Kernel counts of the five blocks in the proposed audio model.
pub const PROPOSED_KERNEL_COUNTS: [usize; 5] = [64, 64, 64, 128, 256];
/// Kernel sizes of the five blocks in the proposed audio model.
pub const PROPOSED_KERNEL_SIZES: [usize; 5] = [3, 3, 3, 3, 9];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcnnBlockConfig {
    pub kernel_count: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub pool: PoolChoice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolChoice {
    Max,
    Average,
}

impl From<PoolChoice> for PoolKind {
    fn from(p: PoolChoice) -> Self {
        match p {
            PoolChoice::Max => PoolKind::Max,
            PoolChoice::Average => PoolKind::Average,
        }
    }
}

impl TcnnBlockConfig {
    /// The five-block stack: pool 2 in every block, max pooling.
    pub fn proposed() -> Vec<TcnnBlockConfig> {
        PROPOSED_KERNEL_COUNTS
            .iter()
            .zip(PROPOSED_KERNEL_SIZES)
            .map(|(&kernel_count, kernel_size)| TcnnBlockConfig {
                kernel_count,
                kernel_size,
                pool_size: 2,
                pool: PoolChoice::Max,
            })
            .collect()
    }

    /// Feature extent after this block's pooling.
    pub fn output_features(&self, features: usize) -> usize {
        features.div_ceil(self.pool_size)
    }
}

/// Time-distributed convolution → pooling → batch normalisation.
///
/// Operates on `[B, T, F, C]`: every timestep is convolved along the
/// feature axis with the same kernels.
#[derive(Clone, Debug)]
pub struct TcnnBlock {
    pub kernels: ParamId,
    pub bias: ParamId,
    pub norm: BatchNorm,
    pub cfg: TcnnBlockConfig,
    pub in_channels: usize,
}

impl TcnnBlock {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        cfg: TcnnBlockConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if cfg.kernel_count == 0 || cfg.kernel_size == 0 || cfg.pool_size == 0 || in_channels == 0 {
            return Err(Error::config(format!("invalid T-CNN block {cfg:?}")));
        }
        let (k, cout) = (cfg.kernel_size, cfg.kernel_count);
        let kernels = store.add_glorot(
            format!("{name}.kernels"),
            &[k, in_channels, cout],
            k * in_channels,
            k * cout,
            rng,
        );
        let bias = store.add_constant(format!("{name}.bias"), &[cout], 0.0, true);
        let norm = BatchNorm::new(store, &format!("{name}.bn"), cout);
        Ok(TcnnBlock {
            kernels,
            bias,
            norm,
            cfg,
            in_channels,
        })
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let shape = ctx.tape.shape(x).to_vec();
        if shape.len() != 4 || shape[3] != self.in_channels {
            return Err(Error::shape("tcnn_block", &shape, &[self.in_channels]));
        }
        let (b, t, f) = (shape[0], shape[1], shape[2]);
        let f_out = self.cfg.output_features(f);
        if f_out == 0 {
            return Err(Error::config("T-CNN pooling leaves no features"));
        }
        let flat = ctx.tape.reshape(x, [b * t, f, self.in_channels])?;
        let w = ctx.param(self.kernels);
        let bias = ctx.param(self.bias);
        let conv = ctx.tape.conv1d(flat, w, Some(bias))?;
        let pooled = ctx.tape.pool1d(conv, self.cfg.pool_size, self.cfg.pool.into())?;
        let y = ctx.tape.reshape(pooled, [b, t, f_out, self.cfg.kernel_count])?;
        self.norm.forward(ctx, y)
    }
}

/// Feature extents produced by a stack of blocks.
pub fn stack_output_features(features: usize, blocks: &[TcnnBlockConfig]) -> usize {
    blocks.iter().fold(features, |f, b| b.output_features(f))
}
