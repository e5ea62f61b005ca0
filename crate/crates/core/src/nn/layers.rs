use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Ctx, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor, Var};

/// Affine map over the last axis: `y = x · W + b`, `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = store.add_glorot(format!("{name}.weight"), &[input, output], input, output, rng);
        let b = store.add_constant(format!("{name}.bias"), &[output], 0.0, true);
        Dense { w, b, input, output }
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let shape = ctx.tape.shape(x).to_vec();
        if shape.last() != Some(&self.input) {
            return Err(Error::shape("dense", &shape, &[self.input, self.output]));
        }
        let rows = shape.iter().product::<usize>() / self.input;
        let flat = ctx.tape.reshape(x, [rows, self.input])?;
        let w = ctx.param(self.w);
        let b = ctx.param(self.b);
        let y = ctx.tape.matmul(flat, w)?;
        let y = ctx.tape.add(y, b)?;
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.output;
        ctx.tape.reshape(y, out_shape)
    }
}

/// Inverted dropout: active only in training mode, kept units scaled by
/// `1 / (1 - rate)`.
#[derive(Clone, Copy, Debug)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate must lie in [0, 1), got {rate}")));
        }
        Ok(Dropout { rate })
    }

    /// Random keep-mask already multiplied by the rescaling factor.
    pub fn mask<T: Real>(&self, rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<T> {
        let keep = 1.0 - self.rate;
        let scale = T::from_f64(1.0 / keep);
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
            .collect();
        Tensor::new(shape.to_vec(), data).expect("mask shape")
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        if !ctx.training || self.rate == 0.0 {
            return Ok(x);
        }
        let shape = ctx.tape.shape(x).to_vec();
        let mask = self.mask(&mut ctx.rng, &shape);
        let m = ctx.tape.constant(mask);
        ctx.tape.mul(x, m)
    }
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

/// Batch normalisation over the last (channel) axis.
///
/// Running statistics follow `r ← m·r + (1 − m)·batch`, except that the
/// first training batch initialises them directly.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub batches_seen: ParamId,
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        BatchNorm {
            gamma: store.add_constant(format!("{name}.gamma"), &[channels], 1.0, true),
            beta: store.add_constant(format!("{name}.beta"), &[channels], 0.0, true),
            running_mean: store.add_constant(format!("{name}.running_mean"), &[channels], 0.0, false),
            running_var: store.add_constant(format!("{name}.running_var"), &[channels], 1.0, false),
            batches_seen: store.add_constant(format!("{name}.batches_seen"), &[1], 0.0, false),
            channels,
            eps: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let shape = ctx.tape.shape(x);
        if shape.last() != Some(&self.channels) {
            return Err(Error::shape("batch_norm", shape, &[self.channels]));
        }
        let gamma = ctx.param(self.gamma);
        let beta = ctx.param(self.beta);
        let eps = T::from_f64(self.eps);
        if ctx.training {
            let (y, mean, var) = ctx.tape.batch_norm_train(x, gamma, beta, eps)?;
            let seen = ctx.params.get(self.batches_seen).value.data()[0];
            let (new_mean, new_var) = if seen == T::zero() {
                (mean, var)
            } else {
                let m = T::from_f64(self.momentum);
                let blend = |old: &[T], new: Vec<T>| -> Vec<T> {
                    old.iter().zip(new).map(|(&o, n)| m * o + (T::one() - m) * n).collect()
                };
                (
                    blend(ctx.params.get(self.running_mean).value.data(), mean),
                    blend(ctx.params.get(self.running_var).value.data(), var),
                )
            };
            ctx.tape.record_stat_update(self.running_mean, new_mean);
            ctx.tape.record_stat_update(self.running_var, new_var);
            ctx.tape.record_stat_update(self.batches_seen, vec![seen + T::one()]);
            Ok(y)
        } else {
            let mean = ctx.params.get(self.running_mean).value.data().to_vec();
            let var = ctx.params.get(self.running_var).value.data().to_vec();
            ctx.tape.batch_norm_frozen(x, gamma, beta, &mean, &var, eps)
        }
    }
}

/// Frozen lookup table; row 0 is the padding row.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, table: Tensor<T>) -> Result<Self> {
        if table.rank() != 2 {
            return Err(Error::config(format!("embedding table must be 2-D, got {:?}", table.shape())));
        }
        let (rows, dim) = (table.shape()[0], table.shape()[1]);
        let table = store.add(format!("{name}.table"), table, false);
        Ok(Embedding { table, rows, dim })
    }

    /// Maps `[batch, len]` token indices to a constant `[batch, len, dim]`.
    pub fn lookup<T: Real>(&self, ctx: &mut Ctx<T>, tokens: &[usize], batch: usize) -> Result<Var> {
        if batch == 0 || tokens.is_empty() || tokens.len() % batch != 0 {
            return Err(Error::usage(format!("{} tokens do not split into {batch} rows", tokens.len())));
        }
        let table = ctx.params.get(self.table).value.data();
        let mut data = Vec::with_capacity(tokens.len() * self.dim);
        for &t in tokens {
            if t >= self.rows {
                return Err(Error::OutOfRange {
                    what: "embedding index",
                    value: t as i64,
                    valid: format!("0..{}", self.rows),
                });
            }
            data.extend_from_slice(&table[t * self.dim..(t + 1) * self.dim]);
        }
        let value = Tensor::new([batch, tokens.len() / batch, self.dim], data)?;
        Ok(ctx.tape.constant(value))
    }
}

/// Mean over the time axis of `[B, T, F, C]`, flattened to `[B, F·C]`.
pub fn global_average_pool_time<T: Real>(ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
    let shape = ctx.tape.shape(x).to_vec();
    if shape.len() < 3 {
        return Err(Error::usage(format!("time pooling needs [B, T, ...], got {shape:?}")));
    }
    let pooled = ctx.tape.mean_axis(x, 1)?;
    let batch = shape[0];
    let rest: usize = shape[2..].iter().product();
    ctx.tape.reshape(pooled, [batch, rest])
}
