//! Additive attention.
//!
//! Scores are `e_j = vᵀ tanh(W_s·q + W_h·h_j)`, weights `α = softmax(e)` and
//! the context vector is `Σ_j α_j h_j`. For sequence classification there is
//! no decoder state, so [`SelfAttention`] supplies a trained query vector.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Ctx, ParamId, ParamStore};
use crate::tensor::{Real, Tensor, Var};

#[derive(Clone, Debug)]
pub struct AttentionParams {
    /// `[score_dim, query_dim]`
    pub w_s: ParamId,
    /// `[score_dim, hidden_dim]`
    pub w_h: ParamId,
    /// `[score_dim]`
    pub v: ParamId,
    pub query_dim: usize,
    pub hidden_dim: usize,
    pub score_dim: usize,
}

/// Context vectors `[B, hidden]` and weights `[B, T]` (unbatched inputs give
/// `[hidden]` and `[T]`).
#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    pub context: Var,
    pub weights: Var,
}

impl AttentionParams {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        query_dim: usize,
        hidden_dim: usize,
        score_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w_s = store.add_glorot(format!("{name}.W_s"), &[score_dim, query_dim], query_dim, score_dim, rng);
        let w_h = store.add_glorot(format!("{name}.W_h"), &[score_dim, hidden_dim], hidden_dim, score_dim, rng);
        let v = store.add_glorot(format!("{name}.v"), &[score_dim], score_dim, 1, rng);
        AttentionParams {
            w_s,
            w_h,
            v,
            query_dim,
            hidden_dim,
            score_dim,
        }
    }
}

/// Attends over `states` (`[B, T, hidden]` or `[T, hidden]`) with `query`
/// (`[B, query]` or a single `[query]` shared by every row).
pub fn attend<T: Real>(ctx: &mut Ctx<T>, p: &AttentionParams, query: Var, states: Var) -> Result<AttentionOutput> {
    let s_shape = ctx.tape.shape(states).to_vec();
    let unbatched = s_shape.len() == 2;
    let (batch, steps, hidden) = match s_shape.as_slice() {
        [t, h] => (1, *t, *h),
        [b, t, h] => (*b, *t, *h),
        _ => return Err(Error::usage(format!("attention states must be [B, T, H], got {s_shape:?}"))),
    };
    if hidden != p.hidden_dim {
        return Err(Error::shape("attend", &s_shape, &[p.hidden_dim]));
    }
    let q_shape = ctx.tape.shape(query).to_vec();
    let shared_query = match q_shape.as_slice() {
        [q] if *q == p.query_dim => true,
        [b, q] if *q == p.query_dim && *b == batch => false,
        _ => return Err(Error::shape("attend query", &q_shape, &[batch, p.query_dim])),
    };

    let w_h = ctx.param(p.w_h);
    let w_s = ctx.param(p.w_s);
    let v = ctx.param(p.v);

    let flat = ctx.tape.reshape(states, [batch * steps, hidden])?;
    let keys = ctx.tape.matmul_ext(flat, w_h, true)?;
    let keys = ctx.tape.reshape(keys, [batch, steps, p.score_dim])?;

    let q_rows = if shared_query {
        ctx.tape.reshape(query, [1, p.query_dim])?
    } else {
        query
    };
    let q_proj = ctx.tape.matmul_ext(q_rows, w_s, true)?;
    let q_proj = if shared_query {
        ctx.tape.reshape(q_proj, [p.score_dim])?
    } else {
        ctx.tape.repeat(q_proj, 1, steps)?
    };
    let pre = ctx.tape.add(keys, q_proj)?;
    let act = ctx.tape.tanh(pre);
    let act = ctx.tape.reshape(act, [batch * steps, p.score_dim])?;
    let v_col = ctx.tape.reshape(v, [p.score_dim, 1])?;
    let scores = ctx.tape.matmul(act, v_col)?;
    let scores = ctx.tape.reshape(scores, [batch, steps])?;
    let weights = ctx.tape.softmax(scores, 1)?;

    let w3 = ctx.tape.reshape(weights, [batch, 1, steps])?;
    let s3 = ctx.tape.reshape(states, [batch, steps, hidden])?;
    let context = ctx.tape.batch_matmul(w3, s3)?;
    let context = ctx.tape.reshape(context, [batch, hidden])?;

    if unbatched {
        Ok(AttentionOutput {
            context: ctx.tape.reshape(context, [hidden])?,
            weights: ctx.tape.reshape(weights, [steps])?,
        })
    } else {
        Ok(AttentionOutput { context, weights })
    }
}

/// Attention with a learned constant query, summarising a sequence into one
/// context vector.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub params: AttentionParams,
    pub query: ParamId,
}

impl SelfAttention {
    /// Query and score dimensions both default to `hidden_dim`.
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let params = AttentionParams::new(store, name, hidden_dim, hidden_dim, hidden_dim, rng);
        let limit = (6.0 / (hidden_dim + 1) as f64).sqrt();
        let q: Vec<T> = (0..hidden_dim).map(|_| T::from_f64(rng.random_range(-limit..limit))).collect();
        let query = store.add(format!("{name}.query"), Tensor::new([hidden_dim], q).expect("query"), true);
        SelfAttention { params, query }
    }

    pub fn summarise<T: Real>(&self, ctx: &mut Ctx<T>, states: Var) -> Result<AttentionOutput> {
        self_summary(ctx, self, states)
    }
}

pub fn self_summary<T: Real>(ctx: &mut Ctx<T>, att: &SelfAttention, states: Var) -> Result<AttentionOutput> {
    let q = ctx.param(att.query);
    attend(ctx, &att.params, q, states)
}
