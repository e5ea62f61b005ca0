use rand_chacha::ChaCha8Rng;

use super::{Ctx, Dropout, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Real, Var};

/// Gate order used for every per-gate array: input, forget, output, and the
/// input-modulation gate.
pub const GATES: [&str; 4] = ["i", "f", "o", "g"];

const FORGET: usize = 1;
const MODULATION: usize = 3;

/// One LSTM cell: `W_*: [hidden, input]`, `U_*: [hidden, hidden]`,
/// `b_*: [hidden]` for each gate in [`GATES`] order.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
    pub input: usize,
    pub hidden: usize,
    /// Dropout applied to `h_{t-1}` before the recurrent product.
    pub recurrent_dropout: f64,
}

impl LstmCell {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        recurrent_dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::config("lstm sizes must be positive"));
        }
        Dropout::new(recurrent_dropout)?;
        let mut w = [ParamId(0); 4];
        let mut u = [ParamId(0); 4];
        let mut b = [ParamId(0); 4];
        for (g, gate) in GATES.iter().enumerate() {
            w[g] = store.add_glorot(format!("{name}.W_{gate}"), &[hidden, input], input, hidden, rng);
            u[g] = store.add_glorot(format!("{name}.U_{gate}"), &[hidden, hidden], hidden, hidden, rng);
            let bias = if g == FORGET { 1.0 } else { 0.0 };
            b[g] = store.add_constant(format!("{name}.b_{gate}"), &[hidden], bias, true);
        }
        Ok(LstmCell {
            w,
            u,
            b,
            input,
            hidden,
            recurrent_dropout,
        })
    }

    fn check_params<T: Real>(&self, store: &ParamStore<T>) -> Result<()> {
        for (g, gate) in GATES.iter().enumerate() {
            let checks = [
                (self.w[g], [self.hidden, self.input].to_vec(), "W"),
                (self.u[g], [self.hidden, self.hidden].to_vec(), "U"),
                (self.b[g], [self.hidden].to_vec(), "b"),
            ];
            for (id, want, kind) in checks {
                let got = store.get(id).value.shape();
                if got != want.as_slice() {
                    return Err(Error::config(format!(
                        "lstm {kind}_{gate} ({} gate) has shape {got:?}, expected {want:?}",
                        gate_name(g)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Input projections `x · W_gᵀ` for a `[rows, input]` operand.
    fn project<T: Real>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<[Var; 4]> {
        let width = ctx.tape.shape(x)[1];
        if width != self.input {
            return Err(Error::config(format!(
                "lstm input gate W_i expects {} features, got {width}",
                self.input
            )));
        }
        let mut out = [x; 4];
        for g in 0..4 {
            let w = ctx.param(self.w[g]);
            out[g] = ctx.tape.matmul_ext(x, w, true)?;
        }
        Ok(out)
    }

    /// Gate arithmetic given precomputed input projections.
    fn advance<T: Real>(
        &self,
        ctx: &mut Ctx<T>,
        xw: [Var; 4],
        h_prev: Var,
        c_prev: Var,
        h_mask: Option<Var>,
    ) -> Result<(Var, Var)> {
        let h_in = match h_mask {
            Some(m) => ctx.tape.mul(h_prev, m)?,
            None => h_prev,
        };
        let mut act = [h_prev; 4];
        for g in 0..4 {
            let u = ctx.param(self.u[g]);
            let b = ctx.param(self.b[g]);
            let rec = ctx.tape.matmul_ext(h_in, u, true)?;
            let pre = ctx.tape.add(xw[g], rec)?;
            let pre = ctx.tape.add(pre, b)?;
            act[g] = if g == MODULATION {
                ctx.tape.tanh(pre)
            } else {
                ctx.tape.sigmoid(pre)
            };
        }
        let [i, f, o, g] = act;
        let keep = ctx.tape.mul(f, c_prev)?;
        let write = ctx.tape.mul(i, g)?;
        let c = ctx.tape.add(keep, write)?;
        let squashed = ctx.tape.tanh(c);
        let h = ctx.tape.mul(o, squashed)?;
        Ok((h, c))
    }

    fn recurrent_mask<T: Real>(&self, ctx: &mut Ctx<T>, batch: usize) -> Option<Var> {
        if !ctx.training || self.recurrent_dropout == 0.0 {
            return None;
        }
        let mask = Dropout {
            rate: self.recurrent_dropout,
        }
        .mask(&mut ctx.rng, &[batch, self.hidden]);
        Some(ctx.tape.constant(mask))
    }

    /// Runs over `[B, T, input]` in the given time order, returning the
    /// hidden state after each visited step (in visiting order).
    fn scan<T: Real>(&self, ctx: &mut Ctx<T>, seq: Var, reverse: bool) -> Result<Vec<Var>> {
        self.check_params(ctx.params)?;
        let shape = ctx.tape.shape(seq).to_vec();
        if shape.len() != 3 {
            return Err(Error::usage(format!("lstm expects [batch, time, features], got {shape:?}")));
        }
        let (batch, steps, width) = (shape[0], shape[1], shape[2]);
        if width != self.input {
            return Err(Error::config(format!(
                "lstm input gate W_i expects {} features, got {width}",
                self.input
            )));
        }
        let flat = ctx.tape.reshape(seq, [batch * steps, width])?;
        let proj = self.project(ctx, flat)?;
        let mut proj3 = proj;
        for g in 0..4 {
            proj3[g] = ctx.tape.reshape(proj[g], [batch, steps, self.hidden])?;
        }
        let mask = self.recurrent_mask(ctx, batch);
        let zeros = crate::tensor::Tensor::zeros([batch, self.hidden]);
        let mut h = ctx.tape.constant(zeros.clone());
        let mut c = ctx.tape.constant(zeros);
        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        let mut states = Vec::with_capacity(steps);
        for t in order {
            let mut xw = proj3;
            for g in 0..4 {
                xw[g] = ctx.tape.select(proj3[g], 1, t)?;
            }
            (h, c) = self.advance(ctx, xw, h, c, mask)?;
            states.push(h);
        }
        Ok(states)
    }
}

fn gate_name(g: usize) -> &'static str {
    ["input", "forget", "output", "modulation"][g]
}

/// One recurrence step on `[B, input]` (or `[input]`) with states
/// `[B, hidden]` (or `[hidden]`).
pub fn lstm_step<T: Real>(
    ctx: &mut Ctx<T>,
    cell: &LstmCell,
    x_t: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    cell.check_params(ctx.params)?;
    let as_rows = |ctx: &mut Ctx<T>, v: Var, width: usize, what: &str| -> Result<Var> {
        let s = ctx.tape.shape(v).to_vec();
        match s.as_slice() {
            [w] if *w == width => ctx.tape.reshape(v, [1, width]),
            [_, w] if *w == width => Ok(v),
            _ => Err(Error::config(format!("lstm {what} has shape {s:?}, expected width {width}"))),
        }
    };
    let vector = ctx.tape.shape(x_t).len() == 1;
    let x = as_rows(ctx, x_t, cell.input, "input (gate W_i)")?;
    let h = as_rows(ctx, h_prev, cell.hidden, "hidden state (gate U_i)")?;
    let c = as_rows(ctx, c_prev, cell.hidden, "cell state")?;
    let rows = ctx.tape.shape(x)[0];
    if ctx.tape.shape(h)[0] != rows || ctx.tape.shape(c)[0] != rows {
        return Err(Error::config("lstm batch sizes of input and states differ"));
    }
    let xw = cell.project(ctx, x)?;
    let mask = cell.recurrent_mask(ctx, rows);
    let (h, c) = cell.advance(ctx, xw, h, c, mask)?;
    if vector {
        let h = ctx.tape.reshape(h, [cell.hidden])?;
        let c = ctx.tape.reshape(c, [cell.hidden])?;
        return Ok((h, c));
    }
    Ok((h, c))
}

/// Runs the cell over `[B, T, input]` from zero initial states. Returns
/// `[B, T, hidden]` when `return_all`, otherwise the final `[B, hidden]`.
pub fn run_lstm<T: Real>(ctx: &mut Ctx<T>, cell: &LstmCell, seq: Var, return_all: bool) -> Result<Var> {
    let states = cell.scan(ctx, seq, false)?;
    if return_all {
        ctx.tape.stack(&states, 1)
    } else {
        Ok(*states.last().expect("non-empty"))
    }
}

/// Forward and backward cells with equal hidden size.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

impl BiLstm {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        recurrent_dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(BiLstm {
            forward: LstmCell::new(store, &format!("{name}.fwd"), input, hidden, recurrent_dropout, rng)?,
            backward: LstmCell::new(store, &format!("{name}.bwd"), input, hidden, recurrent_dropout, rng)?,
        })
    }

    pub fn output_width(&self) -> usize {
        2 * self.forward.hidden
    }
}

/// Bidirectional pass over `[B, T, input]`.
///
/// With `return_all`, row `t` of the `[B, T, 2·hidden]` output is the
/// forward state at `t` next to the backward state that has consumed
/// `x_{T-1} .. x_t`. Otherwise the two final states are concatenated into
/// `[B, 2·hidden]`.
pub fn run_bilstm<T: Real>(ctx: &mut Ctx<T>, bi: &BiLstm, seq: Var, return_all: bool) -> Result<Var> {
    if bi.forward.hidden != bi.backward.hidden {
        return Err(Error::config(format!(
            "bi-lstm hidden sizes differ: {} vs {}",
            bi.forward.hidden, bi.backward.hidden
        )));
    }
    let fwd = bi.forward.scan(ctx, seq, false)?;
    let mut bwd = bi.backward.scan(ctx, seq, true)?;
    if !return_all {
        let (f, b) = (*fwd.last().unwrap(), *bwd.last().unwrap());
        return ctx.tape.concat(&[f, b], 1);
    }
    bwd.reverse();
    let f = ctx.tape.stack(&fwd, 1)?;
    let b = ctx.tape.stack(&bwd, 1)?;
    ctx.tape.concat(&[f, b], 2)
}
