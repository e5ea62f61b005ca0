use std::collections::HashMap;

use super::{split_axis, Real, Tensor};
use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Average,
}

/// Recorded operation together with whatever the backward rule needs.
pub(crate) enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    BatchMatMul {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        a: Var,
        factor: T,
    },
    Tanh {
        a: Var,
    },
    Sigmoid {
        a: Var,
    },
    Relu {
        a: Var,
    },
    Softmax {
        a: Var,
        axis: usize,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    Sum {
        a: Var,
    },
    MeanAxis {
        a: Var,
        axis: usize,
    },
    MaxAxis {
        a: Var,
        argmax: Vec<usize>,
    },
    Reshape {
        a: Var,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Select {
        a: Var,
        axis: usize,
        index: usize,
    },
    Stack {
        inputs: Vec<Var>,
        axis: usize,
    },
    Repeat {
        a: Var,
        axis: usize,
        count: usize,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        cols: Vec<T>,
        kernel: usize,
    },
    Pool1d {
        x: Var,
        size: usize,
        kind: PoolKind,
        argmax: Vec<usize>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    BatchNormFrozen {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        inv_std: Vec<T>,
    },
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// Records one forward pass so it can be replayed in reverse.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward is a single reverse sweep.
pub struct Tape<T: Real> {
    pub(crate) nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    params: HashMap<ParamId, Var>,
    stat_updates: Vec<(ParamId, Vec<T>)>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            params: HashMap::new(),
            stat_updates: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// A leaf that gradients flow into.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Puts a stored parameter on the tape. Repeated calls return the same
    /// node so that gradients from every use accumulate in one place.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.get(id);
        let v = self.push(p.value.clone(), Op::Leaf, p.trainable);
        self.params.insert(id, v);
        v
    }

    /// The node holding parameter `id`, if it has been placed on the tape.
    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.params.get(&id).copied()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` root with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    /// Gradients of every trainable parameter used on this tape.
    pub fn param_grads(&self) -> Vec<(ParamId, &[T])> {
        let mut out: Vec<_> = self
            .params
            .iter()
            .filter_map(|(&id, &v)| self.grads[v.0].as_deref().map(|g| (id, g)))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }

    /// Queues new running-statistic values computed during a training pass.
    pub(crate) fn record_stat_update(&mut self, id: ParamId, values: Vec<T>) {
        self.stat_updates.push((id, values));
    }

    pub fn take_stat_updates(&mut self) -> Vec<(ParamId, Vec<T>)> {
        std::mem::take(&mut self.stat_updates)
    }

    /// Reverse sweep from a scalar root. Gradients accumulate additively
    /// over every path; only leaf gradients are retained afterwards.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar root, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        self.grads[root.0] = Some(vec![T::one()]);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            backprop(&self.nodes, &mut self.grads, i, &g);
        }
        Ok(())
    }
}

/// Gradient buffer for `v`, allocated on first use; `None` for constants.
fn slot<'a, T: Real>(
    nodes: &[Node<T>],
    grads: &'a mut [Option<Vec<T>>],
    v: Var,
) -> Option<&'a mut Vec<T>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
}

fn backprop<T: Real>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], i: usize, g: &[T]) {
    let out = &nodes[i].value;
    let val = |v: Var| &nodes[v.0].value;
    match &nodes[i].op {
        Op::Leaf => {}
        Op::MatMul { a, b, trans_b } => {
            let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
            let n = out.shape()[1];
            let (ad, bd) = (val(*a).data(), val(*b).data());
            let one = T::one();
            if let Some(ga) = slot(nodes, grads, *a) {
                if *trans_b {
                    // b is [n, k]
                    T::gemm(m, n, k, one, g, n as isize, 1, bd, k as isize, 1, one, ga, k as isize, 1);
                } else {
                    T::gemm(m, n, k, one, g, n as isize, 1, bd, 1, n as isize, one, ga, k as isize, 1);
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                if *trans_b {
                    T::gemm(n, m, k, one, g, 1, n as isize, ad, k as isize, 1, one, gb, k as isize, 1);
                } else {
                    T::gemm(k, m, n, one, ad, 1, k as isize, g, n as isize, 1, one, gb, n as isize, 1);
                }
            }
        }
        Op::BatchMatMul { a, b } => {
            let (batch, m, k) = (val(*a).shape()[0], val(*a).shape()[1], val(*a).shape()[2]);
            let n = out.shape()[2];
            let (ad, bd) = (val(*a).data(), val(*b).data());
            let one = T::one();
            if let Some(ga) = slot(nodes, grads, *a) {
                for s in 0..batch {
                    T::gemm(
                        m,
                        n,
                        k,
                        one,
                        &g[s * m * n..],
                        n as isize,
                        1,
                        &bd[s * k * n..],
                        1,
                        n as isize,
                        one,
                        &mut ga[s * m * k..],
                        k as isize,
                        1,
                    );
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for s in 0..batch {
                    T::gemm(
                        k,
                        m,
                        n,
                        one,
                        &ad[s * m * k..],
                        1,
                        k as isize,
                        &g[s * m * n..],
                        n as isize,
                        1,
                        one,
                        &mut gb[s * k * n..],
                        n as isize,
                        1,
                    );
                }
            }
        }
        Op::Add { a, b } | Op::Sub { a, b } => {
            let neg = matches!(nodes[i].op, Op::Sub { .. });
            if let Some(ga) = slot(nodes, grads, *a) {
                let na = ga.len();
                for (j, &gj) in g.iter().enumerate() {
                    ga[j % na] += gj;
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                let nb = gb.len();
                for (j, &gj) in g.iter().enumerate() {
                    if neg {
                        gb[j % nb] -= gj;
                    } else {
                        gb[j % nb] += gj;
                    }
                }
            }
        }
        Op::Mul { a, b } => {
            let (ad, bd) = (val(*a).data(), val(*b).data());
            let (na, nb) = (ad.len(), bd.len());
            if let Some(ga) = slot(nodes, grads, *a) {
                for (j, &gj) in g.iter().enumerate() {
                    ga[j % na] += gj * bd[j % nb];
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for (j, &gj) in g.iter().enumerate() {
                    gb[j % nb] += gj * ad[j % na];
                }
            }
        }
        Op::Scale { a, factor } => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for (x, &gj) in ga.iter_mut().zip(g) {
                    *x += gj * *factor;
                }
            }
        }
        Op::Tanh { a } => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for ((x, &gj), &y) in ga.iter_mut().zip(g).zip(out.data()) {
                    *x += gj * (T::one() - y * y);
                }
            }
        }
        Op::Sigmoid { a } => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for ((x, &gj), &y) in ga.iter_mut().zip(g).zip(out.data()) {
                    *x += gj * y * (T::one() - y);
                }
            }
        }
        Op::Relu { a } => {
            let ad = val(*a).data();
            if let Some(ga) = slot(nodes, grads, *a) {
                for ((x, &gj), &xin) in ga.iter_mut().zip(g).zip(ad) {
                    if xin > T::zero() {
                        *x += gj;
                    }
                }
            }
        }
        Op::Softmax { a, axis } => {
            let (outer, n, inner) = split_axis(out.shape(), *axis);
            let y = out.data();
            if let Some(ga) = slot(nodes, grads, *a) {
                for o in 0..outer {
                    for q in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + q;
                        let s: T = (0..n).map(|j| g[idx(j)] * y[idx(j)]).sum();
                        for j in 0..n {
                            ga[idx(j)] += y[idx(j)] * (g[idx(j)] - s);
                        }
                    }
                }
            }
        }
        Op::CrossEntropy {
            logits,
            labels,
            probs,
        } => {
            let k = val(*logits).shape()[1];
            let scale = g[0] / T::from_usize(labels.len());
            if let Some(gl) = slot(nodes, grads, *logits) {
                for (r, &label) in labels.iter().enumerate() {
                    for c in 0..k {
                        let ind = if c == label { T::one() } else { T::zero() };
                        gl[r * k + c] += scale * (probs[r * k + c] - ind);
                    }
                }
            }
        }
        Op::Sum { a } => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for x in ga.iter_mut() {
                    *x += g[0];
                }
            }
        }
        Op::MeanAxis { a, axis } => {
            let (outer, n, inner) = split_axis(val(*a).shape(), *axis);
            let inv = T::one() / T::from_usize(n);
            if let Some(ga) = slot(nodes, grads, *a) {
                for o in 0..outer {
                    for j in 0..n {
                        for q in 0..inner {
                            ga[(o * n + j) * inner + q] += g[o * inner + q] * inv;
                        }
                    }
                }
            }
        }
        Op::MaxAxis { a, argmax } => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for (&src, &gj) in argmax.iter().zip(g) {
                    ga[src] += gj;
                }
            }
        }
        Op::Reshape { a } => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for (x, &gj) in ga.iter_mut().zip(g) {
                    *x += gj;
                }
            }
        }
        Op::Concat { inputs, axis } => {
            let (outer, total, inner) = split_axis(out.shape(), *axis);
            let mut offset = 0;
            for &v in inputs {
                let n = val(v).shape()[*axis];
                if let Some(gv) = slot(nodes, grads, v) {
                    for o in 0..outer {
                        let src = &g[(o * total + offset) * inner..(o * total + offset + n) * inner];
                        for (x, &gj) in gv[o * n * inner..(o + 1) * n * inner].iter_mut().zip(src) {
                            *x += gj;
                        }
                    }
                }
                offset += n;
            }
        }
        Op::Select { a, axis, index } => {
            let (outer, n, inner) = split_axis(val(*a).shape(), *axis);
            if let Some(ga) = slot(nodes, grads, *a) {
                for o in 0..outer {
                    let dst = &mut ga[(o * n + index) * inner..(o * n + index + 1) * inner];
                    for (x, &gj) in dst.iter_mut().zip(&g[o * inner..(o + 1) * inner]) {
                        *x += gj;
                    }
                }
            }
        }
        Op::Stack { inputs, axis } => {
            let (outer, count, inner) = split_axis(out.shape(), *axis);
            for (s, &v) in inputs.iter().enumerate() {
                if let Some(gv) = slot(nodes, grads, v) {
                    for o in 0..outer {
                        let src = &g[(o * count + s) * inner..(o * count + s + 1) * inner];
                        for (x, &gj) in gv[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                            *x += gj;
                        }
                    }
                }
            }
        }
        Op::Repeat { a, axis, count } => {
            let (outer, _, inner) = split_axis(out.shape(), *axis);
            if let Some(ga) = slot(nodes, grads, *a) {
                for o in 0..outer {
                    for s in 0..*count {
                        let src = &g[(o * count + s) * inner..(o * count + s + 1) * inner];
                        for (x, &gj) in ga[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                            *x += gj;
                        }
                    }
                }
            }
        }
        Op::Conv1d {
            x,
            w,
            b,
            cols,
            kernel,
        } => {
            let xs = val(*x).shape();
            let (n, f, cin) = (xs[0], xs[1], xs[2]);
            let cout = out.shape()[2];
            let rows = n * f;
            let kc = kernel * cin;
            let one = T::one();
            if let Some(gw) = slot(nodes, grads, *w) {
                T::gemm(kc, rows, cout, one, cols, 1, kc as isize, g, cout as isize, 1, one, gw, cout as isize, 1);
            }
            if let Some(bv) = b {
                if let Some(gb) = slot(nodes, grads, *bv) {
                    for r in 0..rows {
                        for (x, &gj) in gb.iter_mut().zip(&g[r * cout..(r + 1) * cout]) {
                            *x += gj;
                        }
                    }
                }
            }
            if nodes[x.0].requires_grad {
                let wd = val(*w).data();
                let mut gcols = vec![T::zero(); rows * kc];
                T::gemm(rows, cout, kc, one, g, cout as isize, 1, wd, 1, cout as isize, T::zero(), &mut gcols, kc as isize, 1);
                let gx = slot(nodes, grads, *x).expect("requires grad");
                let pad = (kernel - 1) / 2;
                for s in 0..n {
                    for pos in 0..f {
                        let row = &gcols[(s * f + pos) * kc..(s * f + pos + 1) * kc];
                        for t in 0..*kernel {
                            let src = pos as isize + t as isize - pad as isize;
                            if src < 0 || src >= f as isize {
                                continue;
                            }
                            let dst = &mut gx[(s * f + src as usize) * cin..(s * f + src as usize + 1) * cin];
                            for (d, &v) in dst.iter_mut().zip(&row[t * cin..(t + 1) * cin]) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
        Op::Pool1d {
            x,
            size,
            kind,
            argmax,
        } => {
            let xs = val(*x).shape();
            let (n, f, c) = (xs[0], xs[1], xs[2]);
            let fo = out.shape()[1];
            if let Some(gx) = slot(nodes, grads, *x) {
                match kind {
                    PoolKind::Max => {
                        for (&src, &gj) in argmax.iter().zip(g) {
                            gx[src] += gj;
                        }
                    }
                    PoolKind::Average => {
                        for s in 0..n {
                            for j in 0..fo {
                                let lo = j * size;
                                let hi = (lo + size).min(f);
                                let inv = T::one() / T::from_usize(hi - lo);
                                for ch in 0..c {
                                    let gj = g[(s * fo + j) * c + ch] * inv;
                                    for pos in lo..hi {
                                        gx[(s * f + pos) * c + ch] += gj;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        } => {
            let c = inv_std.len();
            let m = xhat.len() / c;
            let mut sum_g = vec![T::zero(); c];
            let mut sum_gx = vec![T::zero(); c];
            for r in 0..m {
                for ch in 0..c {
                    let gj = g[r * c + ch];
                    sum_g[ch] += gj;
                    sum_gx[ch] += gj * xhat[r * c + ch];
                }
            }
            if let Some(gb) = slot(nodes, grads, *beta) {
                for (x, &s) in gb.iter_mut().zip(&sum_g) {
                    *x += s;
                }
            }
            if let Some(gg) = slot(nodes, grads, *gamma) {
                for (x, &s) in gg.iter_mut().zip(&sum_gx) {
                    *x += s;
                }
            }
            let gam = val(*gamma).data();
            if let Some(gx) = slot(nodes, grads, *x) {
                let mf = T::from_usize(m);
                for r in 0..m {
                    for ch in 0..c {
                        let j = r * c + ch;
                        gx[j] += gam[ch] * inv_std[ch] / mf
                            * (mf * g[j] - sum_g[ch] - xhat[j] * sum_gx[ch]);
                    }
                }
            }
        }
        Op::BatchNormFrozen {
            x,
            gamma,
            beta,
            mean,
            inv_std,
        } => {
            let c = inv_std.len();
            let xd = val(*x).data();
            let gam = val(*gamma).data();
            if let Some(gb) = slot(nodes, grads, *beta) {
                for (j, &gj) in g.iter().enumerate() {
                    gb[j % c] += gj;
                }
            }
            if let Some(gg) = slot(nodes, grads, *gamma) {
                for (j, &gj) in g.iter().enumerate() {
                    let ch = j % c;
                    gg[ch] += gj * (xd[j] - mean[ch]) * inv_std[ch];
                }
            }
            if let Some(gx) = slot(nodes, grads, *x) {
                for (j, &gj) in g.iter().enumerate() {
                    let ch = j % c;
                    gx[j] += gj * gam[ch] * inv_std[ch];
                }
            }
        }
    }
}
