//! Forward rules. Each op validates shapes, computes its value, and records
//! itself on the tape together with what its backward rule needs.

use super::tape::{Op, PoolKind};
use super::{split_axis, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

/// Shape of `a (op) b` under trailing-dimension broadcasting: the smaller
/// operand's shape must equal a suffix of the larger one's.
fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a == b {
        return Ok(a.to_vec());
    }
    let (na, nb) = (a.iter().product::<usize>(), b.iter().product::<usize>());
    let (big, small) = if na >= nb { (a, b) } else { (b, a) };
    let lead = small.iter().take_while(|&&d| d == 1).count();
    let small = &small[lead..];
    if small.len() <= big.len() && big.ends_with(small) {
        Ok(big.to_vec())
    } else {
        Err(Error::shape(op, a, b))
    }
}

impl<T: Real> Tape<T> {
    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.requires_grad(v))
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        };
        let shape = broadcast_shape(name, self.shape(a), self.shape(b))?;
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let n: usize = shape.iter().product();
        let (na, nb) = (ad.len(), bd.len());
        let data: Vec<T> = (0..n)
            .map(|j| {
                let (x, y) = (ad[j % na], bd[j % nb]);
                match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                }
            })
            .collect();
        let op = match kind {
            Binary::Add => Op::Add { a, b },
            Binary::Sub => Op::Sub { a, b },
            Binary::Mul => Op::Mul { a, b },
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor { shape, data }, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let src = self.value(a);
        let value = Tensor {
            shape: src.shape.clone(),
            data: src.data.iter().map(|&x| f(x)).collect(),
        };
        let rg = self.requires_grad(a);
        self.push(value, op, rg)
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        self.unary(a, |x| x * factor, Op::Scale { a, factor })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.tanh(), Op::Tanh { a })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid { a })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > T::zero() { x } else { T::zero() }, Op::Relu { a })
    }

    /// `a · b` for 2-D operands, or `a · bᵀ` when `trans_b` is set.
    pub fn matmul_ext(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k) = (sa[0], sa[1]);
        let (kb, n) = if trans_b { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != kb {
            return Err(Error::shape("matmul", sa, sb));
        }
        let mut data = vec![T::zero(); m * n];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
        T::gemm(m, k, n, T::one(), ad, k as isize, 1, bd, rsb, csb, T::zero(), &mut data, n as isize, 1);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor { shape: vec![m, n], data }, Op::MatMul { a, b, trans_b }, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_ext(a, b, false)
    }

    /// Batched product of `[B, m, k]` and `[B, k, n]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("batch_matmul", sa, sb));
        }
        let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut data = vec![T::zero(); batch * m * n];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for s in 0..batch {
            T::gemm(
                m,
                k,
                n,
                T::one(),
                &ad[s * m * k..],
                k as isize,
                1,
                &bd[s * k * n..],
                n as isize,
                1,
                T::zero(),
                &mut data[s * m * n..],
                n as isize,
                1,
            );
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(
            Tensor {
                shape: vec![batch, m, n],
                data,
            },
            Op::BatchMatMul { a, b },
            rg,
        ))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::usage(format!("softmax axis {axis} out of range for {shape:?}")));
        }
        let mut data = self.value(a).data().to_vec();
        softmax_in_place(&mut data, &shape, axis);
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor { shape, data }, Op::Softmax { a, axis }, rg))
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits)`,
    /// for logits of shape `[B, K]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(Error::shape("cross_entropy", &shape, &[labels.len()]));
        }
        let k = shape[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::OutOfRange {
                what: "class label",
                value: bad as i64,
                valid: format!("0..{k}"),
            });
        }
        let mut probs = self.value(logits).data().to_vec();
        softmax_in_place(&mut probs, &shape, 1);
        // log-sum-exp form of -log p[label]
        let logit_data = self.value(logits).data();
        let mut loss = T::zero();
        for (r, &label) in labels.iter().enumerate() {
            let row = &logit_data[r * k..(r + 1) * k];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
            loss += lse - row[label];
        }
        loss /= T::from_usize(labels.len());
        let rg = self.requires_grad(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        let rg = self.requires_grad(a);
        self.push(Tensor::scalar(s), Op::Sum { a }, rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = self.sum(a);
        self.scale(s, T::one() / T::from_usize(n))
    }

    /// Mean over `axis`, removing it.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::usage(format!("mean axis {axis} out of range for {shape:?}")));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..n {
                for q in 0..inner {
                    data[o * inner + q] += src[(o * n + j) * inner + q];
                }
            }
        }
        let inv = T::one() / T::from_usize(n);
        data.iter_mut().for_each(|x| *x *= inv);
        let out_shape = removed_axis(&shape, axis);
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor { shape: out_shape, data }, Op::MeanAxis { a, axis }, rg))
    }

    /// Maximum over `axis`, removing it. Ties resolve to the first index.
    pub fn max_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::usage(format!("max axis {axis} out of range for {shape:?}")));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for q in 0..inner {
                let mut best = (o * n) * inner + q;
                for j in 1..n {
                    let idx = (o * n + j) * inner + q;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                data.push(src[best]);
                argmax.push(best);
            }
        }
        let rg = self.requires_grad(a);
        Ok(self.push(
            Tensor {
                shape: removed_axis(&shape, axis),
                data,
            },
            Op::MaxAxis { a, argmax },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.requires_grad(a);
        Ok(self.push(value, Op::Reshape { a }, rg))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::usage("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::usage(format!("concat axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let n = self.shape(v)[axis];
                data.extend_from_slice(&self.value(v).data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let rg = self.any_grad(inputs);
        Ok(self.push(
            Tensor { shape, data },
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Picks one index along `axis`, removing it.
    pub fn select(&mut self, a: Var, axis: usize, index: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || index >= shape[axis] {
            return Err(Error::usage(format!(
                "select index {index} on axis {axis} out of range for {shape:?}"
            )));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * n + index) * inner..(o * n + index + 1) * inner]);
        }
        let out_shape = removed_axis(&shape, axis);
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor { shape: out_shape, data }, Op::Select { a, axis, index }, rg))
    }

    /// Stacks equally shaped tensors along a new `axis`.
    pub fn stack(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::usage("stack of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis > base.len() {
            return Err(Error::usage(format!("stack axis {axis} out of range for {base:?}")));
        }
        for &v in inputs {
            if self.shape(v) != base.as_slice() {
                return Err(Error::shape("stack", &base, self.shape(v)));
            }
        }
        let mut shape = base.clone();
        shape.insert(axis, inputs.len());
        let (outer, count, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(outer * count * inner);
        for o in 0..outer {
            for &v in inputs {
                data.extend_from_slice(&self.value(v).data()[o * inner..(o + 1) * inner]);
            }
        }
        let rg = self.any_grad(inputs);
        Ok(self.push(
            Tensor { shape, data },
            Op::Stack {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Inserts a new `axis` of extent `count`, copying the input along it.
    pub fn repeat(&mut self, a: Var, axis: usize, count: usize) -> Result<Var> {
        let base = self.shape(a).to_vec();
        if axis > base.len() || count == 0 {
            return Err(Error::usage(format!("cannot repeat {base:?} {count}x at axis {axis}")));
        }
        let mut shape = base;
        shape.insert(axis, count);
        let (outer, _, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * count * inner);
        for o in 0..outer {
            for _ in 0..count {
                data.extend_from_slice(&src[o * inner..(o + 1) * inner]);
            }
        }
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor { shape, data }, Op::Repeat { a, axis, count }, rg))
    }

    /// Same-padded 1-D convolution along axis 1 of `x: [N, F, C_in]` with
    /// `w: [K, C_in, C_out]`; output `[N, F, C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 3 || ws.len() != 3 || xs[2] != ws[1] {
            return Err(Error::shape("conv1d", &xs, &ws));
        }
        let (n, f, cin) = (xs[0], xs[1], xs[2]);
        let (kernel, cout) = (ws[0], ws[2]);
        if let Some(bv) = b {
            if self.shape(bv) != [cout] {
                return Err(Error::shape("conv1d bias", self.shape(bv), &[cout]));
            }
        }
        let kc = kernel * cin;
        let rows = n * f;
        let pad = (kernel - 1) / 2;
        let xd = self.value(x).data();
        let mut cols = vec![T::zero(); rows * kc];
        for s in 0..n {
            for pos in 0..f {
                let row = &mut cols[(s * f + pos) * kc..(s * f + pos + 1) * kc];
                for t in 0..kernel {
                    let src = pos as isize + t as isize - pad as isize;
                    if src < 0 || src >= f as isize {
                        continue;
                    }
                    let src = src as usize;
                    row[t * cin..(t + 1) * cin].copy_from_slice(&xd[(s * f + src) * cin..(s * f + src + 1) * cin]);
                }
            }
        }
        let mut data = vec![T::zero(); rows * cout];
        if let Some(bv) = b {
            let bd = self.value(bv).data();
            for r in 0..rows {
                data[r * cout..(r + 1) * cout].copy_from_slice(bd);
            }
        }
        let beta = if b.is_some() { T::one() } else { T::zero() };
        T::gemm(
            rows,
            kc,
            cout,
            T::one(),
            &cols,
            kc as isize,
            1,
            self.value(w).data(),
            cout as isize,
            1,
            beta,
            &mut data,
            cout as isize,
            1,
        );
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.any_grad(&deps);
        Ok(self.push(
            Tensor {
                shape: vec![n, f, cout],
                data,
            },
            Op::Conv1d {
                x,
                w,
                b,
                cols,
                kernel,
            },
            rg,
        ))
    }

    /// Pooling along axis 1 of `[N, F, C]` with window = stride = `size`;
    /// output extent `ceil(F / size)`.
    pub fn pool1d(&mut self, x: Var, size: usize, kind: PoolKind) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || size == 0 {
            return Err(Error::usage(format!("pool1d needs [N, F, C] and size > 0, got {xs:?}")));
        }
        let (n, f, c) = (xs[0], xs[1], xs[2]);
        let fo = f.div_ceil(size);
        let xd = self.value(x).data();
        let mut data = vec![T::zero(); n * fo * c];
        let mut argmax = Vec::new();
        if kind == PoolKind::Max {
            argmax.reserve(n * fo * c);
        }
        for s in 0..n {
            for j in 0..fo {
                let lo = j * size;
                let hi = (lo + size).min(f);
                for ch in 0..c {
                    let out = &mut data[(s * fo + j) * c + ch];
                    match kind {
                        PoolKind::Max => {
                            let mut best = (s * f + lo) * c + ch;
                            for pos in lo + 1..hi {
                                let idx = (s * f + pos) * c + ch;
                                if xd[idx] > xd[best] {
                                    best = idx;
                                }
                            }
                            *out = xd[best];
                            argmax.push(best);
                        }
                        PoolKind::Average => {
                            let total: T = (lo..hi).map(|pos| xd[(s * f + pos) * c + ch]).sum();
                            *out = total / T::from_usize(hi - lo);
                        }
                    }
                }
            }
        }
        let rg = self.requires_grad(x);
        Ok(self.push(
            Tensor {
                shape: vec![n, fo, c],
                data,
            },
            Op::Pool1d {
                x,
                size,
                kind,
                argmax,
            },
            rg,
        ))
    }

    /// Batch normalisation over every axis but the last, using the batch's
    /// own statistics. Returns the output plus the batch mean and biased
    /// variance per channel.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<(Var, Vec<T>, Vec<T>)> {
        let xs = self.shape(x).to_vec();
        let c = *xs.last().ok_or_else(|| Error::usage("batch_norm of a scalar"))?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape("batch_norm", &xs, self.shape(gamma)));
        }
        let xd = self.value(x).data();
        let m = xd.len() / c;
        let mf = T::from_usize(m);
        let mut mean = vec![T::zero(); c];
        for r in 0..m {
            for ch in 0..c {
                mean[ch] += xd[r * c + ch];
            }
        }
        mean.iter_mut().for_each(|v| *v /= mf);
        let mut var = vec![T::zero(); c];
        for r in 0..m {
            for ch in 0..c {
                let d = xd[r * c + ch] - mean[ch];
                var[ch] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= mf);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xd.len()];
        let mut data = vec![T::zero(); xd.len()];
        for r in 0..m {
            for ch in 0..c {
                let j = r * c + ch;
                xhat[j] = (xd[j] - mean[ch]) * inv_std[ch];
                data[j] = gd[ch] * xhat[j] + bd[ch];
            }
        }
        let rg = self.any_grad(&[x, gamma, beta]);
        let out = self.push(
            Tensor { shape: xs, data },
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        );
        Ok((out, mean, var))
    }

    /// Batch normalisation with fixed statistics.
    pub fn batch_norm_frozen(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: T) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let c = *xs.last().ok_or_else(|| Error::usage("batch_norm of a scalar"))?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] || mean.len() != c || var.len() != c {
            return Err(Error::shape("batch_norm", &xs, self.shape(gamma)));
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (xd, gd, bd) = (self.value(x).data(), self.value(gamma).data(), self.value(beta).data());
        let data: Vec<T> = xd
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let ch = j % c;
                gd[ch] * (v - mean[ch]) * inv_std[ch] + bd[ch]
            })
            .collect();
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            Tensor { shape: xs, data },
            Op::BatchNormFrozen {
                x,
                gamma,
                beta,
                mean: mean.to_vec(),
                inv_std,
            },
            rg,
        ))
    }
}

fn removed_axis(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s.remove(axis);
    if s.is_empty() {
        s.push(1);
    }
    s
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// In-place max-subtracted softmax along `axis` of a row-major buffer.
pub(crate) fn softmax_in_place<T: Real>(data: &mut [T], shape: &[usize], axis: usize) {
    let (outer, n, inner) = split_axis(shape, axis);
    for o in 0..outer {
        for q in 0..inner {
            let idx = |j: usize| (o * n + j) * inner + q;
            let max = (0..n).map(|j| data[idx(j)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for j in 0..n {
                let e = (data[idx(j)] - max).exp();
                data[idx(j)] = e;
                total += e;
            }
            for j in 0..n {
                data[idx(j)] /= total;
            }
        }
    }
}
