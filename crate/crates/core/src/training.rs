//! Adam, gradient clipping, early stopping and the epoch loop.

use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelGraph, ModelInput, NUM_CLASSES};
use crate::nn::{Ctx, ParamId, ParamStore};
use crate::tensor::{Real, Tape};

/// A labelled collection of windows that can be assembled into batches.
pub trait BatchSource<T: Real> {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, index: usize) -> usize;

    /// Builds the model input for `indices`. `rng` drives any per-batch
    /// sampling, such as cross-modal pairing.
    fn batch(&self, indices: &[usize], rng: &mut ChaCha8Rng) -> Result<ModelInput<T>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    frozen: Vec<bool>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = |p: &ParamStore<T>| p.iter().map(|(_, q)| vec![T::zero(); q.value.len()]).collect();
        Adam {
            cfg,
            step: 0,
            m: zeros(params),
            v: zeros(params),
            frozen: vec![false; params.len()],
        }
    }

    /// Excludes every trainable parameter whose name starts with `prefix`.
    pub fn freeze_prefix(&mut self, params: &ParamStore<T>, prefix: &str) -> usize {
        let mut n = 0;
        for (id, p) in params.iter() {
            if p.name.starts_with(prefix) && p.trainable {
                self.frozen[id.index()] = true;
                n += 1;
            }
        }
        n
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Every trainable, unfrozen parameter needs a
    /// gradient.
    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &[Option<Vec<T>>]) -> Result<()> {
        self.step += 1;
        let c = &self.cfg;
        let t = self.step as i32;
        let lr = T::from_f64(c.learning_rate);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let eps = T::from_f64(c.epsilon);
        let corr1 = T::one() - b1.powi(t);
        let corr2 = T::one() - b2.powi(t);
        let ids: Vec<ParamId> = params.iter().map(|(id, _)| id).collect();
        for id in ids {
            let i = id.index();
            let p = params.get_mut(id);
            if !p.trainable || self.frozen[i] {
                continue;
            }
            let g = grads[i]
                .as_ref()
                .ok_or_else(|| Error::usage(format!("no gradient for trainable parameter {}", p.name)))?;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut [Option<Vec<T>>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .flat_map(|g| g.iter())
        .map(|x| x.as_f64() * x.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::from_f64(max_norm / norm);
        for g in grads.iter_mut().flatten() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Training windows drawn (without replacement) per epoch; all when unset.
    pub samples_per_epoch: Option<usize>,
    /// Fixed validation subsample size; all when unset.
    pub val_samples: Option<usize>,
    /// Parameter-name prefixes excluded from updates.
    pub frozen_prefixes: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            adam: AdamConfig::default(),
            patience: 5,
            clip_norm: Some(5.0),
            seed: 0,
            samples_per_epoch: None,
            val_samples: None,
            frozen_prefixes: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
    /// Epoch (1-based) whose weights were kept.
    pub best_epoch: usize,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,val_loss,val_acc";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6}",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Tracks the best monitored value and signals when patience runs out.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    best: f64,
    best_epoch: usize,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            waited: 0,
        }
    }

    /// Records an epoch's value; returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.waited = 0;
            true
        } else {
            self.waited += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.waited >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Trainable-parameter gradients of the last backward pass, indexed by id.
fn collect_grads<T: Real>(tape: &Tape<T>, params: &ParamStore<T>) -> Vec<Option<Vec<T>>> {
    let mut grads: Vec<Option<Vec<T>>> = vec![None; params.len()];
    for (id, g) in tape.param_grads() {
        grads[id.index()] = Some(g.to_vec());
    }
    // Parameters on the tape that no path reached get zeros.
    for (id, p) in params.iter() {
        if p.trainable && grads[id.index()].is_none() && tape.param_var(id).is_some() {
            grads[id.index()] = Some(vec![T::zero(); p.value.len()]);
        }
    }
    grads
}

/// One optimisation step on a batch; returns (mean loss, correct count).
pub fn train_step<T: Real>(
    model: &mut ModelGraph<T>,
    adam: &mut Adam<T>,
    input: &ModelInput<T>,
    labels: &[usize],
    clip_norm: Option<f64>,
    dropout_seed: u64,
) -> Result<(f64, usize)> {
    let mut tape = Tape::new();
    let (loss, correct) = {
        let mut ctx = Ctx::new(&mut tape, &model.params, true, dropout_seed);
        let out = model.forward(&mut ctx, input)?;
        let correct = count_correct(ctx.tape.value(out.logits).data(), labels);
        let loss = ctx.tape.cross_entropy(out.logits, labels)?;
        (loss, correct)
    };
    let loss_value = tape.value(loss).data()[0].as_f64();
    if !loss_value.is_finite() {
        return Err(Error::Diverged(format!("training loss became {loss_value}")));
    }
    tape.backward(loss)?;
    let mut grads = collect_grads(&tape, &model.params);
    if let Some(max) = clip_norm {
        let norm = clip_global_norm(&mut grads, max);
        if !norm.is_finite() {
            return Err(Error::Diverged(format!("gradient norm became {norm}")));
        }
    }
    adam.update(&mut model.params, &grads)?;
    for (id, values) in tape.take_stat_updates() {
        model.params.get_mut(id).value.data_mut().copy_from_slice(&values);
    }
    Ok((loss_value, correct))
}

fn count_correct<T: Real>(logits: &[T], labels: &[usize]) -> usize {
    let k = NUM_CLASSES;
    labels
        .iter()
        .enumerate()
        .filter(|(r, &l)| {
            let row: Vec<f64> = logits[r * k..(r + 1) * k].iter().map(|x| x.as_f64()).collect();
            crate::models::argmax(&row) == l
        })
        .count()
}

/// Inference-mode class probabilities for `indices` of `source`.
pub fn predict_indices<T: Real>(
    model: &ModelGraph<T>,
    source: &dyn BatchSource<T>,
    indices: &[usize],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<[f64; NUM_CLASSES]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let input = source.batch(chunk, &mut rng)?;
        out.extend(model.predict(&input)?.probs);
    }
    Ok(out)
}

/// Mean cross-entropy and accuracy of `indices` under the current weights.
pub fn evaluate_loss<T: Real>(
    model: &ModelGraph<T>,
    source: &dyn BatchSource<T>,
    indices: &[usize],
    batch_size: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let probs = predict_indices(model, source, indices, batch_size, seed)?;
    let mut loss = 0.0;
    let mut correct = 0;
    for (p, &i) in probs.iter().zip(indices) {
        let label = source.label(i);
        loss -= p[label].max(1e-12).ln();
        if crate::models::argmax(p) == label {
            correct += 1;
        }
    }
    let n = indices.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains `model` on `train`, early-stopping on `val` loss (or training loss
/// without a validation set) and restoring the best weights.
pub fn fit<T: Real>(
    model: &mut ModelGraph<T>,
    train: &dyn BatchSource<T>,
    val: Option<&dyn BatchSource<T>>,
    cfg: &TrainConfig,
) -> Result<History> {
    if train.is_empty() {
        return Err(Error::usage("training set is empty"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::config("batch size and epochs must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam, &model.params);
    for prefix in &cfg.frozen_prefixes {
        let n = adam.freeze_prefix(&model.params, prefix);
        info!("froze {n} parameters under {prefix:?}");
    }
    let val_indices: Vec<usize> = match val {
        Some(v) => {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            if let Some(cap) = cfg.val_samples.filter(|&c| c < idx.len()) {
                idx.shuffle(&mut rng);
                idx.truncate(cap);
                idx.sort_unstable();
            }
            idx
        }
        None => Vec::new(),
    };
    let val_seed: u64 = rng.random();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.params.clone();
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let take = cfg.samples_per_epoch.map_or(order.len(), |c| c.min(order.len()));
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for chunk in order[..take].chunks(cfg.batch_size) {
            let input = train.batch(chunk, &mut rng)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train.label(i)).collect();
            let (loss, ok) = train_step(model, &mut adam, &input, &labels, cfg.clip_norm, rng.random())?;
            loss_sum += loss * chunk.len() as f64;
            correct += ok;
            seen += chunk.len();
        }
        let train_loss = loss_sum / seen as f64;
        let train_acc = correct as f64 / seen as f64;
        let (val_loss, val_acc) = match val {
            Some(v) if !val_indices.is_empty() => evaluate_loss(model, v, &val_indices, cfg.batch_size, val_seed)?,
            _ => (train_loss, train_acc),
        };
        if !val_loss.is_finite() {
            return Err(Error::Diverged(format!("validation loss became {val_loss} at epoch {epoch}")));
        }
        history.records.push(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
        info!("epoch {epoch}: train loss {train_loss:.4} acc {train_acc:.3}, val loss {val_loss:.4} acc {val_acc:.3}");
        if stopper.observe(epoch, val_loss) {
            best = model.params.clone();
        } else if stopper.should_stop() {
            debug!("early stop after epoch {epoch}");
            break;
        }
    }
    model.params = best;
    history.best_epoch = stopper.best_epoch();
    Ok(history)
}
