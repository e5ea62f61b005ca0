#![allow(dead_code)]

pub mod checks;
pub mod oracles;

use moodseq::models::{
    AudioVariant, EncoderKind, FusionKind, Modality, ModelGraph, ModelInput, ModelKind, ModelSpec, TextVariant,
    AUDIO_FEATURES, NUM_CLASSES, TEXT_EMBEDDING_DIM,
};
use moodseq::nn::{Ctx, ParamId, PoolKind};
use moodseq::tensor::{Tape, Tensor, Var};
use moodseq::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const STEP: f64 = 1e-6;
pub const GRAD_TOLERANCE: f64 = 1e-4;

pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `‖a − n‖ / (‖a‖ + ‖n‖)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

type OpFn = fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

pub struct OpCase {
    pub name: &'static str,
    pub shapes: &'static [&'static [usize]],
    pub f: OpFn,
}

pub const OP_CASES: &[OpCase] = &[
    OpCase { name: "add", shapes: &[&[3, 4], &[3, 4]], f: |t, v| t.add(v[0], v[1]) },
    OpCase { name: "add_broadcast", shapes: &[&[2, 3, 4], &[4]], f: |t, v| t.add(v[0], v[1]) },
    OpCase { name: "sub", shapes: &[&[3, 4], &[3, 4]], f: |t, v| t.sub(v[0], v[1]) },
    OpCase { name: "mul", shapes: &[&[3, 4], &[3, 4]], f: |t, v| t.mul(v[0], v[1]) },
    OpCase { name: "mul_broadcast", shapes: &[&[3, 4], &[4]], f: |t, v| t.mul(v[0], v[1]) },
    OpCase { name: "scale", shapes: &[&[3, 4]], f: |t, v| Ok(t.scale(v[0], -1.7)) },
    OpCase { name: "tanh", shapes: &[&[3, 4]], f: |t, v| Ok(t.tanh(v[0])) },
    OpCase { name: "sigmoid", shapes: &[&[3, 4]], f: |t, v| Ok(t.sigmoid(v[0])) },
    OpCase { name: "relu", shapes: &[&[3, 4]], f: |t, v| Ok(t.relu(v[0])) },
    OpCase { name: "matmul", shapes: &[&[3, 4], &[4, 5]], f: |t, v| t.matmul(v[0], v[1]) },
    OpCase { name: "matmul_trans_b", shapes: &[&[3, 4], &[5, 4]], f: |t, v| t.matmul_ext(v[0], v[1], true) },
    OpCase { name: "batch_matmul", shapes: &[&[2, 3, 4], &[2, 4, 5]], f: |t, v| t.batch_matmul(v[0], v[1]) },
    OpCase { name: "softmax_rows", shapes: &[&[3, 5]], f: |t, v| t.softmax(v[0], 1) },
    OpCase { name: "softmax_columns", shapes: &[&[3, 5]], f: |t, v| t.softmax(v[0], 0) },
    OpCase { name: "cross_entropy", shapes: &[&[4, 5]], f: |t, v| t.cross_entropy(v[0], &[0, 2, 4, 1]) },
    OpCase { name: "sum", shapes: &[&[3, 4]], f: |t, v| Ok(t.sum(v[0])) },
    OpCase { name: "mean", shapes: &[&[3, 4]], f: |t, v| Ok(t.mean(v[0])) },
    OpCase { name: "mean_axis", shapes: &[&[2, 3, 4]], f: |t, v| t.mean_axis(v[0], 1) },
    OpCase { name: "max_axis", shapes: &[&[2, 3, 4]], f: |t, v| t.max_axis(v[0], 1) },
    OpCase { name: "reshape", shapes: &[&[2, 6]], f: |t, v| t.reshape(v[0], [3, 4]) },
    OpCase { name: "concat", shapes: &[&[2, 3], &[2, 2]], f: |t, v| t.concat(&[v[0], v[1]], 1) },
    OpCase { name: "select", shapes: &[&[2, 4, 3]], f: |t, v| t.select(v[0], 1, 2) },
    OpCase { name: "stack", shapes: &[&[2, 3], &[2, 3]], f: |t, v| t.stack(&[v[0], v[1]], 1) },
    OpCase { name: "repeat", shapes: &[&[2, 3]], f: |t, v| t.repeat(v[0], 1, 3) },
    OpCase { name: "conv1d", shapes: &[&[2, 6, 3], &[3, 3, 4], &[4]], f: |t, v| t.conv1d(v[0], v[1], Some(v[2])) },
    OpCase { name: "conv1d_no_bias", shapes: &[&[2, 5, 2], &[2, 2, 3]], f: |t, v| t.conv1d(v[0], v[1], None) },
    OpCase { name: "max_pool", shapes: &[&[2, 5, 3]], f: |t, v| t.pool1d(v[0], 2, PoolKind::Max) },
    OpCase { name: "average_pool", shapes: &[&[2, 5, 3]], f: |t, v| t.pool1d(v[0], 2, PoolKind::Average) },
    OpCase {
        name: "batch_norm_train",
        shapes: &[&[4, 3], &[3], &[3]],
        f: |t, v| Ok(t.batch_norm_train(v[0], v[1], v[2], 1e-5)?.0),
    },
    OpCase {
        name: "batch_norm_frozen",
        shapes: &[&[4, 3], &[3], &[3]],
        f: |t, v| t.batch_norm_frozen(v[0], v[1], v[2], &[0.3, -0.2, 0.1], &[1.5, 0.7, 2.0], 1e-5),
    },
];

/// Scalar `Σ out ⊙ weights` for the op applied to `inputs`.
fn op_loss(case: &OpCase, inputs: &[Tensor<f64>], weights: &mut Option<Tensor<f64>>, seed: u64) -> (f64, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.variable(x.clone())).collect();
    let out = (case.f)(&mut tape, &vars).unwrap();
    let shape = tape.shape(out).to_vec();
    let w = weights
        .get_or_insert_with(|| randn(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed), &shape))
        .clone();
    let wv = tape.constant(w);
    let prod = tape.mul(out, wv).unwrap();
    let loss = tape.sum(prod);
    let value = tape.value(loss).data()[0];
    tape.backward(loss).unwrap();
    let grads = vars.iter().map(|&v| tape.grad(v).unwrap().to_vec()).collect();
    (value, grads)
}

/// Worst relative gradient error over the op's inputs.
pub fn check_op(case: &OpCase, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs: Vec<Tensor<f64>> = case.shapes.iter().map(|s| randn(&mut rng, s)).collect();
    let mut weights = None;
    let (_, analytic) = op_loss(case, &inputs, &mut weights, seed);
    let mut worst = 0.0f64;
    for i in 0..inputs.len() {
        let mut numeric = Vec::with_capacity(inputs[i].len());
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            inputs[i].data_mut()[j] = orig + STEP;
            let plus = op_loss(case, &inputs, &mut weights, seed).0;
            inputs[i].data_mut()[j] = orig - STEP;
            let minus = op_loss(case, &inputs, &mut weights, seed).0;
            inputs[i].data_mut()[j] = orig;
            numeric.push((plus - minus) / (2.0 * STEP));
        }
        worst = worst.max(relative_error(&analytic[i], &numeric));
    }
    worst
}

pub fn all_model_kinds() -> Vec<ModelKind> {
    let mut kinds = Vec::new();
    for variant in [AudioVariant::LstmFc, AudioVariant::BilstmFc, AudioVariant::LstmTcnn, AudioVariant::BilstmTcnn] {
        kinds.push(ModelKind::Audio { variant });
    }
    for variant in [TextVariant::LstmFc, TextVariant::BilstmFc, TextVariant::BilstmAttn] {
        kinds.push(ModelKind::Text { variant });
    }
    for encoder in [EncoderKind::Uni, EncoderKind::Bi] {
        for fusion in [FusionKind::MaxpoolConcat, FusionKind::AttnAlign, FusionKind::AttnAlignFuse] {
            kinds.push(ModelKind::Fused { encoder, fusion });
        }
    }
    kinds
}

pub const TEST_VOCAB_ROWS: usize = 12;

pub fn random_table(rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut t = randn(rng, &[TEST_VOCAB_ROWS, TEXT_EMBEDDING_DIM]);
    t.data_mut()[..TEXT_EMBEDDING_DIM].fill(0.0);
    t
}

pub fn random_input(rng: &mut ChaCha8Rng, spec: &ModelSpec, batch: usize) -> ModelInput<f64> {
    let modality = spec.kind.modality();
    let audio = (modality != Modality::Text).then(|| randn(rng, &[batch, spec.timestep, AUDIO_FEATURES]));
    let tokens =
        (modality != Modality::Audio).then(|| (0..batch * spec.window).map(|_| rng.random_range(1..TEST_VOCAB_ROWS)).collect());
    ModelInput { audio, tokens, batch }
}

pub fn build_model(kind: ModelKind, seed: u64) -> ModelGraph<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ModelSpec::new(kind, 16, 16, TEST_VOCAB_ROWS, seed);
    let table = random_table(&mut rng);
    ModelGraph::build(&spec, Some(&table)).unwrap()
}

fn model_loss(model: &ModelGraph<f64>, input: &ModelInput<f64>, labels: &[usize], seed: u64) -> f64 {
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &model.params, true, seed);
    let out = model.forward(&mut ctx, input).unwrap();
    let loss = ctx.tape.cross_entropy(out.logits, labels).unwrap();
    ctx.tape.value(loss).data()[0]
}

/// Parameter groups probed together: one per trainable tensor, except that a
/// fused model's extractors are probed as two whole groups (their tensors are
/// covered one by one through the standalone audio and text models).
fn probe_groups(model: &ModelGraph<f64>) -> Vec<Vec<ParamId>> {
    let fused = model.spec.kind.modality() == Modality::Both;
    let mut groups: Vec<Vec<ParamId>> = Vec::new();
    let (mut audio, mut text) = (Vec::new(), Vec::new());
    for (id, p) in model.params.iter().filter(|(_, p)| p.trainable) {
        if fused && p.name.starts_with("audio.") {
            audio.push(id);
        } else if fused && p.name.starts_with("text.") {
            text.push(id);
        } else {
            groups.push(vec![id]);
        }
    }
    groups.extend([audio, text].into_iter().filter(|g| !g.is_empty()));
    groups
}

/// Worst relative error between the analytic and the central-difference
/// directional derivative, over random directions restricted to each probe
/// group. Runs in training mode (fixed dropout masks, batch statistics).
pub fn check_model(kind: ModelKind, seed: u64) -> f64 {
    let mut model = build_model(kind, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
    let batch = 2;
    let input = random_input(&mut rng, &model.spec, batch);
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..NUM_CLASSES)).collect();

    let grads: Vec<Option<Vec<f64>>> = {
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &model.params, true, seed);
        let out = model.forward(&mut ctx, &input).unwrap();
        let loss = ctx.tape.cross_entropy(out.logits, &labels).unwrap();
        tape.backward(loss).unwrap();
        let mut grads = vec![None; model.params.len()];
        for (id, g) in tape.param_grads() {
            grads[id.index()] = Some(g.to_vec());
        }
        grads
    };
    for (id, p) in model.params.iter() {
        assert_eq!(grads[id.index()].is_some(), p.trainable, "{kind:?}: gradient presence for {}", p.name);
    }

    let mut worst = 0.0f64;
    for group in probe_groups(&model) {
        let originals: Vec<Tensor<f64>> = group.iter().map(|&id| model.params.get(id).value.clone()).collect();
        let directions: Vec<Tensor<f64>> = originals.iter().map(|t| randn(&mut rng, t.shape())).collect();
        let analytic: f64 = group
            .iter()
            .zip(&directions)
            .map(|(&id, d)| grads[id.index()].as_ref().unwrap().iter().zip(d.data()).map(|(g, d)| g * d).sum::<f64>())
            .sum();
        let mut loss_at = |t: f64| {
            for ((&id, d), orig) in group.iter().zip(&directions).zip(&originals) {
                let v = model.params.get_mut(id).value.data_mut();
                for ((x, &o), &dx) in v.iter_mut().zip(orig.data()).zip(d.data()) {
                    *x = o + t * dx;
                }
            }
            model_loss(&model, &input, &labels, seed)
        };
        // A whole-tensor probe through the T-CNN can straddle ReLU and
        // max-pool switches; shrink the step until the quotient is local.
        let mut err = f64::INFINITY;
        for h in MODEL_STEPS {
            let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
            err = err.min(scalar_error(analytic, numeric));
            if err < GRAD_TOLERANCE {
                break;
            }
        }
        for (&id, orig) in group.iter().zip(&originals) {
            model.params.get_mut(id).value = orig.clone();
        }
        worst = worst.max(err);
    }
    worst
}

const MODEL_STEPS: [f64; 4] = [1e-6, 1e-7, 1e-8, 1e-9];

/// Gradients that vanish identically (a bias feeding batch norm) leave only
/// rounding noise in the difference quotient.
const ABSOLUTE_FLOOR: f64 = 1e-8;

fn scalar_error(a: f64, b: f64) -> f64 {
    if (a - b).abs() < ABSOLUTE_FLOOR {
        0.0
    } else {
        (a - b).abs() / (a.abs() + b.abs())
    }
}
