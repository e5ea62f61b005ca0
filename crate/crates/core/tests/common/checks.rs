//! Property checks shared by the focused tests and the acceptance runner.

use moodseq::attention::{attend, AttentionParams};
use moodseq::audio::{frame_sequences, CovarepMatrix};
use moodseq::nn::{Ctx, ParamStore};
use moodseq::tensor::{Tape, Tensor};
use moodseq::text::{window_overlap, window_tokens};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracles::token_window_oracle;

#[derive(Debug, Clone)]
pub struct AttentionInstance {
    pub batch: usize,
    pub steps: usize,
    pub hidden: usize,
    pub query: usize,
    pub score: usize,
    pub seed: u64,
    /// `[batch, steps, hidden]`
    pub states: Vec<f64>,
    /// `[batch, query]`
    pub queries: Vec<f64>,
    pub shift: f64,
}

impl AttentionInstance {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let (batch, steps, hidden) = (rng.random_range(1..=3), rng.random_range(1..=12), rng.random_range(1..=6));
        let query = rng.random_range(1..=5);
        let mut uniform = |n: usize| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>();
        let states = uniform(batch * steps * hidden);
        let queries = uniform(batch * query);
        AttentionInstance {
            batch,
            steps,
            hidden,
            query,
            score: rng.random_range(1..=6),
            seed: rng.random(),
            states,
            queries,
            shift: rng.random_range(-50.0..50.0),
        }
    }

    /// Same parameters and queries, first timestep only.
    pub fn single_step(&self) -> Self {
        let states = (0..self.batch)
            .flat_map(|b| self.states[b * self.steps * self.hidden..][..self.hidden].to_vec())
            .collect();
        AttentionInstance {
            steps: 1,
            states,
            ..self.clone()
        }
    }
}

pub struct AttentionOutcome {
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
    /// Scores recomputed outside the tape, `[B, T]`.
    pub scores: Vec<f64>,
}

pub fn run_attention(inst: &AttentionInstance) -> AttentionOutcome {
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(inst.seed);
    let p = AttentionParams::new(&mut store, "att", inst.query, inst.hidden, inst.score, &mut rng);
    let mut tape = Tape::new();
    let mut ctx = Ctx::inference(&mut tape, &store);
    let s = ctx.tape.constant(Tensor::new([inst.batch, inst.steps, inst.hidden], inst.states.clone()).unwrap());
    let q = ctx.tape.constant(Tensor::new([inst.batch, inst.query], inst.queries.clone()).unwrap());
    let out = attend(&mut ctx, &p, q, s).unwrap();
    let weights = ctx.tape.value(out.weights).data().to_vec();
    let context = ctx.tape.value(out.context).data().to_vec();

    let w_s = store.get(p.w_s).value.data();
    let w_h = store.get(p.w_h).value.data();
    let v = store.get(p.v).value.data();
    let mut scores = Vec::new();
    for b in 0..inst.batch {
        for t in 0..inst.steps {
            let h = &inst.states[(b * inst.steps + t) * inst.hidden..][..inst.hidden];
            let qv = &inst.queries[b * inst.query..][..inst.query];
            let mut e = 0.0;
            for k in 0..inst.score {
                let mut pre = 0.0;
                for j in 0..inst.query {
                    pre += w_s[k * inst.query + j] * qv[j];
                }
                for j in 0..inst.hidden {
                    pre += w_h[k * inst.hidden + j] * h[j];
                }
                e += v[k] * pre.tanh();
            }
            scores.push(e);
        }
    }
    AttentionOutcome { weights, context, scores }
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.iter().map(|e| e / sum).collect()
}

/// Sum-to-one, single-step identity and score-shift invariance.
pub fn check_attention(inst: &AttentionInstance) -> Result<(), String> {
    let out = run_attention(inst);
    for (row, scores) in out.weights.chunks(inst.steps).zip(out.scores.chunks(inst.steps)) {
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() >= 1e-6 || row.iter().any(|&a| a < 0.0) {
            return Err(format!("weights {row:?} are not a distribution"));
        }
        let shifted: Vec<f64> = scores.iter().map(|e| e + inst.shift).collect();
        if let Some((a, b)) = row.iter().zip(softmax(&shifted)).find(|(a, b)| (*a - b).abs() >= 1e-6) {
            return Err(format!("weight {a} vs shifted softmax {b}"));
        }
    }
    let one = inst.single_step();
    let single = run_attention(&one);
    if single.weights.iter().any(|&a| a != 1.0) || single.context != one.states {
        return Err("single-step context differs from the state".into());
    }
    Ok(())
}

pub const COVAREP_COLUMNS: usize = 74;
pub const VUV_COLUMN: usize = 1;

/// A matrix whose cells encode `frame * 100 + column`, with a random voicing
/// mask.
pub fn random_covarep(rng: &mut ChaCha8Rng) -> (CovarepMatrix, Vec<bool>) {
    let frames = rng.random_range(0..400);
    let rate: f64 = rng.random_range(0.0..1.0);
    let mask: Vec<bool> = (0..frames).map(|_| rng.random_bool(rate)).collect();
    let mut data = Vec::with_capacity(frames * COVAREP_COLUMNS);
    for (i, &voiced) in mask.iter().enumerate() {
        for c in 0..COVAREP_COLUMNS {
            data.push(if c == VUV_COLUMN { voiced as u8 as f32 } else { (i * 100 + c) as f32 });
        }
    }
    (CovarepMatrix::new("s", VUV_COLUMN, data).unwrap(), mask)
}

/// Window count and frame contents against the voiced-index oracle.
pub fn check_framing(m: &CovarepMatrix, mask: &[bool], timestep: usize) -> Result<(), String> {
    let voiced: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let windows = frame_sequences(m, timestep, 2).map_err(|e| e.to_string())?;
    if windows.len() != voiced.len() / timestep {
        return Err(format!("{} windows from {} voiced frames at {timestep}", windows.len(), voiced.len()));
    }
    for (w, window) in windows.iter().enumerate() {
        if window.label != 2 || window.frames.len() != timestep * (COVAREP_COLUMNS - 1) {
            return Err(format!("window {w} has the wrong label or size"));
        }
        for (r, frame) in window.frames.chunks(COVAREP_COLUMNS - 1).enumerate() {
            let source = voiced[w * timestep + r];
            let expected: Vec<f32> = (0..COVAREP_COLUMNS)
                .filter(|&c| c != VUV_COLUMN)
                .map(|c| (source * 100 + c) as f32)
                .collect();
            if frame != expected.as_slice() {
                return Err(format!("window {w} row {r} is not voiced frame {source}"));
            }
        }
    }
    Ok(())
}

/// Token windows of `1..=n` against the stride oracle, plus the overlap.
pub fn check_token_windows(n: usize, window: usize) -> Result<(), String> {
    let stream: Vec<usize> = (1..=n).collect();
    let got = window_tokens(&stream, window).map_err(|e| e.to_string())?;
    let expected = token_window_oracle(n, window);
    if got.len() != expected.len() {
        return Err(format!("n {n} window {window}: {} windows, oracle {}", got.len(), expected.len()));
    }
    for (win, &(start, real)) in got.iter().zip(&expected) {
        if win.len() != window || win[..real] != stream[start..start + real] || win[real..].iter().any(|&t| t != 0) {
            return Err(format!("n {n} window {window}: window at {start} differs"));
        }
    }
    let overlap = window_overlap(window);
    for pair in got.windows(2) {
        if pair[1].iter().all(|&t| t != 0) && pair[0][window - overlap..] != pair[1][..overlap] {
            return Err(format!("n {n} window {window}: neighbours do not share {overlap} tokens"));
        }
    }
    Ok(())
}
