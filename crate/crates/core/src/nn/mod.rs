//! Layer vocabulary: dense, dropout, batch normalisation, embedding lookup,
//! LSTM / Bi-LSTM and the time-distributed convolution block.

mod layers;
mod lstm;
mod params;
mod tcnn;

pub use layers::{global_average_pool_time, BatchNorm, Dense, Dropout, Embedding};
pub use lstm::{run_bilstm, run_lstm, lstm_step, BiLstm, LstmCell, GATES};
pub use params::{ParamId, ParamStore, Parameter};
pub use tcnn::{stack_output_features, PoolChoice, TcnnBlock, TcnnBlockConfig, PROPOSED_KERNEL_COUNTS, PROPOSED_KERNEL_SIZES};

pub use crate::tensor::tape::PoolKind;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Real, Tape};

/// State threaded through a forward pass.
pub struct Ctx<'a, T: Real> {
    pub tape: &'a mut Tape<T>,
    pub params: &'a ParamStore<T>,
    /// Enables dropout and batch statistics.
    pub training: bool,
    /// Source of dropout masks.
    pub rng: ChaCha8Rng,
}

impl<'a, T: Real> Ctx<'a, T> {
    pub fn new(tape: &'a mut Tape<T>, params: &'a ParamStore<T>, training: bool, seed: u64) -> Self {
        Ctx {
            tape,
            params,
            training,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn inference(tape: &'a mut Tape<T>, params: &'a ParamStore<T>) -> Self {
        Self::new(tape, params, false, 0)
    }

    pub fn param(&mut self, id: ParamId) -> crate::tensor::Var {
        self.tape.param(self.params, id)
    }
}
