//! Sequence classification of depression severity from acoustic feature
//! streams and interview transcripts.
//!
//! The crate bundles a small reverse-mode autodiff engine ([`tensor`]), the
//! layers built on it ([`nn`], [`attention`]), the audio/text/fused model
//! family ([`models`]), training ([`training`]), data pipelines ([`audio`],
//! [`text`]), evaluation ([`eval`]), a synthetic corpus generator
//! ([`synth`]) and checkpoint I/O ([`checkpoint`]).

pub mod attention;
pub mod audio;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod training;

pub use error::{Error, Result};
