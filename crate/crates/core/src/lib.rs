//! Surrogate-gradient training of spiking recurrent encoders for sequence
//! transcription with CTC.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: a reverse-mode tape over dense `f64` tensors, including
//!   the spike threshold with its boxcar surrogate and a CTC loss node.
//! - [`layers`]: LIF, non-gated RNN, LSTM, batch norm, the strided conv
//!   front-end, bidirectional wrapping and the full encoder.
//! - [`loss`]: CTC alignment, greedy decoding, edit distance and Beta
//!   credible intervals on error rates.
//! - [`features`]: WAV reading and log-mel filterbanks.
//! - [`data`]: a seeded synthetic transcription task and batch padding.
//! - [`training`]: SGD with BPTT, the layer-replacement grid and gradient
//!   explosion diagnostics.
//! - [`cli`]: the `spiking-ctc` command.

pub mod autodiff;
pub mod cli;
pub mod container;
pub mod data;
pub mod error;
pub mod features;
pub mod layers;
pub mod loss;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
