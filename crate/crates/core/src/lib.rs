//! Core algorithms for desk-scale language modelling.
//!
//! Everything in this crate is pure computation over in-memory data and
//! builds without `std`; file formats, timing and the command line live in
//! the companion `desklm` crate.
//!
//! The pipeline, in the order a run usually touches it:
//!
//! * [`corpus`]: normalisation, rolling-buffer deduplication, vocabulary and
//!   integer encoding.
//! * [`ngram`]: counting, interpolated modified Kneser-Ney, backoff queries,
//!   pruning and shortlists.
//! * [`filter`]: cross-entropy difference selection over rolling
//!   multi-sentence windows.
//! * [`rnn`]: the bias-free Elman RNNLM, exact softmax, NCE, truncated BPTT
//!   and rmsprop with per-word accumulators.
//! * [`trainer`]: offset-stream packing and the minibatched training loop.
//! * [`eval`]: perplexities, interpolation, hit-rate, n-best rescoring,
//!   normalisation drift and scaling-curve fits.
//! * [`compress`]: bottleneck RNN with tied embeddings and linear
//!   quantisation.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod compress;
pub mod corpus;
mod error;
pub mod eval;
pub mod filter;
pub mod linalg;
pub mod ngram;
pub mod rnn;
pub mod trainer;

pub use error::{Error, Result};
