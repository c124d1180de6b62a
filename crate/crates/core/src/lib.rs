//! Spread-spectrum (CDMA) watermarking for neural-network parameter vectors.
//!
//! A payload is LDPC-encoded, prefixed with a 200-bit preamble, and each bit is
//! spread over a key-selected subset of the weights with its own pseudo-random
//! ±1 code. Verification correlates the weight delta against the same codes,
//! estimates the channel from the preamble and belief-propagation decodes the
//! payload.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, key files and
//! the command-line front end live in the companion `tattooed` crate.
//!
//! Module map:
//! - [`keying`]: seed derivation, spreading codes, preamble, parameter selection
//! - [`ldpc`]: rate-1/2 column-weight-3 LDPC construction, encoding and decoding
//! - [`spread`]: embedding, correlation and channel estimation
//! - [`watermark`]: the end-to-end mark and verify pipeline
//! - [`attacks`]: pruning, perturbation and neuron shuffling
//! - [`unshuffle`]: permutation recovery by cosine matching
//! - [`model`]: tensor containers, flattening and synthetic networks
//! - [`stats`]: distribution comparisons between weight vectors

#![no_std]
#![warn(missing_docs)]

extern crate alloc;

pub mod attacks;
mod error;
pub mod keying;
pub mod ldpc;
mod math;
pub mod model;
pub mod spread;
pub mod stats;
pub mod unshuffle;
pub mod watermark;

pub use error::{Error, Result};
pub use keying::{SecretKey, Seed, SeedPair};
pub use model::{ParameterVector, TensorContainer};
pub use watermark::{MarkRecord, VerifyReport, WatermarkPayload};
