//! Zero-evidence protection of the speaker-sex attribute.
//!
//! Speaker embeddings are protected with a class-conditional normalizing
//! flow whose first base coordinate is the male-vs-female log-likelihood
//! ratio; protection zeroes that coordinate and maps back. Pitch is
//! protected with an affine f0 transform toward sex-balanced target moments
//! and realised on audio with TD-PSOLA. The evaluation side covers PAV
//! calibration, EER, Cllr, ECE / D_ECE, attack protocols and ASV-style
//! consistency trials.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod embeddings;
pub mod error;
pub mod flow;
pub mod harness;
pub mod metrics;
pub mod pitch;
pub mod protection;
pub mod psola;

pub use error::{Error, Result};

/// Seed used when neither a flag nor `ZEVOX_SEED` provides one.
pub const DEFAULT_SEED: u64 = 20230607;
