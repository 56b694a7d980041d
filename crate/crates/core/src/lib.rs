//! Parallel singing-voice acoustic model built from Mixer blocks.
//!
//! A time-aligned score (notes plus Hangul lyrics) is expanded to frame-level
//! pitch and phoneme ids, embedded, and pushed through a stack of Channel
//! Mixer / Token Mixer blocks that emit log-mel frames for a whole segment at
//! once. Long songs are cut into fixed-length segments (optionally
//! overlapping), evaluated as one batch and stitched back together.
//!
//! Module map:
//! - [`numerics`]: dense matrices, layer primitives with backward passes, Adam, TEN1 files
//! - [`score`]: score JSON / SMF parsing, Hangul decomposition, frame alignment
//! - [`features`]: WAV input, log-mel extraction, MCD, the synthetic corpus
//! - [`model`]: the Mixer network and its Channel-Mixer-only ablation
//! - [`trainer`]: segmentation, LR schedule, training loop, evaluation
//! - [`inference`]: naive / overlapped segmentation plans and stitching
//! - [`analysis`]: Token-Mixer identity probes, per-position loss profiles
//! - [`bench`]: latency and real-time-factor measurement
//! - [`cli`]: the `mixsvs` command-line entry point

pub mod analysis;
pub mod bench;
pub mod cli;
pub mod error;
pub mod features;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod score;
pub mod trainer;

pub use error::{Error, Result};
