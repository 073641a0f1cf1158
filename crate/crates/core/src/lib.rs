//! Desk-scale laboratory for learned full-CSI feedback compression.
//!
//! The crate synthesizes cluster-based multipath MIMO channel samples,
//! compresses them with a trainable dense autoencoder, quantizes the code to
//! a bit-exact feedback frame, reconstructs at the decoder side, and
//! evaluates feedback-bit budgets against an NMSE <= 0.1 constraint.
//!
//! Modules follow the processing chain:
//!
//! - [`channel`]: channel synthesis, datasets, the NMSE metric
//! - [`dataset_io`]: binary dataset files
//! - [`preprocess`]: path cutting, domain transforms, feature maps, augmentation
//! - [`nn`]: dense network machinery, soft quantization, training
//! - [`quantize`]: scalar/companded/adaptive/vector quantizers, bit allocation,
//!   quantization-error offset correction
//! - [`bitstream`]: bit packing and the feedback frame wire format
//! - [`harness`]: end-to-end pipelines, budget sweeps, reports

pub mod bitstream;
pub mod channel;
pub mod dataset_io;
pub mod error;
pub mod harness;
pub mod nn;
pub mod preprocess;
pub mod quantize;
pub mod rng;

pub use error::{Error, Result};
