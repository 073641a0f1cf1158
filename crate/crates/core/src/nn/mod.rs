//! From-scratch dense-network machinery: fully connected layers, zero-init
//! residual wrappers, split blocks that route part of every hidden layer
//! straight to the block output, a differentiable quantization surrogate,
//! and deterministic double-precision training under the NMSE loss.

pub mod autoencoder;
pub mod checkpoint;
pub mod gradcheck;
pub mod layer;
pub mod softquant;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How samples are presented to the codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One shared network applied to each retained path's feature chunk;
    /// outputs are concatenated in path order.
    PerPathShared,
    /// One network over the whole flattened sample.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Logistic,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Logistic => softquant::sigmoid(z),
        }
    }

    /// Derivative expressed through the post-activation value.
    #[inline]
    pub fn prime_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Logistic => y * (1.0 - y),
        }
    }
}

/// Training-time quantization surrogate settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftQuantSpec {
    /// Quantization bits B.
    pub bits: u8,
    /// Sharpness used at evaluation of the surrogate outside training (the
    /// training ramp overrides it per epoch).
    pub beta: f64,
}

impl Default for SoftQuantSpec {
    fn default() -> Self {
        SoftQuantSpec { bits: 4, beta: 500.0 }
    }
}

/// Architecture of the encoder/decoder pair.
///
/// `encoder_widths`/`decoder_widths` are the per-layer widths of one split
/// block (a single entry degenerates to a plain FC layer). A tail FC layer is
/// always appended: the encoder tail maps to `feature_len` and applies the
/// logistic so features land in (0, 1); the decoder tail maps to the output
/// width linearly. When `rezero` is set, a zero-initialized residual block
/// (`y = x + alpha * F(x)`, alpha starting at 0) is inserted between the
/// split block and the tail on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSpec {
    pub mode: Mode,
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    /// Input width of one path chunk in per-path mode (2 channels x 16
    /// antenna pairs by default).
    pub per_path_input: usize,
    /// Feature length M_f: per path in per-path mode, total in joint mode.
    pub feature_len: usize,
    /// Fraction of every non-final split-block layer routed directly to the
    /// block output.
    pub split_fraction: f64,
    /// Hidden activation.
    pub activation: Activation,
    pub rezero: bool,
    pub soft_quant: SoftQuantSpec,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec::desk(122)
    }
}

impl NetworkSpec {
    /// Desk-scale joint profile.
    pub fn desk(feature_len: usize) -> Self {
        NetworkSpec {
            mode: Mode::Joint,
            encoder_widths: vec![512, 256],
            decoder_widths: vec![256, 512],
            per_path_input: 32,
            feature_len,
            split_fraction: 0.25,
            activation: Activation::Relu,
            rezero: false,
            soft_quant: SoftQuantSpec::default(),
        }
    }

    /// Wide per-path-shared profile with triangular split blocks.
    pub fn per_path_wide(feature_len_per_path: usize) -> Self {
        NetworkSpec {
            mode: Mode::PerPathShared,
            encoder_widths: vec![1024, 1280, 512],
            decoder_widths: vec![1408, 1152, 1152, 1024],
            per_path_input: 32,
            feature_len: feature_len_per_path,
            split_fraction: 0.25,
            activation: Activation::Relu,
            rezero: true,
            soft_quant: SoftQuantSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_widths.is_empty() || self.decoder_widths.is_empty() {
            return Err(Error::Config("network widths must be non-empty".into()));
        }
        if self.encoder_widths.iter().chain(&self.decoder_widths).any(|&w| w == 0) {
            return Err(Error::Config("network widths must be >= 1".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split_fraction {} outside (0, 1)",
                self.split_fraction
            )));
        }
        if self.feature_len == 0 || self.per_path_input == 0 {
            return Err(Error::Config("feature_len and per_path_input must be >= 1".into()));
        }
        if !(1..=16).contains(&self.soft_quant.bits) {
            return Err(Error::Config(format!(
                "soft_quant bits {} outside 1..=16",
                self.soft_quant.bits
            )));
        }
        if !(self.soft_quant.beta > 0.0) {
            return Err(Error::Config("soft_quant beta must be > 0".into()));
        }
        Ok(())
    }
}
