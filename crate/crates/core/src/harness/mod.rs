//! End-to-end pipelines: generate -> preprocess -> encode -> quantize ->
//! frame -> decode -> evaluate, plus budget sweeps and reports.

pub mod pipeline;
pub mod sweep;

pub use pipeline::{run_pipeline, PipelineArtifacts};
pub use sweep::{expand_budgets, sweep, SweepReport, SweepRow};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelConfig;
use crate::error::{Error, Result};
use crate::nn::train::TrainConfig;
use crate::nn::NetworkSpec;
use crate::preprocess::{AugmentFlags, Domain, FeatureMode, PathRule};
use crate::quantize::{CompandLaw, OffsetTrainConfig};

/// Training-data augmentation: each sample gains `copies` randomly
/// transformed variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub flags: AugmentFlags,
    pub prob: f64,
    pub copies: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub path_rule: Option<PathRule>,
    pub domain: Domain,
    pub feature_mode: FeatureMode,
    pub augment: Option<AugmentConfig>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            path_rule: None,
            domain: Domain::AntennaDelay,
            feature_mode: FeatureMode::ReIm2,
            augment: None,
        }
    }
}

/// Quantization scheme and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeConfig {
    Uniform { bits: u8 },
    Companded { law: CompandLaw, bits: u8 },
    Adaptive { bits: u8 },
    Vector { sub_dim: usize, bits: u8 },
    /// Per-path widths allocated greedily from measured distortion tables
    /// with `0..=max_bits` entries.
    PathLevel { max_bits: u8 },
}

impl SchemeConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeConfig::Uniform { .. } => "uniform",
            SchemeConfig::Companded { .. } => "companded",
            SchemeConfig::Adaptive { .. } => "adaptive",
            SchemeConfig::Vector { .. } => "vector",
            SchemeConfig::PathLevel { .. } => "path_level",
        }
    }
}

/// One full experiment description; serializable and digest-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub channel: ChannelConfig,
    pub preprocess: PreprocessConfig,
    /// Trainable codec; `None` evaluates preprocessing (+ quantization)
    /// alone.
    pub network: Option<NetworkSpec>,
    pub train: Option<TrainConfig>,
    pub quantizer: Option<SchemeConfig>,
    /// Feedback budget cap in bits (mask + payload). When set, the feature
    /// length (trained codecs) or symbol widths (raw pipelines) are derived
    /// to use as much of the cap as the scheme's granularity allows.
    pub budget_bits: Option<u32>,
    /// One training/evaluation run per seed; the report aggregates them.
    pub seeds: Vec<u64>,
    /// Post-dequantization correction network training.
    pub offset_net: Option<OffsetTrainConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            channel: ChannelConfig::desk(),
            preprocess: PreprocessConfig::default(),
            network: None,
            train: None,
            quantizer: None,
            budget_bits: None,
            seeds: vec![1234],
            offset_net: None,
        }
    }
}

impl PipelineConfig {
    /// Digest of the canonical JSON serialization (16 hex chars).
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&json);
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn scheme_name(&self) -> &'static str {
        match &self.quantizer {
            Some(s) => s.name(),
            None => "identity",
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed required".into()));
        }
        if let Some(rule) = &self.preprocess.path_rule {
            rule.validate(self.channel.n_paths)?;
            if matches!(rule, PathRule::CumEnergy(_))
                && (self.network.is_some() || self.quantizer.is_some())
            {
                return Err(Error::Config(
                    "CumEnergy cutting yields a variable retained count; trained or \
                     quantized pipelines need a fixed rate (use TopK)"
                        .into(),
                ));
            }
        }
        if let Some(aug) = &self.preprocess.augment {
            if !(0.0..=1.0).contains(&aug.prob) {
                return Err(Error::Config(format!("augment prob {} outside [0, 1]", aug.prob)));
            }
        }
        if let Some(net) = &self.network {
            net.validate()?;
            if self.train.is_none() {
                return Err(Error::Config("a network needs a train config".into()));
            }
            if self.quantizer.is_none() {
                return Err(Error::Config(
                    "a trained codec needs a quantizer to produce a bitstream".into(),
                ));
            }
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        match &self.quantizer {
            Some(SchemeConfig::Uniform { bits })
            | Some(SchemeConfig::Companded { bits, .. })
            | Some(SchemeConfig::Adaptive { bits }) => {
                if !(1..=16).contains(bits) {
                    return Err(Error::Config(format!("scalar bits {bits} outside 1..=16")));
                }
            }
            Some(SchemeConfig::Vector { sub_dim, bits }) => {
                if *sub_dim == 0 || !(1..=16).contains(bits) {
                    return Err(Error::Config(format!(
                        "vector scheme sub_dim {sub_dim} / bits {bits} invalid"
                    )));
                }
            }
            Some(SchemeConfig::PathLevel { max_bits }) => {
                if !(1..=16).contains(max_bits) {
                    return Err(Error::Config(format!("path-level max_bits {max_bits} outside 1..=16")));
                }
                if let Some(net) = &self.network {
                    if net.mode != crate::nn::Mode::PerPathShared {
                        return Err(Error::Config(
                            "path-level quantization needs path-grouped features \
                             (per-path-shared codec or no codec)"
                                .into(),
                        ));
                    }
                }
            }
            None => {}
        }
        if self.offset_net.is_some() {
            match &self.quantizer {
                None => {
                    return Err(Error::Config("offset net needs a quantizer".into()));
                }
                Some(SchemeConfig::PathLevel { .. }) => {}
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config_digest: String,
    pub scheme: String,
    /// Mask bits plus payload bits actually charged per sample. Identity
    /// pipelines report the raw 32-bit-float accounting instead.
    pub feedback_bits: u32,
    pub nmse_mean: f64,
    pub nmse_std: f64,
    /// `nmse_mean <= 0.1`.
    pub pass: bool,
    pub wall_s: f64,
}

impl ReportRow {
    pub const NMSE_THRESHOLD: f64 = 0.1;
}
