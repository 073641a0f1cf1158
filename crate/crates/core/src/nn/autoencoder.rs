//! Encoder/decoder pair assembly and application.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelTensor;
use crate::error::{Error, Result};
use crate::nn::layer::{build_deep_split, Block, FcLayer, Mlp, Net};
use crate::nn::{Activation, Mode, NetworkSpec};
use crate::preprocess::{PathMask, Plan};
use crate::rng::{chacha, derive_seed, STREAM_INIT};

/// Input/output widths of one network application: the per-path chunk in
/// per-path mode, the whole flattened sample in joint mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoDims {
    pub enc_in: usize,
    pub dec_out: usize,
}

/// The trainable codec: encoder, decoder, and an optional post-dequantization
/// correction network (owned here so checkpoints carry every weight).
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub spec: NetworkSpec,
    pub io: IoDims,
    pub encoder: Net,
    pub decoder: Net,
    pub offset: Option<Mlp>,
}

fn build_side(
    in_dim: usize,
    widths: &[usize],
    out_dim: usize,
    final_act: Activation,
    spec: &NetworkSpec,
    rng: &mut impl rand::Rng,
) -> Result<Net> {
    let mut blocks = Vec::new();
    let main = build_deep_split(in_dim, widths, spec.split_fraction, spec.activation, rng)?;
    let mid = main.out_dim();
    blocks.push(main);
    if spec.rezero {
        let inner = Mlp {
            layers: vec![FcLayer::init(mid, mid, spec.activation, rng)],
        };
        blocks.push(Block::ReZero { alpha: 0.0, inner });
    }
    blocks.push(Block::Fc(FcLayer::init(mid, out_dim, final_act, rng)));
    Ok(Net { blocks })
}

impl Autoencoder {
    /// Initializes a fresh codec. Weight draws come from a dedicated init
    /// stream of `seed`, in canonical parameter order.
    pub fn init(spec: &NetworkSpec, io: IoDims, seed: u64) -> Result<Autoencoder> {
        spec.validate()?;
        if io.enc_in == 0 || io.dec_out == 0 {
            return Err(Error::Config("autoencoder io dims must be >= 1".into()));
        }
        let mut rng = chacha(derive_seed(seed, STREAM_INIT, 0));
        let encoder = build_side(
            io.enc_in,
            &spec.encoder_widths,
            spec.feature_len,
            Activation::Logistic,
            spec,
            &mut rng,
        )?;
        let decoder = build_side(
            spec.feature_len,
            &spec.decoder_widths,
            io.dec_out,
            Activation::Identity,
            spec,
            &mut rng,
        )?;
        Ok(Autoencoder {
            spec: spec.clone(),
            io,
            encoder,
            decoder,
            offset: None,
        })
    }

    /// Network applications per sample for an input of `input_len` values.
    pub fn chunk_count(&self, input_len: usize) -> Result<usize> {
        match self.spec.mode {
            Mode::Joint => {
                if input_len != self.io.enc_in {
                    return Err(Error::Shape(format!(
                        "joint input of {} values, expected {}",
                        input_len, self.io.enc_in
                    )));
                }
                Ok(1)
            }
            Mode::PerPathShared => {
                if input_len == 0 || input_len % self.io.enc_in != 0 {
                    return Err(Error::Shape(format!(
                        "per-path input of {} values is not a multiple of {}",
                        input_len, self.io.enc_in
                    )));
                }
                Ok(input_len / self.io.enc_in)
            }
        }
    }

    /// Maps a preprocessed sample to its feature vector. In per-path mode the
    /// same weights apply to every path chunk and the outputs concatenate in
    /// path order, so K retained paths produce `K * feature_len` features.
    pub fn encode(&self, input: &[f64]) -> Result<Vec<f64>> {
        let chunks = self.chunk_count(input.len())?;
        let mut out = Vec::with_capacity(chunks * self.spec.feature_len);
        for c in 0..chunks {
            let x = &input[c * self.io.enc_in..(c + 1) * self.io.enc_in];
            out.extend(self.encoder.forward(x));
        }
        Ok(out)
    }

    /// Network half of decoding: features to normalized target planes.
    pub fn decode_features(&self, features: &[f64]) -> Result<Vec<f64>> {
        let m = self.spec.feature_len;
        if features.is_empty() || features.len() % m != 0 {
            return Err(Error::Shape(format!(
                "feature vector of {} values is not a multiple of {m}",
                features.len()
            )));
        }
        let chunks = features.len() / m;
        if self.spec.mode == Mode::Joint && chunks != 1 {
            return Err(Error::Shape(format!(
                "joint decoder got {chunks} feature chunks"
            )));
        }
        let mut out = Vec::with_capacity(chunks * self.io.dec_out);
        for c in 0..chunks {
            let f = &features[c * m..(c + 1) * m];
            out.extend(self.decoder.forward(f));
        }
        Ok(out)
    }

    /// Full decode: reconstructs the channel tensor, zero-filling discarded
    /// paths and reversing normalization and domain transforms per `plan`.
    pub fn decode(&self, features: &[f64], mask: &PathMask, plan: &Plan) -> Result<ChannelTensor> {
        let target = self.decode_features(features)?;
        plan.invert(&target, mask)
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self.decoder.param_count()
            + self.offset.as_ref().map(|m| m.param_count()).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::SoftQuantSpec;

    fn tiny_spec(mode: Mode) -> NetworkSpec {
        NetworkSpec {
            mode,
            encoder_widths: vec![16, 12],
            decoder_widths: vec![12, 16],
            per_path_input: 8,
            feature_len: 6,
            split_fraction: 0.25,
            activation: Activation::Relu,
            rezero: true,
            soft_quant: SoftQuantSpec { bits: 3, beta: 30.0 },
        }
    }

    #[test]
    fn encode_output_length_and_range() {
        let ae = Autoencoder::init(&tiny_spec(Mode::Joint), IoDims { enc_in: 20, dec_out: 20 }, 1).unwrap();
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = ae.encode(&x).unwrap();
        assert_eq!(f.len(), 6);
        assert!(f.iter().all(|&v| v > 0.0 && v < 1.0));
        // determinism
        assert_eq!(ae.encode(&x).unwrap(), f);
    }

    #[test]
    fn per_path_shared_concatenates() {
        let ae = Autoencoder::init(&tiny_spec(Mode::PerPathShared), IoDims { enc_in: 8, dec_out: 8 }, 2).unwrap();
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.11).cos()).collect(); // 5 chunks
        let f = ae.encode(&x).unwrap();
        assert_eq!(f.len(), 5 * 6);
        // weight sharing: chunk 2 alone encodes to the same slice
        let alone = ae.encode(&x[16..24]).unwrap();
        assert_eq!(&f[12..18], &alone[..]);
        let y = ae.decode_features(&f).unwrap();
        assert_eq!(y.len(), 5 * 8);
    }

    #[test]
    fn init_same_seed_is_identical() {
        let spec = tiny_spec(Mode::Joint);
        let io = IoDims { enc_in: 20, dec_out: 20 };
        let a = Autoencoder::init(&spec, io, 7).unwrap();
        let b = Autoencoder::init(&spec, io, 7).unwrap();
        assert_eq!(a, b);
        let c = Autoencoder::init(&spec, io, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rezero_blocks_start_as_identity() {
        let ae = Autoencoder::init(&tiny_spec(Mode::Joint), IoDims { enc_in: 20, dec_out: 20 }, 3).unwrap();
        for net in [&ae.encoder, &ae.decoder] {
            for block in &net.blocks {
                if let Block::ReZero { alpha, .. } = block {
                    assert_eq!(*alpha, 0.0);
                    let x: Vec<f64> = (0..block.in_dim()).map(|i| (i as f64 * 0.7).sin()).collect();
                    let (y, _) = block.forward_cached(&x);
                    assert_eq!(y, x);
                }
            }
        }
    }
}
