//! Model checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "CSIM" | version u32 = 1 | spec_len u32 | spec JSON (envelope with
//! the network spec, io dims and an offset-net flag) | parameter blobs as
//! f64 arrays in canonical declaration order (encoder, decoder, then the
//! offset net when present) | trailing u64 = total f64 count written
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::autoencoder::{Autoencoder, IoDims};
use crate::nn::layer::{for_each_param, for_each_param_mut, FcLayer, Mlp, Net};
use crate::nn::NetworkSpec;

pub const MODEL_MAGIC: [u8; 4] = *b"CSIM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecEnvelope {
    spec: NetworkSpec,
    io: IoDims,
    /// Widths of the offset net layers, empty when absent.
    offset_widths: Vec<(usize, usize)>,
    offset_acts: Vec<crate::nn::Activation>,
}

fn mlp_param_view(mlp: &Mlp, f: &mut impl FnMut(&[f64])) {
    for l in &mlp.layers {
        f(&l.w);
        f(&l.b);
    }
}

fn mlp_param_view_mut(mlp: &mut Mlp, f: &mut impl FnMut(&mut [f64])) {
    for l in &mut mlp.layers {
        f(&mut l.w);
        f(&mut l.b);
    }
}

pub fn write_model(ae: &Autoencoder, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MODEL_MAGIC)?;
    w.write_u32::<LittleEndian>(MODEL_VERSION)?;

    let envelope = SpecEnvelope {
        spec: ae.spec.clone(),
        io: ae.io,
        offset_widths: ae
            .offset
            .as_ref()
            .map(|m| m.layers.iter().map(|l| (l.in_dim, l.out_dim)).collect())
            .unwrap_or_default(),
        offset_acts: ae
            .offset
            .as_ref()
            .map(|m| m.layers.iter().map(|l| l.act).collect())
            .unwrap_or_default(),
    };
    let spec_json = serde_json::to_vec(&envelope)?;
    w.write_u32::<LittleEndian>(spec_json.len() as u32)?;
    w.write_all(&spec_json)?;

    let mut params: Vec<f64> = Vec::new();
    {
        let mut dump = |s: &[f64]| params.extend_from_slice(s);
        for_each_param(&ae.encoder, &mut dump);
        for_each_param(&ae.decoder, &mut dump);
        if let Some(mlp) = &ae.offset {
            mlp_param_view(mlp, &mut dump);
        }
    }
    for &v in &params {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.write_u64::<LittleEndian>(params.len() as u64)?;
    w.flush()?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<Autoencoder> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::parse("magic", e.to_string()))?;
    if magic != MODEL_MAGIC {
        return Err(Error::parse("magic", format!("expected \"CSIM\", got {magic:?}")));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|e| Error::parse("version", e.to_string()))?;
    if version != MODEL_VERSION {
        return Err(Error::parse("version", format!("unsupported version {version}")));
    }
    let spec_len = r
        .read_u32::<LittleEndian>()
        .map_err(|e| Error::parse("spec", e.to_string()))? as usize;
    if spec_len > 1 << 20 {
        return Err(Error::parse("spec", format!("spec length {spec_len} out of range")));
    }
    let mut spec_json = vec![0u8; spec_len];
    r.read_exact(&mut spec_json).map_err(|e| Error::parse("spec", e.to_string()))?;
    let envelope: SpecEnvelope =
        serde_json::from_slice(&spec_json).map_err(|e| Error::parse("spec", e.to_string()))?;

    // rebuild the shapes with zeroed parameters, then fill them in order
    let mut ae = Autoencoder::init(&envelope.spec, envelope.io, 0)?;
    if !envelope.offset_widths.is_empty() {
        let layers: Vec<FcLayer> = envelope
            .offset_widths
            .iter()
            .zip(&envelope.offset_acts)
            .map(|(&(i, o), &act)| FcLayer::zeros(i, o, act))
            .collect();
        ae.offset = Some(Mlp { layers });
    }

    let mut count: u64 = 0;
    let mut failed: Option<String> = None;
    {
        let mut fill = |s: &mut [f64]| {
            if failed.is_some() {
                return;
            }
            for v in s.iter_mut() {
                match r.read_f64::<LittleEndian>() {
                    Ok(x) => *v = x,
                    Err(e) => {
                        failed = Some(e.to_string());
                        return;
                    }
                }
            }
            count += s.len() as u64;
        };
        fill_net(&mut ae.encoder, &mut fill);
        fill_net(&mut ae.decoder, &mut fill);
        if let Some(mlp) = &mut ae.offset {
            mlp_param_view_mut(mlp, &mut fill);
        }
    }
    if let Some(reason) = failed {
        return Err(Error::parse("params", reason));
    }

    let declared = r
        .read_u64::<LittleEndian>()
        .map_err(|e| Error::parse("length_check", e.to_string()))?;
    if declared != count {
        return Err(Error::parse(
            "length_check",
            format!("declared {declared} f64 values, read {count}"),
        ));
    }
    Ok(ae)
}

fn fill_net(net: &mut Net, f: &mut impl FnMut(&mut [f64])) {
    for_each_param_mut(net, f);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mode, SoftQuantSpec};

    fn sample_ae() -> Autoencoder {
        let spec = NetworkSpec {
            mode: Mode::Joint,
            encoder_widths: vec![12, 9],
            decoder_widths: vec![9, 12],
            per_path_input: 8,
            feature_len: 5,
            split_fraction: 0.3,
            activation: Activation::Relu,
            rezero: true,
            soft_quant: SoftQuantSpec { bits: 4, beta: 100.0 },
        };
        let mut ae = Autoencoder::init(&spec, IoDims { enc_in: 10, dec_out: 10 }, 55).unwrap();
        ae.offset = Some(Mlp {
            layers: vec![
                FcLayer::init(5, 10, Activation::Relu, &mut crate::rng::chacha(1)),
                FcLayer::init(10, 10, Activation::Relu, &mut crate::rng::chacha(2)),
                FcLayer::zeros(10, 5, Activation::Identity),
            ],
        });
        ae
    }

    #[test]
    fn checkpoint_round_trip() {
        let ae = sample_ae();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csim");
        write_model(&ae, &path).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(back, ae);
    }

    #[test]
    fn corrupt_length_check_detected() {
        let ae = sample_ae();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csim");
        write_model(&ae, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 1] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        match read_model(&path) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "length_check"),
            other => panic!("expected length check failure, got {other:?}"),
        }
    }

    #[test]
    fn truncated_params_detected() {
        let ae = sample_ae();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csim");
        write_model(&ae, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 64]).unwrap();
        assert!(read_model(&path).is_err());
    }
}
