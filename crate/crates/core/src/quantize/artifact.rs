//! Quantizer/codebook artifact files: the shared knowledge between the
//! encoder and decoder sides.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "CSIQ" | version u32 = 1 | kind u8 | bits u8 | per_path_flag u8
//! kind 0..=3 (scalar), flag 0:
//!     n_boundaries u32 | boundaries f64[] | n_levels u32 | levels f64[]
//! kind 0..=3 (scalar), flag 1:
//!     n_paths u32 | symbols_per_path u32 |
//!     per path: bits u8 | n_boundaries u32 | boundaries | n_levels u32 | levels
//! kind 4 (vector), flag 0:
//!     sub_dim u32 | codebook_bits u8 | n_codewords u32 | codewords f64[]
//! ```
//!
//! The header `bits` field carries the shared scalar width (0 when per-path
//! or vector).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::quantize::{Codebook, QuantKind, QuantizerSpec, ScalarSpec};

pub const QUANT_MAGIC: [u8; 4] = *b"CSIQ";
pub const QUANT_VERSION: u32 = 1;
const KIND_VECTOR: u8 = 4;

/// Either flavor of quantization shared knowledge.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantizerArtifact {
    Scalar(QuantizerSpec),
    Vector(Codebook),
}

pub fn write_quantizer(artifact: &QuantizerArtifact, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&QUANT_MAGIC)?;
    w.write_u32::<LittleEndian>(QUANT_VERSION)?;
    match artifact {
        QuantizerArtifact::Scalar(spec) => {
            spec.validate()?;
            w.write_u8(spec.kind.as_u8())?;
            match spec.symbols_per_path {
                None => {
                    let s = &spec.specs[0];
                    w.write_u8(s.bits)?;
                    w.write_u8(0)?;
                    write_scalar_arrays(&mut w, s)?;
                }
                Some(spp) => {
                    w.write_u8(0)?;
                    w.write_u8(1)?;
                    w.write_u32::<LittleEndian>(spec.specs.len() as u32)?;
                    w.write_u32::<LittleEndian>(spp as u32)?;
                    for s in &spec.specs {
                        w.write_u8(s.bits)?;
                        write_scalar_arrays(&mut w, s)?;
                    }
                }
            }
        }
        QuantizerArtifact::Vector(cb) => {
            cb.validate()?;
            w.write_u8(KIND_VECTOR)?;
            w.write_u8(0)?;
            w.write_u8(0)?;
            w.write_u32::<LittleEndian>(cb.dim as u32)?;
            w.write_u8(cb.bits)?;
            w.write_u32::<LittleEndian>(cb.len() as u32)?;
            for &v in &cb.codewords {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_scalar_arrays(w: &mut impl Write, s: &ScalarSpec) -> Result<()> {
    w.write_u32::<LittleEndian>(s.boundaries.len() as u32)?;
    for &b in &s.boundaries {
        w.write_f64::<LittleEndian>(b)?;
    }
    w.write_u32::<LittleEndian>(s.levels.len() as u32)?;
    for &l in &s.levels {
        w.write_f64::<LittleEndian>(l)?;
    }
    Ok(())
}

pub fn read_quantizer(path: impl AsRef<Path>) -> Result<QuantizerArtifact> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::parse("magic", e.to_string()))?;
    if magic != QUANT_MAGIC {
        return Err(Error::parse("magic", format!("expected \"CSIQ\", got {magic:?}")));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|e| Error::parse("version", e.to_string()))?;
    if version != QUANT_VERSION {
        return Err(Error::parse("version", format!("unsupported version {version}")));
    }
    let kind = r.read_u8().map_err(|e| Error::parse("kind", e.to_string()))?;
    let bits = r.read_u8().map_err(|e| Error::parse("bits", e.to_string()))?;
    let per_path = r.read_u8().map_err(|e| Error::parse("per_path_flag", e.to_string()))?;

    if kind == KIND_VECTOR {
        let dim = r
            .read_u32::<LittleEndian>()
            .map_err(|e| Error::parse("sub_dim", e.to_string()))? as usize;
        let cb_bits = r.read_u8().map_err(|e| Error::parse("codebook_bits", e.to_string()))?;
        let n = r
            .read_u32::<LittleEndian>()
            .map_err(|e| Error::parse("n_codewords", e.to_string()))? as usize;
        if !(1..=16).contains(&cb_bits) || n != 1usize << cb_bits || dim == 0 || dim > 1 << 16 {
            return Err(Error::parse(
                "n_codewords",
                format!("inconsistent codebook header: dim {dim}, bits {cb_bits}, n {n}"),
            ));
        }
        let mut codewords = vec![0.0; n * dim];
        for v in &mut codewords {
            *v = r
                .read_f64::<LittleEndian>()
                .map_err(|e| Error::parse("codewords", e.to_string()))?;
        }
        let cb = Codebook { dim, bits: cb_bits, codewords, history: Vec::new() };
        cb.validate()?;
        return Ok(QuantizerArtifact::Vector(cb));
    }

    let qkind = QuantKind::from_u8(kind)?;
    let spec = if per_path == 0 {
        let s = read_scalar_arrays(&mut r, bits)?;
        QuantizerSpec::shared(qkind, s)?
    } else {
        let n_paths = r
            .read_u32::<LittleEndian>()
            .map_err(|e| Error::parse("n_paths", e.to_string()))? as usize;
        let spp = r
            .read_u32::<LittleEndian>()
            .map_err(|e| Error::parse("symbols_per_path", e.to_string()))? as usize;
        if n_paths == 0 || n_paths > 4096 || spp == 0 {
            return Err(Error::parse(
                "n_paths",
                format!("per-path header out of range: {n_paths} paths x {spp}"),
            ));
        }
        let mut specs = Vec::with_capacity(n_paths);
        for _ in 0..n_paths {
            let b = r.read_u8().map_err(|e| Error::parse("bits", e.to_string()))?;
            specs.push(read_scalar_arrays(&mut r, b)?);
        }
        QuantizerSpec::per_path(qkind, specs, spp)?
    };
    Ok(QuantizerArtifact::Scalar(spec))
}

fn read_scalar_arrays(r: &mut impl Read, bits: u8) -> Result<ScalarSpec> {
    let nb = r
        .read_u32::<LittleEndian>()
        .map_err(|e| Error::parse("n_boundaries", e.to_string()))? as usize;
    if nb > 1 << 17 {
        return Err(Error::parse("n_boundaries", format!("{nb} out of range")));
    }
    let mut boundaries = vec![0.0; nb];
    for b in &mut boundaries {
        *b = r
            .read_f64::<LittleEndian>()
            .map_err(|e| Error::parse("boundaries", e.to_string()))?;
    }
    let nl = r
        .read_u32::<LittleEndian>()
        .map_err(|e| Error::parse("n_levels", e.to_string()))? as usize;
    if nl != nb + 1 {
        return Err(Error::parse("n_levels", format!("{nl} levels vs {nb} boundaries")));
    }
    let mut levels = vec![0.0; nl];
    for l in &mut levels {
        *l = r
            .read_f64::<LittleEndian>()
            .map_err(|e| Error::parse("levels", e.to_string()))?;
    }
    let spec = ScalarSpec { bits, boundaries, levels };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::vq_fit;

    #[test]
    fn scalar_round_trip() {
        let spec = QuantizerSpec::shared(QuantKind::MuLaw, ScalarSpec::companded(crate::quantize::CompandLaw::Mu, 4).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csiq");
        write_quantizer(&QuantizerArtifact::Scalar(spec.clone()), &path).unwrap();
        match read_quantizer(&path).unwrap() {
            QuantizerArtifact::Scalar(back) => assert_eq!(back, spec),
            other => panic!("wrong artifact {other:?}"),
        }
    }

    #[test]
    fn per_path_round_trip() {
        let specs = vec![
            ScalarSpec::uniform(3).unwrap(),
            ScalarSpec::constant(0.5),
            ScalarSpec::uniform(1).unwrap(),
        ];
        let spec = QuantizerSpec::per_path(QuantKind::Adaptive, specs, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csiq");
        write_quantizer(&QuantizerArtifact::Scalar(spec.clone()), &path).unwrap();
        match read_quantizer(&path).unwrap() {
            QuantizerArtifact::Scalar(back) => assert_eq!(back, spec),
            other => panic!("wrong artifact {other:?}"),
        }
    }

    #[test]
    fn vector_round_trip_drops_history() {
        let features = vec![vec![0.1, 0.9, 0.4, 0.6], vec![0.2, 0.8, 0.3, 0.7]];
        let cb = vq_fit(&features, 2, 2, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csiq");
        write_quantizer(&QuantizerArtifact::Vector(cb.clone()), &path).unwrap();
        match read_quantizer(&path).unwrap() {
            QuantizerArtifact::Vector(back) => {
                assert_eq!(back.codewords, cb.codewords);
                assert_eq!(back.dim, cb.dim);
                assert_eq!(back.bits, cb.bits);
                assert!(back.history.is_empty());
            }
            other => panic!("wrong artifact {other:?}"),
        }
    }

    #[test]
    fn golden_header_bytes() {
        let spec = QuantizerSpec::shared(QuantKind::Uniform, ScalarSpec::uniform(1).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csiq");
        write_quantizer(&QuantizerArtifact::Scalar(spec), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // magic, version 1, kind uniform, bits 1, flag 0, 1 boundary (0.5),
        // 2 levels (0.25, 0.75)
        let mut expect = vec![
            b'C', b'S', b'I', b'Q', 1, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0,
        ];
        expect.extend_from_slice(&0.5f64.to_le_bytes());
        expect.extend_from_slice(&2u32.to_le_bytes());
        expect.extend_from_slice(&0.25f64.to_le_bytes());
        expect.extend_from_slice(&0.75f64.to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn corrupt_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csiq");
        std::fs::write(&path, b"NOPE").unwrap();
        match read_quantizer(&path) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "magic"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
