//! Binary dataset files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "CSID" | version u32 = 1 | n_samples u32 | n_paths u32 | n_tx u32 |
//! n_rx u32 | offset f64 | scale f64 |
//! then per sample: n_paths*n_tx*n_rx pairs of (re f32, im f32),
//! path-major, then tx, then rx
//! ```
//!
//! Samples are synthesized at `f32` precision, so write-then-read returns a
//! bit-identical dataset. The split tag is not part of the format; a file
//! read back is treated as a standalone train-tagged collection.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;

use crate::channel::{ChannelConfig, ChannelTensor, Dataset, NormStats, Split};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"CSID";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&DATASET_MAGIC)?;
    w.write_u32::<LittleEndian>(DATASET_VERSION)?;
    w.write_u32::<LittleEndian>(dataset.samples.len() as u32)?;
    let (n_paths, n_tx, n_rx) = match dataset.samples.first() {
        Some(s) => s.shape(),
        None => (dataset.config.n_paths, dataset.config.n_tx, dataset.config.n_rx),
    };
    w.write_u32::<LittleEndian>(n_paths as u32)?;
    w.write_u32::<LittleEndian>(n_tx as u32)?;
    w.write_u32::<LittleEndian>(n_rx as u32)?;
    w.write_f64::<LittleEndian>(dataset.stats.offset)?;
    w.write_f64::<LittleEndian>(dataset.stats.scale)?;
    for sample in &dataset.samples {
        if sample.shape() != (n_paths, n_tx, n_rx) {
            return Err(Error::Shape("write_dataset: mixed sample shapes".into()));
        }
        for c in sample.data() {
            w.write_f32::<LittleEndian>(c.re as f32)?;
            w.write_f32::<LittleEndian>(c.im as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::parse("magic", e.to_string()))?;
    if magic != DATASET_MAGIC {
        return Err(Error::parse("magic", format!("expected \"CSID\", got {magic:?}")));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|e| Error::parse("version", e.to_string()))?;
    if version != DATASET_VERSION {
        return Err(Error::parse("version", format!("unsupported version {version}")));
    }
    let n_samples = r
        .read_u32::<LittleEndian>()
        .map_err(|e| Error::parse("n_samples", e.to_string()))? as usize;
    let n_paths = read_dim(&mut r, "n_paths")?;
    let n_tx = read_dim(&mut r, "n_tx")?;
    let n_rx = read_dim(&mut r, "n_rx")?;
    let offset = r
        .read_f64::<LittleEndian>()
        .map_err(|e| Error::parse("offset", e.to_string()))?;
    let scale = r
        .read_f64::<LittleEndian>()
        .map_err(|e| Error::parse("scale", e.to_string()))?;
    if !(scale > 0.0) || !scale.is_finite() || !offset.is_finite() {
        return Err(Error::parse("scale", format!("invalid stats offset={offset} scale={scale}")));
    }

    let per_sample = n_paths * n_tx * n_rx;
    let mut samples = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let mut data = Vec::with_capacity(per_sample);
        for _ in 0..per_sample {
            let re = r
                .read_f32::<LittleEndian>()
                .map_err(|e| Error::parse("samples", format!("sample {s}: {e}")))?;
            let im = r
                .read_f32::<LittleEndian>()
                .map_err(|e| Error::parse("samples", format!("sample {s}: {e}")))?;
            data.push(Complex64::new(re as f64, im as f64));
        }
        samples.push(ChannelTensor::from_data(n_paths, n_tx, n_rx, data)?);
    }
    // reject trailing garbage
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::parse("samples", "trailing bytes after last sample"));
    }

    let config = ChannelConfig {
        n_paths,
        n_tx,
        n_rx,
        n_train: n_samples,
        n_test: 0,
        ..ChannelConfig::default()
    };
    Ok(Dataset {
        config,
        split: Split::Train,
        samples,
        stats: NormStats { offset, scale },
    })
}

fn read_dim(r: &mut impl Read, field: &'static str) -> Result<usize> {
    let v = r
        .read_u32::<LittleEndian>()
        .map_err(|e| Error::parse(field, e.to_string()))? as usize;
    if v == 0 || v > 1 << 20 {
        return Err(Error::parse(field, format!("dimension {v} out of range")));
    }
    Ok(v)
}
