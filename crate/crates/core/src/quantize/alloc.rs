//! Greedy marginal bit allocation across paths.

use crate::error::{Error, Result};

/// Distortion table of one path: `table[b]` is the path's distortion when
/// quantized with `b` bits, for `b` in `0..=B_max`. Must be nonincreasing.
pub type DistortionTable = Vec<f64>;

/// Allocates `budget` one-bit increments across paths: each step grants one
/// bit to the path with the largest distortion decrease, ties going to the
/// lowest path index, until the budget is spent or every path is saturated.
///
/// When every table has nonincreasing marginal gains (convex tables), the
/// greedy allocation is exactly optimal.
pub fn allocate_path_bits(tables: &[DistortionTable], budget: usize) -> Result<Vec<u8>> {
    if tables.is_empty() {
        return Err(Error::Config("allocate_path_bits: no distortion tables".into()));
    }
    for (p, t) in tables.iter().enumerate() {
        if t.is_empty() {
            return Err(Error::Config(format!("path {p}: empty distortion table")));
        }
        if t.len() > 17 {
            return Err(Error::Config(format!(
                "path {p}: table allows {} bits, max is 16",
                t.len() - 1
            )));
        }
        for w in t.windows(2) {
            if w[1] > w[0] + 1e-12 * w[0].abs().max(1.0) {
                return Err(Error::Config(format!(
                    "path {p}: distortion table is not nonincreasing ({} -> {})",
                    w[0], w[1]
                )));
            }
        }
    }

    let mut bits = vec![0u8; tables.len()];
    for _ in 0..budget {
        let mut best: Option<(usize, f64)> = None;
        for (p, t) in tables.iter().enumerate() {
            let b = bits[p] as usize;
            if b + 1 >= t.len() {
                continue;
            }
            let gain = t[b] - t[b + 1];
            let better = match best {
                None => true,
                Some((_, g)) => gain > g,
            };
            if better {
                best = Some((p, gain));
            }
        }
        match best {
            Some((p, _)) => bits[p] += 1,
            None => break, // all paths saturated
        }
    }
    Ok(bits)
}

/// Total distortion of an allocation.
pub fn allocation_distortion(tables: &[DistortionTable], bits: &[u8]) -> f64 {
    tables
        .iter()
        .zip(bits)
        .map(|(t, &b)| t[b as usize])
        .sum()
}
