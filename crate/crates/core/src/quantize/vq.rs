//! Vector quantization: feature vectors are split into sub-vectors of
//! dimension `v`, which are clustered into a `2^b`-codeword codebook shared
//! by encoder and decoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::chacha;

pub const VQ_TOL: f64 = 1e-9;
pub const VQ_MAX_ITERS: usize = 200;

/// A trained codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    /// Sub-vector dimension v.
    pub dim: usize,
    /// Index width b; `2^b` codewords.
    pub bits: u8,
    /// Row-major codewords, `2^b x dim`.
    pub codewords: Vec<f64>,
    /// Mean squared distortion after each training iteration (nonincreasing).
    pub history: Vec<f64>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        1usize << self.bits
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn codeword(&self, i: usize) -> &[f64] {
        &self.codewords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !(1..=16).contains(&self.bits) {
            return Err(Error::Config(format!(
                "codebook dim {} / bits {} invalid",
                self.dim, self.bits
            )));
        }
        if self.codewords.len() != self.len() * self.dim {
            return Err(Error::Config(format!(
                "codebook has {} values, expected {}",
                self.codewords.len(),
                self.len() * self.dim
            )));
        }
        Ok(())
    }
}

#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest codeword, ties to the lowest index.
fn nearest(cb: &Codebook, x: &[f64]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for i in 0..cb.len() {
        let d = dist_sq(cb.codeword(i), x);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// Splits flat feature vectors into sub-vectors of length `dim`.
fn subvectors(features: &[Vec<f64>], dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut subs = Vec::new();
    for (i, f) in features.iter().enumerate() {
        if f.is_empty() || f.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "feature vector {i} of length {} is not divisible by {dim}",
                f.len()
            )));
        }
        for chunk in f.chunks_exact(dim) {
            subs.push(chunk.to_vec());
        }
    }
    Ok(subs)
}

/// Trains a codebook by k-means with farthest-point seeding.
///
/// Seeding: the first codeword is a seeded-random sub-vector; each next is
/// the sub-vector farthest from its nearest chosen codeword (ties to the
/// lowest index). Iterations assign each sub-vector to its nearest codeword
/// and recenter; an emptied codeword is re-seeded from the sub-vector
/// farthest from its assigned codeword. Training stops when the relative
/// distortion improvement drops below `1e-9` or after 200 iterations.
pub fn vq_fit(features: &[Vec<f64>], sub_dim: usize, bits: u8, seed: u64) -> Result<Codebook> {
    if sub_dim == 0 || !(1..=16).contains(&bits) {
        return Err(Error::Config(format!("vq_fit: dim {sub_dim} / bits {bits} invalid")));
    }
    let subs = subvectors(features, sub_dim)?;
    let k = 1usize << bits;
    if subs.len() < k {
        return Err(Error::Config(format!(
            "vq_fit: {} sub-vectors cannot seed {k} codewords",
            subs.len()
        )));
    }

    // farthest-point seeding
    let mut rng = chacha(seed);
    use rand::Rng;
    let first = rng.random_range(0..subs.len());
    let mut codewords: Vec<f64> = Vec::with_capacity(k * sub_dim);
    codewords.extend_from_slice(&subs[first]);
    let mut min_d: Vec<f64> = subs.iter().map(|s| dist_sq(s, &subs[first])).collect();
    while codewords.len() < k * sub_dim {
        let far = min_d
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .unwrap();
        codewords.extend_from_slice(&subs[far]);
        let new = &subs[far];
        for (s, d) in subs.iter().zip(min_d.iter_mut()) {
            *d = d.min(dist_sq(s, new));
        }
    }

    let mut cb = Codebook { dim: sub_dim, bits, codewords, history: Vec::new() };
    let mut assign = vec![0usize; subs.len()];
    let mut prev = f64::INFINITY;

    for _ in 0..VQ_MAX_ITERS {
        // assignment
        let mut dist_acc = 0.0;
        for (i, s) in subs.iter().enumerate() {
            let (c, d) = nearest(&cb, s);
            assign[i] = c;
            dist_acc += d;
        }

        // recenter
        let mut sums = vec![0.0; k * sub_dim];
        let mut counts = vec![0usize; k];
        for (s, &c) in subs.iter().zip(&assign) {
            counts[c] += 1;
            for (j, &x) in s.iter().enumerate() {
                sums[c * sub_dim + j] += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..sub_dim {
                    cb.codewords[c * sub_dim + j] = sums[c * sub_dim + j] / counts[c] as f64;
                }
            } else {
                // re-seed from the farthest sub-vector
                let far = subs
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (i, dist_sq(s, cb.codeword(assign[i]))))
                    .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
                    .map(|(i, _)| i)
                    .unwrap();
                let target = subs[far].clone();
                cb.codewords[c * sub_dim..(c + 1) * sub_dim].copy_from_slice(&target);
            }
        }

        let mse = dist_acc / (subs.len() * sub_dim) as f64;
        cb.history.push(mse);
        if prev.is_finite() && prev - mse <= VQ_TOL * prev.max(f64::MIN_POSITIVE) {
            break;
        }
        prev = mse;
    }
    // final recorded distortion reflects the final codebook
    let final_mse: f64 =
        subs.iter().map(|s| nearest(&cb, s).1).sum::<f64>() / (subs.len() * sub_dim) as f64;
    cb.history.push(final_mse);
    Ok(cb)
}

/// Encodes one feature vector: nearest codeword per sub-vector. Payload is
/// `(len / dim) * bits` bits.
pub fn vq_encode(features: &[f64], cb: &Codebook) -> Result<Vec<u32>> {
    if features.is_empty() || features.len() % cb.dim != 0 {
        return Err(Error::Shape(format!(
            "feature length {} not divisible by sub-vector dim {}",
            features.len(),
            cb.dim
        )));
    }
    Ok(features
        .chunks_exact(cb.dim)
        .map(|s| nearest(cb, s).0 as u32)
        .collect())
}

/// Decodes indices back to the codeword concatenation.
pub fn vq_decode(indices: &[u32], cb: &Codebook) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(indices.len() * cb.dim);
    for &ix in indices {
        if ix as usize >= cb.len() {
            return Err(Error::Corrupt(format!(
                "codeword index {ix} outside codebook of {}",
                cb.len()
            )));
        }
        out.extend_from_slice(cb.codeword(ix as usize));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::lloyd::{lloyd_max_fit, DEFAULT_MAX_ITERS, DEFAULT_TOL};
    use rand::Rng;

    #[test]
    fn distinct_subvectors_reach_zero_distortion() {
        // 4 distinct sub-vectors, 4 codewords
        let features = vec![
            vec![0.0, 0.0, 1.0, 1.0],
            vec![2.0, 2.0, 3.0, 3.0],
        ];
        let cb = vq_fit(&features, 2, 2, 1).unwrap();
        assert!(cb.history.last().unwrap() <= &1e-30);
        // every sub-vector encodes to itself
        for f in &features {
            let ix = vq_encode(f, &cb).unwrap();
            let back = vq_decode(&ix, &cb).unwrap();
            assert_eq!(&back, f);
        }
    }

    #[test]
    fn encode_returns_exact_codeword_index() {
        let mut rng = crate::rng::chacha(5);
        let features: Vec<Vec<f64>> = (0..64)
            .map(|_| (0..6).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let cb = vq_fit(&features, 2, 3, 2).unwrap();
        let probe = cb.codeword(5).to_vec();
        assert_eq!(vq_encode(&probe, &cb).unwrap(), vec![5]);
    }

    #[test]
    fn history_nonincreasing_and_decode_in_codebook() {
        let mut rng = crate::rng::chacha(8);
        let features: Vec<Vec<f64>> = (0..128)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let cb = vq_fit(&features, 2, 4, 3).unwrap();
        for w in cb.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "distortion rose {} -> {}", w[0], w[1]);
        }
        let ix = vq_encode(&features[0], &cb).unwrap();
        let dec = vq_decode(&ix, &cb).unwrap();
        for chunk in dec.chunks_exact(cb.dim) {
            assert!((0..cb.len()).any(|c| cb.codeword(c) == chunk));
        }
    }

    #[test]
    fn encode_matches_brute_force_nearest() {
        let mut rng = crate::rng::chacha(21);
        let features: Vec<Vec<f64>> = (0..64)
            .map(|_| (0..4).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let cb = vq_fit(&features, 2, 3, 9).unwrap();
        for f in &features {
            let fast = vq_encode(f, &cb).unwrap();
            for (si, s) in f.chunks_exact(2).enumerate() {
                let brute = (0..cb.len())
                    .min_by(|&a, &b| {
                        dist_sq(cb.codeword(a), s)
                            .partial_cmp(&dist_sq(cb.codeword(b), s))
                            .unwrap()
                            .then(a.cmp(&b))
                    })
                    .unwrap();
                let d_fast = dist_sq(cb.codeword(fast[si] as usize), s);
                let d_brute = dist_sq(cb.codeword(brute), s);
                assert!((d_fast - d_brute).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn scalar_vq_matches_adaptive_scalar_fit() {
        // v = 1 k-means should land within 1% of the scalar alternating fit
        let mut rng = crate::rng::chacha(17);
        let scalars: Vec<f64> = (0..20_000).map(|_| {
            let u: f64 = rng.random_range(0.0..1.0);
            u * u // skewed so adaptive beats uniform
        }).collect();
        let features: Vec<Vec<f64>> = scalars.chunks(10).map(|c| c.to_vec()).collect();

        let cb = vq_fit(&features, 1, 3, 4).unwrap();
        let vq_d = *cb.history.last().unwrap();
        let lloyd = lloyd_max_fit(&scalars, 3, DEFAULT_MAX_ITERS, DEFAULT_TOL).unwrap();
        let lloyd_d = *lloyd.history.last().unwrap();
        let rel = (vq_d - lloyd_d).abs() / lloyd_d;
        assert!(rel <= 0.01, "vq {vq_d} vs scalar fit {lloyd_d} (rel {rel})");
    }

    #[test]
    fn vq_decode_rejects_out_of_range() {
        let features = vec![vec![0.0, 1.0, 2.0, 3.0]];
        let cb = vq_fit(&features, 1, 2, 1).unwrap();
        assert!(matches!(vq_decode(&[4], &cb), Err(Error::Corrupt(_))));
    }
}
