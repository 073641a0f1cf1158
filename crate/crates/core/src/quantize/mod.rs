//! Quantizers: uniform scalar, companded, data-adaptive scalar, vector
//! codebooks, per-path bit allocation, and the post-dequantization
//! correction network.

pub mod alloc;
pub mod artifact;
pub mod lloyd;
pub mod offsetnet;
pub mod vq;

pub use alloc::allocate_path_bits;
pub use lloyd::{lloyd_max_fit, lloyd_refine_from_levels, LloydFit};
pub use offsetnet::{offsetnet_apply, offsetnet_train, OffsetNetParams, OffsetTrainConfig};
pub use vq::{vq_decode, vq_encode, vq_fit, Codebook};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mid-rise uniform quantization of `x in [0, 1]` to `bits` bits:
/// `index = floor(clamp(x) * 2^bits)`, clamped to the top cell at `x = 1`.
#[inline]
pub fn hard_quant(x: f64, bits: u8) -> u32 {
    let levels = 1u32 << bits;
    let ix = (x.max(0.0) * levels as f64).floor() as i64;
    ix.clamp(0, (levels - 1) as i64) as u32
}

/// Reconstruction level of a cell: `(index + 0.5) / 2^bits`.
#[inline]
pub fn hard_dequant(index: u32, bits: u8) -> f64 {
    (index as f64 + 0.5) / (1u32 << bits) as f64
}

/// Companding law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompandLaw {
    /// mu-law with mu = 255.
    Mu,
    /// A-law with A = 87.6.
    A,
}

pub const MU: f64 = 255.0;
pub const A_LAW: f64 = 87.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompandDirection {
    Compress,
    Expand,
}

/// Telephony companding curves on [-1, 1]. `Compress` then `Expand` is the
/// identity to floating precision.
pub fn compand(x: f64, law: CompandLaw, direction: CompandDirection) -> Result<f64> {
    if !(x.abs() <= 1.0) {
        return Err(Error::Config(format!("compand input {x} outside [-1, 1]")));
    }
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let ax = x.abs();
    let y = match (law, direction) {
        (CompandLaw::Mu, CompandDirection::Compress) => (1.0 + MU * ax).ln() / (1.0 + MU).ln(),
        (CompandLaw::Mu, CompandDirection::Expand) => ((1.0 + MU).powf(ax) - 1.0) / MU,
        (CompandLaw::A, CompandDirection::Compress) => {
            let denom = 1.0 + A_LAW.ln();
            if ax < 1.0 / A_LAW {
                A_LAW * ax / denom
            } else {
                (1.0 + (A_LAW * ax).ln()) / denom
            }
        }
        (CompandLaw::A, CompandDirection::Expand) => {
            let denom = 1.0 + A_LAW.ln();
            if ax < 1.0 / denom {
                ax * denom / A_LAW
            } else {
                (ax * denom - 1.0).exp() / A_LAW
            }
        }
    };
    Ok(sign * y)
}

/// Scalar quantizer kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantKind {
    Uniform,
    MuLaw,
    ALaw,
    Adaptive,
}

impl QuantKind {
    pub fn as_u8(self) -> u8 {
        match self {
            QuantKind::Uniform => 0,
            QuantKind::MuLaw => 1,
            QuantKind::ALaw => 2,
            QuantKind::Adaptive => 3,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => QuantKind::Uniform,
            1 => QuantKind::MuLaw,
            2 => QuantKind::ALaw,
            3 => QuantKind::Adaptive,
            other => return Err(Error::parse("kind", format!("unknown quantizer kind {other}"))),
        })
    }
}

/// One scalar quantizer: `2^bits` reconstruction levels separated by
/// `2^bits - 1` strictly increasing interior boundaries. `bits = 0` is the
/// degenerate single-level quantizer (no payload symbols).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSpec {
    pub bits: u8,
    pub boundaries: Vec<f64>,
    pub levels: Vec<f64>,
}

impl ScalarSpec {
    pub fn validate(&self) -> Result<()> {
        let want = 1usize << self.bits;
        if self.levels.len() != want {
            return Err(Error::Config(format!(
                "scalar spec with bits {} must have {want} levels, has {}",
                self.bits,
                self.levels.len()
            )));
        }
        if self.boundaries.len() + 1 != self.levels.len() {
            return Err(Error::Config(format!(
                "{} boundaries do not separate {} levels",
                self.boundaries.len(),
                self.levels.len()
            )));
        }
        for w in self.boundaries.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Config(format!(
                    "boundaries not strictly increasing at {} >= {}",
                    w[0], w[1]
                )));
            }
        }
        // each level lies within its cell
        for (k, &lv) in self.levels.iter().enumerate() {
            if k > 0 && lv < self.boundaries[k - 1] {
                return Err(Error::Config(format!("level {k} below its lower boundary")));
            }
            if k < self.boundaries.len() && lv > self.boundaries[k] {
                return Err(Error::Config(format!("level {k} above its upper boundary")));
            }
        }
        Ok(())
    }

    /// Uniform mid-rise quantizer on [0, 1]; reproduces
    /// [`hard_quant`]/[`hard_dequant`] exactly.
    pub fn uniform(bits: u8) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return Err(Error::Config(format!("bits {bits} outside 1..=16")));
        }
        let levels_n = 1usize << bits;
        let step = 1.0 / levels_n as f64;
        let boundaries = (1..levels_n).map(|k| k as f64 * step).collect();
        let levels = (0..levels_n).map(|k| (k as f64 + 0.5) * step).collect();
        Ok(ScalarSpec { bits, boundaries, levels })
    }

    /// Companded quantizer on [0, 1]: uniform cells in the compressed domain,
    /// mapped back through the expansion curve. Denser cells near 0.5 (the
    /// feature midpoint), matching a compressive law applied to centered
    /// features.
    pub fn companded(law: CompandLaw, bits: u8) -> Result<Self> {
        let uni = Self::uniform(bits)?;
        // features live in [0,1]; map to [-1,1], expand uniform edges through
        // the inverse law, map back
        let expand = |y: f64| -> f64 {
            let centered = 2.0 * y - 1.0;
            let x = compand(centered, law, CompandDirection::Expand).expect("edge in range");
            (x + 1.0) / 2.0
        };
        let boundaries: Vec<f64> = uni.boundaries.iter().map(|&b| expand(b)).collect();
        let levels: Vec<f64> = uni.levels.iter().map(|&l| expand(l)).collect();
        let spec = ScalarSpec { bits, boundaries, levels };
        spec.validate()?;
        Ok(spec)
    }

    /// Constant quantizer reconstructing `level`, emitting no payload bits.
    pub fn constant(level: f64) -> Self {
        ScalarSpec { bits: 0, boundaries: Vec::new(), levels: vec![level] }
    }

    /// Cell index of `x` (boundaries belong to the upper cell).
    #[inline]
    pub fn quantize_one(&self, x: f64) -> u32 {
        self.boundaries.partition_point(|&b| b <= x) as u32
    }

    #[inline]
    pub fn dequantize_one(&self, index: u32) -> Result<f64> {
        self.levels
            .get(index as usize)
            .copied()
            .ok_or_else(|| Error::Corrupt(format!("index {index} outside {} levels", self.levels.len())))
    }

    /// Mean squared reconstruction error over `samples`.
    pub fn distortion(&self, samples: &[f64]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = samples
            .iter()
            .map(|&x| {
                let l = self.levels[self.quantize_one(x) as usize];
                (x - l) * (x - l)
            })
            .sum();
        sum / samples.len() as f64
    }
}

/// A feature-vector quantizer: one scalar spec shared by all features, or
/// per-path sub-specs with their own widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub kind: QuantKind,
    /// One entry in the shared case; one per path slot otherwise.
    pub specs: Vec<ScalarSpec>,
    /// Set when `specs` are per-path: features are consumed in path-major
    /// chunks of this many symbols each.
    pub symbols_per_path: Option<usize>,
}

impl QuantizerSpec {
    pub fn shared(kind: QuantKind, spec: ScalarSpec) -> Result<Self> {
        spec.validate()?;
        Ok(QuantizerSpec { kind, specs: vec![spec], symbols_per_path: None })
    }

    pub fn per_path(kind: QuantKind, specs: Vec<ScalarSpec>, symbols_per_path: usize) -> Result<Self> {
        if specs.is_empty() || symbols_per_path == 0 {
            return Err(Error::Config("per-path spec needs paths and symbols".into()));
        }
        for s in &specs {
            s.validate()?;
        }
        Ok(QuantizerSpec { kind, specs, symbols_per_path: Some(symbols_per_path) })
    }

    pub fn validate(&self) -> Result<()> {
        if self.specs.is_empty() {
            return Err(Error::Config("quantizer spec has no scalar specs".into()));
        }
        for s in &self.specs {
            s.validate()?;
        }
        if self.symbols_per_path == Some(0) {
            return Err(Error::Config("symbols_per_path must be >= 1".into()));
        }
        Ok(())
    }

    fn spec_for_symbol(&self, sym: usize) -> Result<&ScalarSpec> {
        match self.symbols_per_path {
            None => Ok(&self.specs[0]),
            Some(spp) => self
                .specs
                .get(sym / spp)
                .ok_or_else(|| Error::Shape(format!("symbol {sym} beyond per-path specs"))),
        }
    }

    /// Expected feature length, when per-path (shared specs accept any).
    pub fn expected_len(&self) -> Option<usize> {
        self.symbols_per_path.map(|spp| spp * self.specs.len())
    }

    /// Bit width of every emitted symbol, in order. Zero-bit paths emit no
    /// symbols.
    pub fn widths(&self, feature_len: usize) -> Result<Vec<u8>> {
        match self.symbols_per_path {
            None => Ok(vec![self.specs[0].bits; feature_len]),
            Some(spp) => {
                if feature_len != spp * self.specs.len() {
                    return Err(Error::Shape(format!(
                        "feature length {feature_len} vs {} paths x {spp} symbols",
                        self.specs.len()
                    )));
                }
                let mut widths = Vec::new();
                for s in &self.specs {
                    if s.bits > 0 {
                        widths.extend(std::iter::repeat_n(s.bits, spp));
                    }
                }
                Ok(widths)
            }
        }
    }

    /// Total payload bits for a feature vector of `feature_len`.
    pub fn payload_bits(&self, feature_len: usize) -> Result<usize> {
        Ok(self.widths(feature_len)?.iter().map(|&w| w as usize).sum())
    }
}

/// Quantizes a feature vector. Zero-bit paths contribute no indices.
pub fn quantize_with_spec(features: &[f64], spec: &QuantizerSpec) -> Result<Vec<u32>> {
    if let Some(expected) = spec.expected_len() {
        if features.len() != expected {
            return Err(Error::Shape(format!(
                "feature length {} does not match spec's {expected}",
                features.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(features.len());
    for (sym, &x) in features.iter().enumerate() {
        let s = spec.spec_for_symbol(sym)?;
        if s.bits > 0 {
            out.push(s.quantize_one(x));
        }
    }
    Ok(out)
}

/// Reconstructs features from indices. Zero-bit paths reconstruct at their
/// single level. `feature_len` is required to place per-path chunks.
pub fn dequantize_with_spec(indices: &[u32], spec: &QuantizerSpec, feature_len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(feature_len);
    let mut cursor = 0usize;
    for sym in 0..feature_len {
        let s = spec.spec_for_symbol(sym)?;
        if s.bits == 0 {
            out.push(s.levels[0]);
        } else {
            let ix = *indices
                .get(cursor)
                .ok_or_else(|| Error::Corrupt("fewer indices than symbols".into()))?;
            out.push(s.dequantize_one(ix)?);
            cursor += 1;
        }
    }
    if cursor != indices.len() {
        return Err(Error::Corrupt(format!(
            "{} indices but only {cursor} consumed",
            indices.len()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hard_quant_examples() {
        assert_eq!(hard_quant(0.3, 3), 2);
        assert_eq!(hard_dequant(2, 3), 0.3125);
        assert_eq!(hard_quant(0.0, 1), 0);
        assert_eq!(hard_dequant(0, 1), 0.25);
        assert_eq!(hard_quant(1.0, 2), 3);
        assert_eq!(hard_dequant(3, 2), 0.875);
        // out-of-range inputs clamp
        assert_eq!(hard_quant(-0.5, 4), 0);
        assert_eq!(hard_quant(7.0, 4), 15);
    }

    #[test]
    fn compand_fixed_points_and_inverse() {
        for law in [CompandLaw::Mu, CompandLaw::A] {
            assert_eq!(compand(0.0, law, CompandDirection::Compress).unwrap(), 0.0);
            let one = compand(1.0, law, CompandDirection::Compress).unwrap();
            assert!((one - 1.0).abs() <= 1e-12, "{law:?} compress(1) = {one}");
            for &x in &[0.3, -0.3, 0.001, -0.9, 0.5] {
                let y = compand(x, law, CompandDirection::Compress).unwrap();
                let back = compand(y, law, CompandDirection::Expand).unwrap();
                assert!((back - x).abs() <= 1e-12, "{law:?} round trip {x} -> {back}");
            }
        }
        assert!(compand(1.5, CompandLaw::Mu, CompandDirection::Compress).is_err());
        assert!(compand(f64::NAN, CompandLaw::A, CompandDirection::Compress).is_err());
    }

    #[test]
    fn compand_is_odd_and_compressive() {
        for law in [CompandLaw::Mu, CompandLaw::A] {
            for &x in &[0.1, 0.4, 0.8] {
                let pos = compand(x, law, CompandDirection::Compress).unwrap();
                let neg = compand(-x, law, CompandDirection::Compress).unwrap();
                assert!((pos + neg).abs() <= 1e-15);
                assert!(pos > x, "{law:?} should expand small magnitudes toward 1");
            }
        }
    }

    #[test]
    fn uniform_spec_reproduces_hard_quant() {
        for bits in [1u8, 2, 3, 6] {
            let spec = ScalarSpec::uniform(bits).unwrap();
            spec.validate().unwrap();
            for i in 0..=1000 {
                let x = i as f64 / 1000.0;
                assert_eq!(spec.quantize_one(x), hard_quant(x, bits), "bits={bits} x={x}");
                let ix = spec.quantize_one(x);
                assert_eq!(spec.dequantize_one(ix).unwrap(), hard_dequant(ix, bits));
            }
            assert_eq!(spec.quantize_one(-0.2), 0);
            assert_eq!(spec.quantize_one(1.0), (1u32 << bits) - 1);
        }
    }

    #[test]
    fn companded_spec_is_denser_near_center() {
        let spec = ScalarSpec::companded(CompandLaw::Mu, 4).unwrap();
        // cell around 0.5 is narrower than the outermost cell
        let mid_cell = spec.boundaries[8] - spec.boundaries[7];
        let outer_cell = 1.0 - spec.boundaries.last().unwrap();
        assert!(mid_cell < outer_cell);
    }

    #[test]
    fn per_path_spec_routes_symbols() {
        let strong = ScalarSpec::uniform(3).unwrap();
        let weak = ScalarSpec::uniform(1).unwrap();
        let silent = ScalarSpec::constant(0.5);
        let spec = QuantizerSpec::per_path(QuantKind::Adaptive, vec![strong, weak, silent], 2).unwrap();

        let features = vec![0.1, 0.9, 0.1, 0.9, 0.1, 0.9];
        let ix = quantize_with_spec(&features, &spec).unwrap();
        assert_eq!(ix.len(), 4); // silent path emits nothing
        assert_eq!(spec.widths(6).unwrap(), vec![3, 3, 1, 1]);
        assert_eq!(spec.payload_bits(6).unwrap(), 8);

        let back = dequantize_with_spec(&ix, &spec, 6).unwrap();
        assert_eq!(back.len(), 6);
        assert_eq!(back[4], 0.5);
        assert_eq!(back[5], 0.5);
    }

    #[test]
    fn dequantize_rejects_bad_indices() {
        let spec = QuantizerSpec::shared(QuantKind::Uniform, ScalarSpec::uniform(2).unwrap()).unwrap();
        assert!(matches!(
            dequantize_with_spec(&[4], &spec, 1),
            Err(Error::Corrupt(_))
        ));
        assert!(dequantize_with_spec(&[1, 2], &spec, 1).is_err());
    }

    proptest! {
        /// quantize . dequantize . quantize == quantize for every spec
        #[test]
        fn prop_idempotence(seed in any::<u64>(), bits in 1u8..8) {
            let mut rng = crate::rng::chacha(seed);
            use rand::Rng;
            let spec = QuantizerSpec::shared(QuantKind::Uniform, ScalarSpec::uniform(bits).unwrap()).unwrap();
            let features: Vec<f64> = (0..64).map(|_| rng.random_range(-0.2..1.2)).collect();
            let q1 = quantize_with_spec(&features, &spec).unwrap();
            let deq = dequantize_with_spec(&q1, &spec, features.len()).unwrap();
            let q2 = quantize_with_spec(&deq, &spec).unwrap();
            prop_assert_eq!(q1, q2);
        }

        /// nearest-level assignment: binary-search quantization matches the
        /// exhaustive nearest-level search for midpoint-boundary specs
        #[test]
        fn prop_matches_exhaustive_nearest(seed in any::<u64>()) {
            let mut rng = crate::rng::chacha(seed);
            use rand::Rng;
            let spec = ScalarSpec::uniform(4).unwrap();
            for _ in 0..128 {
                let x: f64 = rng.random_range(0.0..1.0);
                let fast = spec.quantize_one(x) as usize;
                let brute = spec
                    .levels
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        let da = (x - **a).abs();
                        let db = (x - **b).abs();
                        da.partial_cmp(&db).unwrap()
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                let d_fast = (x - spec.levels[fast]).abs();
                let d_brute = (x - spec.levels[brute]).abs();
                prop_assert!((d_fast - d_brute).abs() <= 1e-15);
            }
        }
    }
}
