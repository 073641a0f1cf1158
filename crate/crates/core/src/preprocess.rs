//! Channel preprocessing: per-path energy analysis, path cutting with a mask
//! side-channel, unitary DFT domain transforms, feature-map construction and
//! antenna-dimension augmentation.
//!
//! All operations here are pure; [`Plan`] bundles a fixed choice of them
//! (plus normalization stats fit on the training split) so the decoder can
//! reverse exactly what the encoder applied.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelTensor, Dataset, NormStats};
use crate::error::{Error, Result};
use crate::rng::chacha;

// ---------------------------------------------------------------------------
// Path mask and cutting
// ---------------------------------------------------------------------------

/// Which of the original paths were retained by path cutting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathMask {
    retained: Vec<bool>,
}

impl PathMask {
    pub fn new(retained: Vec<bool>) -> Result<Self> {
        let k = retained.iter().filter(|&&b| b).count();
        if k == 0 {
            return Err(Error::Config("PathMask: at least one path must be retained".into()));
        }
        Ok(PathMask { retained })
    }

    pub fn all(n_paths: usize) -> Self {
        PathMask { retained: vec![true; n_paths] }
    }

    pub fn from_indices(n_paths: usize, indices: &[usize]) -> Result<Self> {
        let mut retained = vec![false; n_paths];
        for &i in indices {
            if i >= n_paths {
                return Err(Error::Shape(format!("mask index {i} out of range ({n_paths} paths)")));
            }
            retained[i] = true;
        }
        Self::new(retained)
    }

    pub fn n_paths(&self) -> usize {
        self.retained.len()
    }

    /// K, the number of retained paths.
    pub fn retained_count(&self) -> usize {
        self.retained.iter().filter(|&&b| b).count()
    }

    pub fn is_retained(&self, d: usize) -> bool {
        self.retained[d]
    }

    pub fn bits(&self) -> &[bool] {
        &self.retained
    }

    /// Original indices of the retained paths, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.retained
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

/// Path-cutting rule: keep the K most energetic paths, or the minimal
/// energy-sorted prefix reaching cumulative fraction tau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathRule {
    TopK(usize),
    CumEnergy(f64),
}

impl PathRule {
    pub fn validate(&self, n_paths: usize) -> Result<()> {
        match *self {
            PathRule::TopK(k) => {
                if k == 0 || k > n_paths {
                    return Err(Error::Config(format!("TopK({k}) out of range 1..={n_paths}")));
                }
            }
            PathRule::CumEnergy(tau) => {
                if !(tau > 0.0 && tau <= 1.0) {
                    return Err(Error::Config(format!("CumEnergy({tau}) outside (0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Per-path energy `e_d = sum_{i,j} |h_{i,j,d}|^2`, optionally normalized to
/// sum to one.
pub fn path_energy(h: &ChannelTensor, normalized: bool) -> Result<Vec<f64>> {
    let mut e: Vec<f64> = (0..h.n_paths())
        .map(|d| h.path(d).iter().map(|c| c.norm_sqr()).sum())
        .collect();
    if normalized {
        let total: f64 = e.iter().sum();
        if total <= 0.0 {
            return Err(Error::Degenerate("path_energy: all-zero tensor".into()));
        }
        for x in &mut e {
            *x /= total;
        }
    }
    Ok(e)
}

/// Retains the most energetic paths per `rule`. The output keeps the
/// original relative path order; the mask records the original indices.
/// Ties (equal energies) resolve toward the smaller original index.
pub fn path_cut(h: &ChannelTensor, rule: PathRule) -> Result<(ChannelTensor, PathMask)> {
    rule.validate(h.n_paths())?;
    let energy = path_energy(h, true)?;
    // sort by energy descending, index ascending on ties
    let mut order: Vec<usize> = (0..h.n_paths()).collect();
    order.sort_by(|&a, &b| {
        energy[b]
            .partial_cmp(&energy[a])
            .unwrap()
            .then_with(|| a.cmp(&b))
    });

    let keep: Vec<usize> = match rule {
        PathRule::TopK(k) => order[..k].to_vec(),
        PathRule::CumEnergy(tau) => {
            let mut acc = 0.0;
            let mut keep = Vec::new();
            for &d in &order {
                keep.push(d);
                acc += energy[d];
                if acc >= tau - 1e-15 {
                    break;
                }
            }
            keep
        }
    };
    let mask = PathMask::from_indices(h.n_paths(), &keep)?;

    let indices = mask.indices();
    let mut cut = ChannelTensor::zeros(indices.len(), h.n_tx(), h.n_rx());
    for (slot, &d) in indices.iter().enumerate() {
        cut.path_mut(slot).copy_from_slice(h.path(d));
    }
    Ok((cut, mask))
}

/// Places retained paths back at their original indices, zero-filling the
/// discarded ones.
pub fn path_restore(h_cut: &ChannelTensor, mask: &PathMask) -> Result<ChannelTensor> {
    if h_cut.n_paths() != mask.retained_count() {
        return Err(Error::Shape(format!(
            "path_restore: tensor has {} paths but mask retains {}",
            h_cut.n_paths(),
            mask.retained_count()
        )));
    }
    let mut full = ChannelTensor::zeros(mask.n_paths(), h_cut.n_tx(), h_cut.n_rx());
    for (slot, &d) in mask.indices().iter().enumerate() {
        full.path_mut(d).copy_from_slice(h_cut.path(slot));
    }
    Ok(full)
}

// ---------------------------------------------------------------------------
// Unitary DFT transforms
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Unitary DFT matrix entry exp(-j*2*pi*k*n/len)/sqrt(len) (forward).
fn dft_1d(input: &[Complex64], output: &mut [Complex64], direction: Direction) {
    let n = output.len();
    debug_assert!(input.len() <= n);
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let scale = 1.0 / (n as f64).sqrt();
    let step = sign * std::f64::consts::TAU / n as f64;
    for (k, out) in output.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, &x) in input.iter().enumerate() {
            acc += x * Complex64::from_polar(1.0, step * (k * t) as f64);
        }
        *out = acc * scale;
    }
}

/// Unitary DFT across the tx dimension and across the rx dimension of every
/// path (antenna -> angular domain). The inverse undoes it exactly.
pub fn dft_angular(h: &ChannelTensor, direction: Direction) -> ChannelTensor {
    let (n_paths, n_tx, n_rx) = h.shape();
    let mut out = ChannelTensor::zeros(n_paths, n_tx, n_rx);
    let mut col_in = vec![Complex64::new(0.0, 0.0); n_tx.max(n_rx)];
    let mut col_out = vec![Complex64::new(0.0, 0.0); n_tx.max(n_rx)];
    for d in 0..n_paths {
        // rows: transform across rx for each tx
        for i in 0..n_tx {
            for j in 0..n_rx {
                col_in[j] = h.at(d, i, j);
            }
            dft_1d(&col_in[..n_rx], &mut col_out[..n_rx], direction);
            for j in 0..n_rx {
                out.set(d, i, j, col_out[j]);
            }
        }
        // columns: transform across tx for each rx
        for j in 0..n_rx {
            for i in 0..n_tx {
                col_in[i] = out.at(d, i, j);
            }
            dft_1d(&col_in[..n_tx], &mut col_out[..n_tx], direction);
            for i in 0..n_tx {
                out.set(d, i, j, col_out[i]);
            }
        }
    }
    out
}

/// Delay -> frequency transform: zero-pads the path dimension to `n_bins`
/// taps and applies a unitary DFT along it. Energy-preserving isometry.
pub fn dft_frequency_fwd(h: &ChannelTensor, n_bins: usize) -> Result<ChannelTensor> {
    let (n_paths, n_tx, n_rx) = h.shape();
    if n_bins < n_paths {
        return Err(Error::Config(format!(
            "dft_frequency_fwd: {n_bins} bins cannot hold {n_paths} taps"
        )));
    }
    let mut out = ChannelTensor::zeros(n_bins, n_tx, n_rx);
    let mut taps = vec![Complex64::new(0.0, 0.0); n_paths];
    let mut bins = vec![Complex64::new(0.0, 0.0); n_bins];
    for i in 0..n_tx {
        for j in 0..n_rx {
            for (d, tap) in taps.iter_mut().enumerate() {
                *tap = h.at(d, i, j);
            }
            dft_1d(&taps, &mut bins, Direction::Forward);
            for (k, &b) in bins.iter().enumerate() {
                out.set(k, i, j, b);
            }
        }
    }
    Ok(out)
}

/// Frequency -> delay transform: inverse unitary DFT along the bin dimension,
/// truncated to the known `n_taps` support. Exact inverse of
/// [`dft_frequency_fwd`] on its image.
pub fn dft_frequency_inv(h: &ChannelTensor, n_taps: usize) -> Result<ChannelTensor> {
    let (n_bins, n_tx, n_rx) = h.shape();
    if n_taps > n_bins {
        return Err(Error::Config(format!(
            "dft_frequency_inv: {n_taps} taps exceed {n_bins} bins"
        )));
    }
    let mut out = ChannelTensor::zeros(n_taps, n_tx, n_rx);
    let mut bins = vec![Complex64::new(0.0, 0.0); n_bins];
    let mut taps = vec![Complex64::new(0.0, 0.0); n_bins];
    for i in 0..n_tx {
        for j in 0..n_rx {
            for (k, bin) in bins.iter_mut().enumerate() {
                *bin = h.at(k, i, j);
            }
            dft_1d(&bins, &mut taps, Direction::Inverse);
            for (d, &t) in taps.iter().take(n_taps).enumerate() {
                out.set(d, i, j, t);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Feature maps
// ---------------------------------------------------------------------------

/// How complex coefficients become real feature channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// (re, im)
    ReIm2,
    /// (|h|, arg h), phase in (-pi, pi], phase of 0 is 0
    AmpPhase2,
    /// (re, im, arg h, |h|^2)
    ReImPhaseEnergy4,
}

impl FeatureMode {
    pub fn channels(self) -> usize {
        match self {
            FeatureMode::ReIm2 | FeatureMode::AmpPhase2 => 2,
            FeatureMode::ReImPhaseEnergy4 => 4,
        }
    }
}

/// Real-valued view of a channel tensor: `data[d][ch][pair]`, channel-planar
/// within each path.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub mode: FeatureMode,
    pub n_paths: usize,
    pub n_pairs: usize,
    pub data: Vec<f64>,
}

impl FeatureTensor {
    #[inline]
    pub fn at(&self, d: usize, ch: usize, pair: usize) -> f64 {
        self.data[(d * self.mode.channels() + ch) * self.n_pairs + pair]
    }

    pub fn path_len(&self) -> usize {
        self.mode.channels() * self.n_pairs
    }
}

pub fn to_feature_maps(h: &ChannelTensor, mode: FeatureMode) -> FeatureTensor {
    let (n_paths, n_tx, n_rx) = h.shape();
    let n_pairs = n_tx * n_rx;
    let ch = mode.channels();
    let mut data = vec![0.0; n_paths * ch * n_pairs];
    for d in 0..n_paths {
        for (pair, c) in h.path(d).iter().enumerate() {
            let base = d * ch * n_pairs;
            let phase = if c.re == 0.0 && c.im == 0.0 { 0.0 } else { c.im.atan2(c.re) };
            match mode {
                FeatureMode::ReIm2 => {
                    data[base + pair] = c.re;
                    data[base + n_pairs + pair] = c.im;
                }
                FeatureMode::AmpPhase2 => {
                    data[base + pair] = c.norm();
                    data[base + n_pairs + pair] = phase;
                }
                FeatureMode::ReImPhaseEnergy4 => {
                    data[base + pair] = c.re;
                    data[base + n_pairs + pair] = c.im;
                    data[base + 2 * n_pairs + pair] = phase;
                    data[base + 3 * n_pairs + pair] = c.norm_sqr();
                }
            }
        }
    }
    FeatureTensor { mode, n_paths, n_pairs, data }
}

/// Inverts [`to_feature_maps`]. ReIm modes are exact; AmpPhase reconstructs
/// `amp * exp(j*phase)`, and the 4-channel mode uses its (re, im) planes.
pub fn from_feature_maps(f: &FeatureTensor, n_tx: usize, n_rx: usize) -> Result<ChannelTensor> {
    if n_tx * n_rx != f.n_pairs {
        return Err(Error::Shape(format!(
            "from_feature_maps: {} pairs vs {}x{} antennas",
            f.n_pairs, n_tx, n_rx
        )));
    }
    let mut h = ChannelTensor::zeros(f.n_paths, n_tx, n_rx);
    for d in 0..f.n_paths {
        for pair in 0..f.n_pairs {
            let c = match f.mode {
                FeatureMode::ReIm2 | FeatureMode::ReImPhaseEnergy4 => {
                    Complex64::new(f.at(d, 0, pair), f.at(d, 1, pair))
                }
                FeatureMode::AmpPhase2 => Complex64::from_polar(f.at(d, 0, pair), f.at(d, 1, pair)),
            };
            let (i, j) = (pair / n_rx, pair % n_rx);
            h.set(d, i, j, c);
        }
    }
    Ok(h)
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentFlags {
    pub flip_tx: bool,
    pub flip_rx: bool,
    pub translate_tx: bool,
    pub translate_rx: bool,
}

/// Randomly flips and/or cyclically shifts antenna dimensions.
///
/// For each enabled flag, in the fixed order (flip_tx, flip_rx, translate_tx,
/// translate_rx), one uniform draw decides application with probability `p`;
/// translations draw a shift in `1..n`. Deterministic given the seed, and a
/// pure entry permutation, so the norm is preserved exactly.
pub fn augment(sample: &ChannelTensor, rng_seed: u64, flags: AugmentFlags, p: f64) -> Result<ChannelTensor> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("augment probability {p} outside [0, 1]")));
    }
    let mut rng = chacha(rng_seed);
    let mut out = sample.clone();
    let (_, n_tx, n_rx) = sample.shape();

    let applies = |rng: &mut rand_chacha::ChaCha8Rng| rng.random_range(0.0..1.0) < p;

    if flags.flip_tx && applies(&mut rng) {
        out = remap_tx(&out, |i| n_tx - 1 - i);
    }
    if flags.flip_rx && applies(&mut rng) {
        out = remap_rx(&out, |j| n_rx - 1 - j);
    }
    if flags.translate_tx && applies(&mut rng) {
        let s = if n_tx > 1 { rng.random_range(1..n_tx) } else { 0 };
        out = remap_tx(&out, |i| (i + s) % n_tx);
    }
    if flags.translate_rx && applies(&mut rng) {
        let s = if n_rx > 1 { rng.random_range(1..n_rx) } else { 0 };
        out = remap_rx(&out, |j| (j + s) % n_rx);
    }
    Ok(out)
}

fn remap_tx(h: &ChannelTensor, f: impl Fn(usize) -> usize) -> ChannelTensor {
    let (n_paths, n_tx, n_rx) = h.shape();
    let mut out = ChannelTensor::zeros(n_paths, n_tx, n_rx);
    for d in 0..n_paths {
        for i in 0..n_tx {
            for j in 0..n_rx {
                out.set(d, f(i), j, h.at(d, i, j));
            }
        }
    }
    out
}

fn remap_rx(h: &ChannelTensor, f: impl Fn(usize) -> usize) -> ChannelTensor {
    let (n_paths, n_tx, n_rx) = h.shape();
    let mut out = ChannelTensor::zeros(n_paths, n_tx, n_rx);
    for d in 0..n_paths {
        for i in 0..n_tx {
            for j in 0..n_rx {
                out.set(d, i, f(j), h.at(d, i, j));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Pipeline plan
// ---------------------------------------------------------------------------

/// Channel representation fed to the codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    AntennaDelay,
    AngularDelay,
    AntennaFrequency,
}

/// Declarative preprocessing choices; [`Plan::fit`] turns them into an
/// invertible plan by adding train-split normalization stats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSpec {
    pub path_rule: Option<PathRule>,
    pub domain: Domain,
    pub feature_mode: FeatureMode,
}

impl Default for PlanSpec {
    fn default() -> Self {
        PlanSpec {
            path_rule: None,
            domain: Domain::AntennaDelay,
            feature_mode: FeatureMode::ReIm2,
        }
    }
}

/// A fitted, invertible preprocessing pipeline.
///
/// `apply` maps a channel tensor to a flat network input plus the normalized
/// ReIm target planes; `invert` maps predicted target planes back to a full
/// channel tensor. Frequency-domain plans force a zero offset so the support
/// projection stays linear; path cutting is rejected there because the
/// frequency transform mixes all taps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub spec: PlanSpec,
    pub n_paths: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_rb: usize,
    /// Stats of the ReIm components of the transformed training split.
    pub stats: NormStats,
    /// Max |phase| normalizer (pi) and max energy seen on the training split,
    /// used for the extra channels of the 4-channel mode.
    pub energy_scale: f64,
}

/// One preprocessed sample.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Flat network input (`feature_mode` channels, normalized).
    pub input: Vec<f64>,
    /// Flat normalized ReIm planes, the reconstruction target.
    pub target: Vec<f64>,
    pub mask: PathMask,
    /// Energy discarded by path cutting (raw channel units).
    pub disc_energy: f64,
    /// Squared norm of the original tensor.
    pub h_norm_sq: f64,
}

impl Plan {
    /// Fits normalization stats for `spec` on the training split.
    pub fn fit(train: &Dataset, spec: PlanSpec) -> Result<Plan> {
        let cfg = &train.config;
        if let Some(rule) = &spec.path_rule {
            rule.validate(cfg.n_paths)?;
            if spec.domain == Domain::AntennaFrequency {
                return Err(Error::Config(
                    "path cutting cannot be combined with the frequency domain \
                     (the transform mixes all taps)"
                        .into(),
                ));
            }
        }
        if train.samples.is_empty() {
            return Err(Error::Config("Plan::fit: empty training split".into()));
        }

        let mut sum = 0.0;
        let mut count = 0usize;
        let mut max_energy = 0.0f64;
        let mut transformed = Vec::with_capacity(train.samples.len());
        for s in &train.samples {
            let t = transform(s, spec.domain, cfg.n_rb)?;
            for c in t.data() {
                sum += c.re + c.im;
                count += 2;
                max_energy = max_energy.max(c.norm_sqr());
            }
            transformed.push(t);
        }
        let mut offset = sum / count as f64;
        if spec.domain == Domain::AntennaFrequency {
            offset = 0.0;
        }
        let mut max_abs = 0.0f64;
        for t in &transformed {
            for c in t.data() {
                max_abs = max_abs.max((c.re - offset).abs()).max((c.im - offset).abs());
            }
        }
        if max_abs <= 0.0 {
            return Err(Error::Degenerate("Plan::fit: degenerate training split".into()));
        }
        Ok(Plan {
            spec,
            n_paths: cfg.n_paths,
            n_tx: cfg.n_tx,
            n_rx: cfg.n_rx,
            n_rb: cfg.n_rb,
            stats: NormStats { offset, scale: max_abs },
            energy_scale: max_energy.max(f64::MIN_POSITIVE),
        })
    }

    /// Retained paths after cutting (codec slot count). `None` for CumEnergy
    /// rules, whose retained count varies per sample.
    pub fn fixed_retained(&self) -> Option<usize> {
        match self.spec.path_rule {
            None => Some(self.codec_paths()),
            Some(PathRule::TopK(k)) => Some(k),
            Some(PathRule::CumEnergy(_)) => None,
        }
    }

    /// Path-dimension length of the codec representation when no cutting
    /// applies.
    pub fn codec_paths(&self) -> usize {
        match self.spec.domain {
            Domain::AntennaFrequency => self.n_rb,
            _ => self.n_paths,
        }
    }

    /// Network input length per retained path.
    pub fn input_per_path(&self) -> usize {
        self.spec.feature_mode.channels() * self.n_tx * self.n_rx
    }

    /// Target length per retained path (always the two ReIm planes).
    pub fn target_per_path(&self) -> usize {
        2 * self.n_tx * self.n_rx
    }

    pub fn apply(&self, h: &ChannelTensor) -> Result<Prepared> {
        if h.shape() != (self.n_paths, self.n_tx, self.n_rx) {
            return Err(Error::Shape(format!(
                "Plan::apply: tensor shape {:?} does not match plan ({}, {}, {})",
                h.shape(),
                self.n_paths,
                self.n_tx,
                self.n_rx
            )));
        }
        let h_norm_sq = h.norm_sq();

        let (cut, mask, disc_energy) = match &self.spec.path_rule {
            Some(rule) => {
                let (cut, mask) = path_cut(h, *rule)?;
                let disc = h_norm_sq - cut.norm_sq();
                (cut, mask, disc.max(0.0))
            }
            None => (h.clone(), PathMask::all(self.n_paths), 0.0),
        };
        let t = transform(&cut, self.spec.domain, self.n_rb)?;

        let maps = to_feature_maps(&t, self.spec.feature_mode);
        let input = self.normalize_input(&maps);
        let target = self.normalize_target(&t);
        Ok(Prepared { input, target, mask, disc_energy, h_norm_sq })
    }

    fn normalize_input(&self, maps: &FeatureTensor) -> Vec<f64> {
        let n_pairs = maps.n_pairs;
        let mut out = Vec::with_capacity(maps.data.len());
        for d in 0..maps.n_paths {
            for ch in 0..maps.mode.channels() {
                for pair in 0..n_pairs {
                    let v = maps.at(d, ch, pair);
                    let norm = match (maps.mode, ch) {
                        (FeatureMode::ReIm2, _) => self.stats.normalize(v),
                        (FeatureMode::AmpPhase2, 0) => v / self.stats.scale,
                        (FeatureMode::AmpPhase2, _) => v / std::f64::consts::PI,
                        (FeatureMode::ReImPhaseEnergy4, 0 | 1) => self.stats.normalize(v),
                        (FeatureMode::ReImPhaseEnergy4, 2) => v / std::f64::consts::PI,
                        (FeatureMode::ReImPhaseEnergy4, _) => v / self.energy_scale,
                    };
                    out.push(norm);
                }
            }
        }
        out
    }

    fn normalize_target(&self, t: &ChannelTensor) -> Vec<f64> {
        let n_pairs = t.n_pairs();
        let mut out = Vec::with_capacity(t.n_paths() * 2 * n_pairs);
        for d in 0..t.n_paths() {
            for c in t.path(d) {
                out.push(self.stats.normalize(c.re));
            }
            let _ = n_pairs;
            for c in t.path(d) {
                out.push(self.stats.normalize(c.im));
            }
        }
        out
    }

    /// Reconstructs a channel tensor from predicted target planes.
    pub fn invert(&self, target: &[f64], mask: &PathMask) -> Result<ChannelTensor> {
        let per_path = self.target_per_path();
        let codec_paths = match self.spec.domain {
            Domain::AntennaFrequency => self.n_rb,
            _ => mask.retained_count(),
        };
        if target.len() != codec_paths * per_path {
            return Err(Error::Shape(format!(
                "Plan::invert: {} values but expected {} ({} paths x {})",
                target.len(),
                codec_paths * per_path,
                codec_paths,
                per_path
            )));
        }
        let n_pairs = self.n_tx * self.n_rx;
        let mut t = ChannelTensor::zeros(codec_paths, self.n_tx, self.n_rx);
        for d in 0..codec_paths {
            let base = d * per_path;
            for pair in 0..n_pairs {
                let re = self.stats.denormalize(target[base + pair]);
                let im = self.stats.denormalize(target[base + n_pairs + pair]);
                t.set(d, pair / self.n_rx, pair % self.n_rx, Complex64::new(re, im));
            }
        }
        let cut = match self.spec.domain {
            Domain::AntennaDelay => t,
            Domain::AngularDelay => dft_angular(&t, Direction::Inverse),
            Domain::AntennaFrequency => dft_frequency_inv(&t, self.n_paths)?,
        };
        if self.spec.domain == Domain::AntennaFrequency {
            // no cutting in frequency mode; `cut` is already the full tensor
            return Ok(cut);
        }
        path_restore(&cut, mask)
    }

    /// Projects predicted target planes onto the representable subspace.
    /// Identity except in the frequency domain, where predictions may leave
    /// the zero-padded support.
    pub fn project(&self, target: &[f64]) -> Result<Vec<f64>> {
        if self.spec.domain != Domain::AntennaFrequency {
            return Ok(target.to_vec());
        }
        let mask = PathMask::all(self.n_paths);
        let h = self.invert(target, &mask)?;
        let back = dft_frequency_fwd(&h, self.n_rb)?;
        Ok(self.normalize_target(&back))
    }
}

fn transform(h: &ChannelTensor, domain: Domain, n_rb: usize) -> Result<ChannelTensor> {
    Ok(match domain {
        Domain::AntennaDelay => h.clone(),
        Domain::AngularDelay => dft_angular(h, Direction::Forward),
        Domain::AntennaFrequency => dft_frequency_fwd(h, n_rb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{synth_dataset, synth_sample, ChannelConfig, Split};

    fn sample(seed: u64) -> ChannelTensor {
        synth_sample(&ChannelConfig::default(), seed)
    }

    #[test]
    fn path_energy_matches_brute_force() {
        let h = sample(11);
        let e = path_energy(&h, false).unwrap();
        for d in 0..h.n_paths() {
            let mut brute = 0.0;
            for i in 0..h.n_tx() {
                for j in 0..h.n_rx() {
                    let c = h.at(d, i, j);
                    brute += c.re * c.re + c.im * c.im;
                }
            }
            assert!((e[d] - brute).abs() <= 1e-12 * brute.max(1.0));
        }
        let en = path_energy(&h, true).unwrap();
        let total: f64 = en.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn path_energy_edge_cases() {
        let mut h = ChannelTensor::zeros(4, 2, 2);
        h.set(0, 0, 0, Complex64::new(3.0, 4.0));
        let e = path_energy(&h, true).unwrap();
        assert_eq!(e, vec![1.0, 0.0, 0.0, 0.0]);

        let mut eq = ChannelTensor::zeros(4, 2, 2);
        for c in eq.data_mut() {
            *c = Complex64::new(0.5, -0.5);
        }
        let e = path_energy(&eq, true).unwrap();
        for x in e {
            assert!((x - 0.25).abs() <= 1e-12);
        }

        let zero = ChannelTensor::zeros(2, 2, 2);
        assert!(path_energy(&zero, true).is_err());
    }

    #[test]
    fn cum_energy_rule_is_forced() {
        // energies (0.5, 0.3, 0.1, 0.05, 0.05): tau=0.9 keeps {0,1,2}
        let mut h = ChannelTensor::zeros(5, 1, 1);
        for (d, e) in [0.5f64, 0.3, 0.1, 0.05, 0.05].iter().enumerate() {
            h.set(d, 0, 0, Complex64::new(e.sqrt(), 0.0));
        }
        let (cut, mask) = path_cut(&h, PathRule::CumEnergy(0.9)).unwrap();
        assert_eq!(mask.indices(), vec![0, 1, 2]);
        assert_eq!(cut.n_paths(), 3);
    }

    #[test]
    fn topk_keeps_k_and_identity_at_full_k() {
        let h = sample(17);
        let (cut, mask) = path_cut(&h, PathRule::TopK(10)).unwrap();
        assert_eq!(cut.n_paths(), 10);
        assert_eq!(mask.retained_count(), 10);
        assert_eq!(mask.n_paths() - mask.retained_count(), 14);

        let (full, mask_all) = path_cut(&h, PathRule::TopK(h.n_paths())).unwrap();
        assert_eq!(full, h);
        assert!(mask_all.bits().iter().all(|&b| b));
        assert_eq!(path_restore(&full, &mask_all).unwrap(), h);
    }

    #[test]
    fn restore_residual_equals_discarded_energy() {
        for seed in [1u64, 2, 3, 4, 5] {
            let h = sample(seed);
            for k in [1usize, 4, 10, 20] {
                let (cut, mask) = path_cut(&h, PathRule::TopK(k)).unwrap();
                let restored = path_restore(&cut, &mask).unwrap();
                let residual = nmse_of(&restored, &h);
                let retained: f64 = mask
                    .indices()
                    .iter()
                    .map(|&d| h.path(d).iter().map(|c| c.norm_sqr()).sum::<f64>())
                    .sum();
                let discarded_frac = 1.0 - retained / h.norm_sq();
                assert!(
                    (residual - discarded_frac).abs() <= 1e-10,
                    "k={k} residual={residual} discarded={discarded_frac}"
                );
            }
        }
    }

    fn nmse_of(a: &ChannelTensor, b: &ChannelTensor) -> f64 {
        crate::channel::nmse(a, b).unwrap()
    }

    #[test]
    fn restore_shape_mismatch_errors() {
        let h = sample(23);
        let (cut, _) = path_cut(&h, PathRule::TopK(5)).unwrap();
        let wrong = PathMask::from_indices(h.n_paths(), &[0, 1, 2]).unwrap();
        assert!(path_restore(&cut, &wrong).is_err());
    }

    #[test]
    fn single_path_mask_restores_one_path() {
        let h = sample(29);
        let mask = PathMask::from_indices(h.n_paths(), &[7]).unwrap();
        let mut cut = ChannelTensor::zeros(1, h.n_tx(), h.n_rx());
        cut.path_mut(0).copy_from_slice(h.path(7));
        let restored = path_restore(&cut, &mask).unwrap();
        let nonzero: usize = (0..restored.n_paths())
            .filter(|&d| restored.path(d).iter().any(|c| c.norm_sqr() > 0.0))
            .count();
        assert_eq!(nonzero, 1);
        assert_eq!(restored.path(7), h.path(7));
    }

    #[test]
    fn angular_dft_unitary_and_invertible() {
        let h = sample(31);
        let f = dft_angular(&h, Direction::Forward);
        assert!((f.norm_sq() - h.norm_sq()).abs() <= 1e-12 * h.norm_sq());
        let back = dft_angular(&f, Direction::Inverse);
        let err = nmse_of(&back, &h);
        assert!(err <= 1e-24, "round-trip nmse {err}");
    }

    #[test]
    fn angular_dft_of_constant_path_is_single_bin() {
        let mut h = ChannelTensor::zeros(1, 4, 4);
        for c in h.data_mut() {
            *c = Complex64::new(0.5, 0.25);
        }
        let f = dft_angular(&h, Direction::Forward);
        assert!((f.at(0, 0, 0) - Complex64::new(2.0, 1.0)).norm() <= 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                if (i, j) != (0, 0) {
                    assert!(f.at(0, i, j).norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn frequency_dft_round_trip_and_energy() {
        let h = sample(37);
        let f = dft_frequency_fwd(&h, 48).unwrap();
        assert_eq!(f.n_paths(), 48);
        assert!((f.norm_sq() - h.norm_sq()).abs() <= 1e-12 * h.norm_sq());
        let back = dft_frequency_inv(&f, h.n_paths()).unwrap();
        assert!(nmse_of(&back, &h) <= 1e-24);
    }

    #[test]
    fn frequency_dft_of_delta_is_flat() {
        let mut h = ChannelTensor::zeros(1, 1, 1);
        h.set(0, 0, 0, Complex64::new(1.0, 0.0));
        let f = dft_frequency_fwd(&h, 48).unwrap();
        let expect = 1.0 / 48f64.sqrt();
        for k in 0..48 {
            assert!((f.at(k, 0, 0).norm() - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn feature_map_round_trips() {
        let h = sample(41);
        for mode in [FeatureMode::ReIm2, FeatureMode::AmpPhase2, FeatureMode::ReImPhaseEnergy4] {
            let f = to_feature_maps(&h, mode);
            let back = from_feature_maps(&f, h.n_tx(), h.n_rx()).unwrap();
            let err = nmse_of(&back, &h);
            assert!(err <= 1e-24, "{mode:?} round-trip nmse {err}");
        }
        // exactness for ReIm2
        let f = to_feature_maps(&h, FeatureMode::ReIm2);
        assert_eq!(from_feature_maps(&f, h.n_tx(), h.n_rx()).unwrap(), h);
    }

    #[test]
    fn amp_phase_conventions() {
        let mut h = ChannelTensor::zeros(1, 1, 2);
        h.set(0, 0, 0, Complex64::new(1.0, 0.0));
        h.set(0, 0, 1, Complex64::new(0.0, -1.0));
        let f = to_feature_maps(&h, FeatureMode::AmpPhase2);
        assert_eq!(f.at(0, 0, 0), 1.0);
        assert_eq!(f.at(0, 1, 0), 0.0);
        assert_eq!(f.at(0, 0, 1), 1.0);
        assert!((f.at(0, 1, 1) + std::f64::consts::FRAC_PI_2).abs() <= 1e-15);
        // phase of exact zero is zero
        let z = ChannelTensor::zeros(1, 1, 1);
        let fz = to_feature_maps(&z, FeatureMode::AmpPhase2);
        assert_eq!(fz.at(0, 1, 0), 0.0);
    }

    #[test]
    fn augment_properties() {
        let h = sample(43);
        let all = AugmentFlags { flip_tx: true, flip_rx: true, translate_tx: true, translate_rx: true };

        // p = 0 is the identity
        assert_eq!(augment(&h, 1, all, 0.0).unwrap(), h);

        // forced flip twice is the identity
        let flip = AugmentFlags { flip_tx: true, ..Default::default() };
        let once = augment(&h, 2, flip, 1.0).unwrap();
        assert_ne!(once, h);
        let twice = augment(&once, 3, flip, 1.0).unwrap();
        assert_eq!(twice, h);

        // any augmentation is a pure entry permutation: the sorted coefficient
        // magnitudes are bit-identical, so the norm is preserved exactly
        for seed in 0..20 {
            let a = augment(&h, seed, all, 0.7).unwrap();
            let mut ma: Vec<u64> = a.data().iter().map(|c| c.norm_sqr().to_bits()).collect();
            let mut mh: Vec<u64> = h.data().iter().map(|c| c.norm_sqr().to_bits()).collect();
            ma.sort_unstable();
            mh.sort_unstable();
            assert_eq!(ma, mh);
        }

        // deterministic given seed
        assert_eq!(
            augment(&h, 9, all, 0.5).unwrap(),
            augment(&h, 9, all, 0.5).unwrap()
        );
    }

    #[test]
    fn plan_apply_invert_round_trip() {
        let cfg = ChannelConfig {
            n_train: 12,
            n_test: 4,
            ..ChannelConfig::default()
        };
        let train = synth_dataset(&cfg, Split::Train).unwrap();
        for domain in [Domain::AntennaDelay, Domain::AngularDelay, Domain::AntennaFrequency] {
            for mode in [FeatureMode::ReIm2, FeatureMode::ReImPhaseEnergy4] {
                let plan = Plan::fit(
                    &train,
                    PlanSpec { path_rule: None, domain, feature_mode: mode },
                )
                .unwrap();
                let h = &train.samples[0];
                let prep = plan.apply(h).unwrap();
                let back = plan.invert(&prep.target, &prep.mask).unwrap();
                let err = nmse_of(&back, h);
                assert!(err <= 1e-24, "{domain:?}/{mode:?} round trip nmse {err}");
                assert_eq!(prep.disc_energy, 0.0);
            }
        }
    }

    #[test]
    fn plan_with_cut_reports_discarded_energy() {
        let cfg = ChannelConfig { n_train: 10, ..ChannelConfig::default() };
        let train = synth_dataset(&cfg, Split::Train).unwrap();
        let plan = Plan::fit(
            &train,
            PlanSpec {
                path_rule: Some(PathRule::TopK(8)),
                domain: Domain::AngularDelay,
                feature_mode: FeatureMode::ReIm2,
            },
        )
        .unwrap();
        let h = &train.samples[3];
        let prep = plan.apply(h).unwrap();
        assert_eq!(prep.mask.retained_count(), 8);
        let back = plan.invert(&prep.target, &prep.mask).unwrap();
        let err = nmse_of(&back, h);
        let expect = prep.disc_energy / prep.h_norm_sq;
        assert!((err - expect).abs() <= 1e-10, "err {err} vs discarded {expect}");
    }

    #[test]
    fn plan_rejects_cut_in_frequency_domain() {
        let cfg = ChannelConfig { n_train: 4, ..ChannelConfig::default() };
        let train = synth_dataset(&cfg, Split::Train).unwrap();
        let res = Plan::fit(
            &train,
            PlanSpec {
                path_rule: Some(PathRule::TopK(8)),
                domain: Domain::AntennaFrequency,
                feature_mode: FeatureMode::ReIm2,
            },
        );
        assert!(res.is_err());
    }

    #[test]
    fn frequency_projection_is_idempotent_and_fixes_image() {
        let cfg = ChannelConfig { n_train: 6, ..ChannelConfig::default() };
        let train = synth_dataset(&cfg, Split::Train).unwrap();
        let plan = Plan::fit(
            &train,
            PlanSpec {
                path_rule: None,
                domain: Domain::AntennaFrequency,
                feature_mode: FeatureMode::ReIm2,
            },
        )
        .unwrap();
        let prep = plan.apply(&train.samples[1]).unwrap();
        // in-image targets are fixed points
        let proj = plan.project(&prep.target).unwrap();
        let diff: f64 = proj
            .iter()
            .zip(prep.target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(diff <= 1e-20);
        // projection is idempotent on arbitrary vectors
        let noisy: Vec<f64> = prep.target.iter().enumerate().map(|(i, v)| v + (i as f64 * 0.37).sin()).collect();
        let p1 = plan.project(&noisy).unwrap();
        let p2 = plan.project(&p1).unwrap();
        let diff: f64 = p1.iter().zip(p2.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!(diff <= 1e-18);
    }
}
