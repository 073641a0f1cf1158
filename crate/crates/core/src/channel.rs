//! Cluster-based multipath MIMO channel synthesis and the NMSE metric.
//!
//! A channel sample is a complex tensor `h[d][i][j]` over `n_paths` clusters,
//! `n_tx` transmit antennas and `n_rx` receive antennas. Each cluster is the
//! sum of `n_subpaths` rays sharing a mean departure/arrival angle pair:
//! cluster powers follow an exponential decay profile with lognormal
//! shadowing (normalized to sum to one), rays carry uniform random phases and
//! small angle offsets, and antennas are half-wavelength uniform linear
//! arrays with steering phase `exp(j*pi*n*sin(theta))`. Only small-scale
//! fading is modeled: no path loss, no LoS component, no mobility.
//!
//! Generated coefficients are snapped to `f32` precision so a sample written
//! to disk (which stores 32-bit floats) reads back bit-identical.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{chacha, derive_seed, STREAM_TEST, STREAM_TRAIN};

/// Channel and dataset parameters.
///
/// `default()` is the reference profile (24 clusters, 4x4 antennas, 48
/// resource blocks, 3000/400 split); `desk()` shrinks the split to 2000/400
/// for quick end-to-end runs while keeping the channel itself unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    /// Number of clusters N_d.
    pub n_paths: usize,
    /// Transmit antennas N_t.
    pub n_tx: usize,
    /// Receive antennas N_r.
    pub n_rx: usize,
    /// Rays per cluster L_d.
    pub n_subpaths: usize,
    /// Resource blocks N_RB (frequency-domain bin count).
    pub n_rb: usize,
    /// Carrier frequency F_c in Hz (bookkeeping; the tap-domain generator
    /// does not consume it).
    pub carrier_freq: f64,
    /// Subcarrier spacing B_sc in Hz (bookkeeping).
    pub subcarrier_spacing: f64,
    /// Training split size.
    pub n_train: usize,
    /// Test split size.
    pub n_test: usize,
    /// Number of cells N_c (bookkeeping).
    pub n_cells: usize,
    /// Sampling slots N_slot (bookkeeping; no temporal correlation is modeled).
    pub n_slots: usize,
    /// Interval between sampled slots T (bookkeeping).
    pub slot_interval: usize,
    /// Per-cluster exponential power decay constant gamma: raw power of
    /// cluster d is exp(-d/gamma) before shadowing.
    pub power_decay: f64,
    /// Lognormal shadowing spread per cluster, in dB.
    pub shadow_sigma_db: f64,
    /// Standard deviation of per-ray angle offsets, in radians.
    pub angle_spread: f64,
    /// Master seed; all randomness derives from it.
    pub master_seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            n_paths: 24,
            n_tx: 4,
            n_rx: 4,
            n_subpaths: 20,
            n_rb: 48,
            carrier_freq: 3.5e9,
            subcarrier_spacing: 15e3,
            n_train: 3000,
            n_test: 400,
            n_cells: 57,
            n_slots: 200,
            slot_interval: 100,
            power_decay: 3.0,
            shadow_sigma_db: 3.0,
            angle_spread: 0.1,
            master_seed: 1234,
        }
    }
}

impl ChannelConfig {
    /// Desk-scale profile: same channel, 2000/400 split.
    pub fn desk() -> Self {
        ChannelConfig {
            n_train: 2000,
            n_test: 400,
            ..Self::default()
        }
    }

    /// Total coefficient count N = N_d * N_t * N_r.
    pub fn coeff_count(&self) -> usize {
        self.n_paths * self.n_tx * self.n_rx
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_paths", self.n_paths),
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("n_subpaths", self.n_subpaths),
            ("n_rb", self.n_rb),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.power_decay > 0.0) {
            return Err(Error::Config("power_decay must be > 0".into()));
        }
        if self.shadow_sigma_db < 0.0 || self.angle_spread < 0.0 {
            return Err(Error::Config(
                "shadow_sigma_db and angle_spread must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Complex channel tensor indexed `(path d, tx i, rx j)`, path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    n_paths: usize,
    n_tx: usize,
    n_rx: usize,
    data: Vec<Complex64>,
}

impl ChannelTensor {
    pub fn zeros(n_paths: usize, n_tx: usize, n_rx: usize) -> Self {
        ChannelTensor {
            n_paths,
            n_tx,
            n_rx,
            data: vec![Complex64::new(0.0, 0.0); n_paths * n_tx * n_rx],
        }
    }

    pub fn from_data(n_paths: usize, n_tx: usize, n_rx: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != n_paths * n_tx * n_rx {
            return Err(Error::Shape(format!(
                "tensor data length {} does not match shape ({n_paths}, {n_tx}, {n_rx})",
                data.len()
            )));
        }
        Ok(ChannelTensor {
            n_paths,
            n_tx,
            n_rx,
            data,
        })
    }

    /// (n_paths, n_tx, n_rx)
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_paths, self.n_tx, self.n_rx)
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    /// Antenna pairs per path.
    pub fn n_pairs(&self) -> usize {
        self.n_tx * self.n_rx
    }

    #[inline]
    fn idx(&self, d: usize, i: usize, j: usize) -> usize {
        (d * self.n_tx + i) * self.n_rx + j
    }

    #[inline]
    pub fn at(&self, d: usize, i: usize, j: usize) -> Complex64 {
        self.data[self.idx(d, i, j)]
    }

    #[inline]
    pub fn set(&mut self, d: usize, i: usize, j: usize, v: Complex64) {
        let k = self.idx(d, i, j);
        self.data[k] = v;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// The `n_tx * n_rx` coefficients of path `d`.
    pub fn path(&self, d: usize) -> &[Complex64] {
        let n = self.n_tx * self.n_rx;
        &self.data[d * n..(d + 1) * n]
    }

    pub fn path_mut(&mut self, d: usize) -> &mut [Complex64] {
        let n = self.n_tx * self.n_rx;
        &mut self.data[d * n..(d + 1) * n]
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Rounds every component to `f32` precision (the on-disk representation).
    pub fn snap_to_f32(&mut self) {
        for c in &mut self.data {
            *c = Complex64::new(c.re as f32 as f64, c.im as f32 as f64);
        }
    }
}

/// Cluster power profile: `exp(-d/gamma)` decay times lognormal shadowing,
/// normalized so the powers sum to exactly one.
pub fn cluster_powers(config: &ChannelConfig, rng: &mut impl Rng) -> Vec<f64> {
    let mut raw = Vec::with_capacity(config.n_paths);
    for d in 0..config.n_paths {
        let shadow_db: f64 = if config.shadow_sigma_db > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            z * config.shadow_sigma_db
        } else {
            0.0
        };
        raw.push((-(d as f64) / config.power_decay).exp() * 10f64.powf(shadow_db / 10.0));
    }
    let total: f64 = raw.iter().sum();
    for p in &mut raw {
        *p /= total;
    }
    raw
}

/// Synthesizes one channel sample. Pure function of `(config, sample_seed)`.
///
/// Draw order per cluster: shadowing (inside [`cluster_powers`]), then mean
/// angles, then per-ray `(angle offsets, phase)` tuples.
pub fn synth_sample(config: &ChannelConfig, sample_seed: u64) -> ChannelTensor {
    let mut rng = chacha(sample_seed);
    let powers = cluster_powers(config, &mut rng);

    let mut h = ChannelTensor::zeros(config.n_paths, config.n_tx, config.n_rx);
    let l = config.n_subpaths;
    for (d, &p_d) in powers.iter().enumerate() {
        let theta_mean: f64 = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
        let phi_mean: f64 = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
        let amp = (p_d / l as f64).sqrt();
        for _ in 0..l {
            let dt: f64 = StandardNormal.sample(&mut rng);
            let dp: f64 = StandardNormal.sample(&mut rng);
            let theta = theta_mean + config.angle_spread * dt;
            let phi = phi_mean + config.angle_spread * dp;
            let psi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let gain = Complex64::from_polar(amp, psi);
            let st = theta.sin();
            let sp = phi.sin();
            for i in 0..config.n_tx {
                // half-wavelength ULA steering: exp(j*pi*n*sin(angle))
                let a_tx = Complex64::from_polar(1.0, std::f64::consts::PI * i as f64 * st);
                for j in 0..config.n_rx {
                    let a_rx = Complex64::from_polar(1.0, -std::f64::consts::PI * j as f64 * sp);
                    let k = h.idx(d, i, j);
                    h.data[k] += gain * a_tx * a_rx;
                }
            }
        }
    }
    h.snap_to_f32();
    h
}

/// Normalized mean squared error between a recovered and an original tensor:
/// `||H' - H||^2 / ||H||^2`.
pub fn nmse(recovered: &ChannelTensor, original: &ChannelTensor) -> Result<f64> {
    if recovered.shape() != original.shape() {
        return Err(Error::Shape(format!(
            "nmse shapes differ: {:?} vs {:?}",
            recovered.shape(),
            original.shape()
        )));
    }
    let denom = original.norm_sq();
    if denom <= 0.0 {
        return Err(Error::Degenerate("nmse: original tensor has zero energy".into()));
    }
    let num: f64 = recovered
        .data
        .iter()
        .zip(original.data.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(num / denom)
}

/// Dataset-level NMSE: mean of the per-sample ratios.
pub fn mean_nmse(pairs: &[(ChannelTensor, ChannelTensor)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Config("mean_nmse: no pairs".into()));
    }
    let mut acc = 0.0;
    for (rec, orig) in pairs {
        acc += nmse(rec, orig)?;
    }
    Ok(acc / pairs.len() as f64)
}

/// Train/test split tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn stream(self) -> u64 {
        match self {
            Split::Train => STREAM_TRAIN,
            Split::Test => STREAM_TEST,
        }
    }
}

/// Global affine normalization of real/imaginary parts, fit on the training
/// split: `offset` is the component mean, `scale` the max absolute deviation
/// after centering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub offset: f64,
    pub scale: f64,
}

impl NormStats {
    pub fn identity() -> Self {
        NormStats { offset: 0.0, scale: 1.0 }
    }

    /// Fits stats over the real/imaginary components of `samples`.
    pub fn fit(samples: &[ChannelTensor]) -> Result<Self> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for s in samples {
            for c in s.data() {
                sum += c.re + c.im;
                count += 2;
            }
        }
        if count == 0 {
            return Err(Error::Degenerate("NormStats::fit: empty sample set".into()));
        }
        let offset = sum / count as f64;
        let mut max_abs = 0.0f64;
        for s in samples {
            for c in s.data() {
                max_abs = max_abs.max((c.re - offset).abs()).max((c.im - offset).abs());
            }
        }
        if max_abs <= 0.0 {
            return Err(Error::Degenerate(
                "NormStats::fit: all components equal; scale would be zero".into(),
            ));
        }
        Ok(NormStats { offset, scale: max_abs })
    }

    #[inline]
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }

    #[inline]
    pub fn denormalize(&self, y: f64) -> f64 {
        y * self.scale + self.offset
    }
}

/// An ordered collection of channel samples with its generation config and
/// normalization stats (always fit on the training split).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: ChannelConfig,
    pub split: Split,
    pub samples: Vec<ChannelTensor>,
    pub stats: NormStats,
}

/// Synthesizes a dataset split. Per-sample seeds come from disjoint counter
/// streams, so train and test never share a seed and two calls with the same
/// master seed are identical.
///
/// The test split's stats are those of the (regenerated) training split, so
/// both splits carry the same shared normalization knowledge.
pub fn synth_dataset(config: &ChannelConfig, split: Split) -> Result<Dataset> {
    config.validate()?;
    let n = match split {
        Split::Train => config.n_train,
        Split::Test => config.n_test,
    };
    let samples: Vec<ChannelTensor> = (0..n)
        .map(|i| synth_sample(config, derive_seed(config.master_seed, split.stream(), i as u64)))
        .collect();

    let stats = match split {
        Split::Train => NormStats::fit(&samples)?,
        Split::Test => {
            // stats always come from the train split; stream the train
            // samples without keeping them
            let train: Vec<ChannelTensor> = (0..config.n_train)
                .map(|i| synth_sample(config, derive_seed(config.master_seed, STREAM_TRAIN, i as u64)))
                .collect();
            NormStats::fit(&train)?
        }
    };

    Ok(Dataset {
        config: config.clone(),
        split,
        samples,
        stats,
    })
}
