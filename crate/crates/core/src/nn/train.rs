//! Deterministic double-precision training of the codec under the NMSE loss.
//!
//! The per-sample loss is the channel-domain NMSE expressed in feature space:
//! preprocessing targets are normalized ReIm planes of a norm-preserving
//! transform, so
//!
//! ```text
//! loss = (scale^2 * ||P(y_hat) - y||^2 + discarded_energy) / ||H||^2
//! ```
//!
//! with `P` the support projection (identity except in the frequency
//! domain). Gradients flow through the decoder, the soft-quantization
//! surrogate, and the encoder. Everything is single-threaded with a fixed
//! iteration order, so runs are bit-reproducible given the seed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::autoencoder::Autoencoder;
use crate::nn::layer::{for_each_param_pair, Net, NetGrad};
use crate::nn::softquant::soft_quant;
use crate::preprocess::Plan;
use crate::rng::{chacha, derive_seed, STREAM_SHUFFLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerTag {
    /// Plain gradient descent.
    Sgd,
    /// Heavy-ball momentum (0.9).
    Momentum,
    /// Adaptive moment estimation.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTag {
    Nmse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerTag,
    /// Surrogate sharpness ramp: linear from `beta_start` to `beta_end` over
    /// `beta_ramp_epochs` (defaulting to the first half of training).
    pub beta_start: f64,
    pub beta_end: f64,
    pub beta_ramp_epochs: Option<usize>,
    pub seed: u64,
    pub loss: LossTag,
    /// Skip the quantization surrogate entirely (sanity/overfit runs).
    pub bypass_soft_quant: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerTag::Adam,
            beta_start: 30.0,
            beta_end: 500.0,
            beta_ramp_epochs: None,
            seed: 1234,
            loss: LossTag::Nmse,
            bypass_soft_quant: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(self.beta_start > 0.0) || self.beta_end < self.beta_start {
            return Err(Error::Config(format!(
                "beta schedule start {} end {} invalid",
                self.beta_start, self.beta_end
            )));
        }
        Ok(())
    }

    /// Surrogate sharpness for an epoch.
    pub fn beta_at(&self, epoch: usize, total_epochs: usize) -> f64 {
        let ramp = self.beta_ramp_epochs.unwrap_or_else(|| (total_epochs / 2).max(1));
        if ramp == 0 {
            return self.beta_end;
        }
        let t = (epoch as f64 / ramp as f64).min(1.0);
        self.beta_start + (self.beta_end - self.beta_start) * t
    }
}

/// One preprocessed training sample.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub input: Vec<f64>,
    /// Normalized ReIm target planes.
    pub target: Vec<f64>,
    /// Squared norm of the original channel tensor.
    pub h_norm_sq: f64,
    /// Energy removed by path cutting (a constant loss floor).
    pub disc_energy: f64,
}

/// Projection of decoder outputs onto the representable subspace.
#[derive(Debug, Clone)]
pub enum Projector {
    Identity,
    /// Frequency-domain plans: predictions may leave the zero-padded delay
    /// support and must be projected back for an exact channel-domain loss.
    Support(Plan),
}

impl Projector {
    fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self {
            Projector::Identity => Ok(y.to_vec()),
            Projector::Support(plan) => plan.project(y),
        }
    }
}

/// A prepared training set in the codec's representation.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub samples: Vec<TrainSample>,
    /// ReIm normalization scale of the plan that produced the targets.
    pub scale: f64,
    pub projector: Projector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Forward/backward of one sample. Accumulates parameter gradients and
/// returns the loss.
fn sample_pass(
    ae: &Autoencoder,
    sample: &TrainSample,
    set: &TrainSet,
    beta: f64,
    bypass: bool,
    enc_grads: &mut NetGrad,
    dec_grads: &mut NetGrad,
) -> Result<f64> {
    let m = ae.spec.feature_len;
    let chunks = ae.chunk_count(sample.input.len())?;
    if sample.target.len() != chunks * ae.io.dec_out {
        return Err(Error::Shape(format!(
            "target of {} values, expected {}",
            sample.target.len(),
            chunks * ae.io.dec_out
        )));
    }
    let bits = ae.spec.soft_quant.bits;

    // forward
    let mut enc_caches = Vec::with_capacity(chunks);
    let mut features = Vec::with_capacity(chunks * m);
    for c in 0..chunks {
        let x = &sample.input[c * ae.io.enc_in..(c + 1) * ae.io.enc_in];
        let cache = ae.encoder.forward_cached(x);
        features.extend_from_slice(&cache.output);
        enc_caches.push(cache);
    }
    let (code, code_deriv): (Vec<f64>, Vec<f64>) = if bypass {
        (features.clone(), vec![1.0; features.len()])
    } else {
        let mut v = Vec::with_capacity(features.len());
        let mut d = Vec::with_capacity(features.len());
        for &f in &features {
            let (q, dq) = soft_quant(f, bits, beta);
            v.push(q);
            d.push(dq);
        }
        (v, d)
    };
    let mut dec_caches = Vec::with_capacity(chunks);
    let mut y_hat = Vec::with_capacity(chunks * ae.io.dec_out);
    for c in 0..chunks {
        let f = &code[c * m..(c + 1) * m];
        let cache = ae.decoder.forward_cached(f);
        y_hat.extend_from_slice(&cache.output);
        dec_caches.push(cache);
    }

    // loss in channel units
    let projected = set.projector.project(&y_hat)?;
    let residual: Vec<f64> = projected.iter().zip(&sample.target).map(|(a, b)| a - b).collect();
    let sq: f64 = residual.iter().map(|r| r * r).sum();
    let loss = (set.scale * set.scale * sq + sample.disc_energy) / sample.h_norm_sq;

    // backward: residual already lies in the representable subspace, so the
    // projection adjoint is a no-op
    let coeff = 2.0 * set.scale * set.scale / sample.h_norm_sq;
    let mut grad_code = vec![0.0; code.len()];
    for c in 0..chunks {
        let gy: Vec<f64> = residual[c * ae.io.dec_out..(c + 1) * ae.io.dec_out]
            .iter()
            .map(|r| coeff * r)
            .collect();
        let gf = ae.decoder.backward(&dec_caches[c], &gy, dec_grads);
        for (k, g) in gf.into_iter().enumerate() {
            grad_code[c * m + k] += g;
        }
    }
    for c in 0..chunks {
        let gfeat: Vec<f64> = (0..m)
            .map(|k| grad_code[c * m + k] * code_deriv[c * m + k])
            .collect();
        ae.encoder.backward(&enc_caches[c], &gfeat, enc_grads);
    }
    Ok(loss)
}

/// Loss of one sample without touching gradients.
pub fn sample_loss(ae: &Autoencoder, sample: &TrainSample, set: &TrainSet, beta: f64, bypass: bool) -> Result<f64> {
    let features = ae.encode(&sample.input)?;
    let code: Vec<f64> = if bypass {
        features
    } else {
        features
            .iter()
            .map(|&f| soft_quant(f, ae.spec.soft_quant.bits, beta).0)
            .collect()
    };
    let y_hat = ae.decode_features(&code)?;
    let projected = set.projector.project(&y_hat)?;
    let sq: f64 = projected
        .iter()
        .zip(&sample.target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((set.scale * set.scale * sq + sample.disc_energy) / sample.h_norm_sq)
}

/// Mean loss over a slice of samples.
pub fn batch_loss(ae: &Autoencoder, set: &TrainSet, beta: f64, bypass: bool) -> Result<f64> {
    let mut acc = 0.0;
    for s in &set.samples {
        acc += sample_loss(ae, s, set, beta, bypass)?;
    }
    Ok(acc / set.samples.len() as f64)
}

/// Mean loss and parameter gradients over a slice of samples.
pub fn batch_grads(
    ae: &Autoencoder,
    set: &TrainSet,
    indices: &[usize],
    beta: f64,
    bypass: bool,
) -> Result<(f64, NetGrad, NetGrad)> {
    let mut enc_grads = ae.encoder.grad_zeros();
    let mut dec_grads = ae.decoder.grad_zeros();
    let mut loss_sum = 0.0;
    for &i in indices {
        loss_sum += sample_pass(ae, &set.samples[i], set, beta, bypass, &mut enc_grads, &mut dec_grads)?;
    }
    let inv = 1.0 / indices.len() as f64;
    scale_grads(&mut enc_grads, inv);
    scale_grads(&mut dec_grads, inv);
    Ok((loss_sum * inv, enc_grads, dec_grads))
}

fn scale_grads(g: &mut NetGrad, s: f64) {
    for block in &mut g.blocks {
        use crate::nn::layer::BlockGrad;
        match block {
            BlockGrad::Fc(fg) => {
                fg.dw.iter_mut().for_each(|v| *v *= s);
                fg.db.iter_mut().for_each(|v| *v *= s);
            }
            BlockGrad::ReZero { dalpha, inner } => {
                *dalpha *= s;
                for fg in inner {
                    fg.dw.iter_mut().for_each(|v| *v *= s);
                    fg.db.iter_mut().for_each(|v| *v *= s);
                }
            }
            BlockGrad::DeepSplit { layers } => {
                for fg in layers {
                    fg.dw.iter_mut().for_each(|v| *v *= s);
                    fg.db.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
    }
}

/// Flat per-parameter optimizer state for one net.
struct OptState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl OptState {
    fn new(n: usize) -> Self {
        OptState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

struct Optimizer {
    tag: OptimizerTag,
    lr: f64,
    enc: OptState,
    dec: OptState,
}

const MOMENTUM_MU: f64 = 0.9;
const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    fn new(tag: OptimizerTag, lr: f64, ae: &Autoencoder) -> Self {
        Optimizer {
            tag,
            lr,
            enc: OptState::new(ae.encoder.param_count()),
            dec: OptState::new(ae.decoder.param_count()),
        }
    }

    fn step_net(&mut self, which: Side, net: &mut Net, grads: &NetGrad) {
        let state = match which {
            Side::Enc => &mut self.enc,
            Side::Dec => &mut self.dec,
        };
        state.t += 1;
        let (lr, tag, t) = (self.lr, self.tag, state.t);
        let mut cursor = 0usize;
        for_each_param_pair(net, grads, &mut |params, gs| {
            match tag {
                OptimizerTag::Sgd => {
                    for (p, &g) in params.iter_mut().zip(gs) {
                        *p -= lr * g;
                    }
                }
                OptimizerTag::Momentum => {
                    for (k, (p, &g)) in params.iter_mut().zip(gs).enumerate() {
                        let m = &mut state.m[cursor + k];
                        *m = MOMENTUM_MU * *m + g;
                        *p -= lr * *m;
                    }
                }
                OptimizerTag::Adam => {
                    let bc1 = 1.0 - ADAM_B1.powi(t as i32);
                    let bc2 = 1.0 - ADAM_B2.powi(t as i32);
                    for (k, (p, &g)) in params.iter_mut().zip(gs).enumerate() {
                        let m = &mut state.m[cursor + k];
                        let v = &mut state.v[cursor + k];
                        *m = ADAM_B1 * *m + (1.0 - ADAM_B1) * g;
                        *v = ADAM_B2 * *v + (1.0 - ADAM_B2) * g * g;
                        let mhat = *m / bc1;
                        let vhat = *v / bc2;
                        *p -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                }
            }
            cursor += params.len();
        });
    }
}

enum Side {
    Enc,
    Dec,
}

/// In-place Fisher-Yates with our own RNG so the shuffle is pinned.
fn shuffle(indices: &mut [usize], rng: &mut impl rand::Rng) {
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}

/// Trains the codec in place, minimizing the mean per-sample NMSE by
/// backpropagation through the soft-quantization surrogate. Returns the
/// per-epoch loss history. Aborts with a diagnostic if the loss leaves the
/// finite range.
pub fn train(ae: &mut Autoencoder, set: &TrainSet, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if set.samples.is_empty() {
        return Err(Error::Config("train: empty training set".into()));
    }
    let n = set.samples.len();
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, ae);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let beta = cfg.beta_at(epoch, cfg.epochs);
        let mut rng = chacha(derive_seed(cfg.seed, STREAM_SHUFFLE, epoch as u64));
        shuffle(&mut order, &mut rng);

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, enc_g, dec_g) = batch_grads(ae, set, batch, beta, cfg.bypass_soft_quant)?;
            loss_sum += loss * batch.len() as f64;
            optimizer.step_net(Side::Enc, &mut ae.encoder, &enc_g);
            optimizer.step_net(Side::Dec, &mut ae.decoder, &dec_g);
        }
        let epoch_loss = loss_sum / n as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: format!("mean loss {epoch_loss}"),
            });
        }
        history.push(epoch_loss);
    }
    Ok(TrainReport { epoch_loss: history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::autoencoder::IoDims;
    use crate::nn::{Activation, Mode, NetworkSpec, SoftQuantSpec};

    fn toy_spec() -> NetworkSpec {
        NetworkSpec {
            mode: Mode::Joint,
            encoder_widths: vec![48],
            decoder_widths: vec![48],
            per_path_input: 16,
            feature_len: 10,
            split_fraction: 0.25,
            activation: Activation::Relu,
            rezero: false,
            soft_quant: SoftQuantSpec { bits: 3, beta: 30.0 },
        }
    }

    fn toy_set(n: usize, dim: usize, seed: u64) -> TrainSet {
        // targets on a 3-dimensional manifold so a narrow code suffices
        let mut rng = chacha(seed);
        use rand::Rng;
        let mut samples = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            let c: f64 = rng.random_range(-1.0..1.0);
            let target: Vec<f64> = (0..dim)
                .map(|k| {
                    let t = k as f64 / dim as f64;
                    0.5 * a * (3.0 * t).sin() + 0.4 * b * (7.0 * t).cos() + 0.3 * c * t
                })
                .collect();
            let h_norm_sq: f64 = target.iter().map(|v| v * v).sum::<f64>().max(1e-9);
            samples.push(TrainSample {
                input: target.clone(),
                target,
                h_norm_sq,
                disc_energy: 0.0,
            });
        }
        TrainSet { samples, scale: 1.0, projector: Projector::Identity }
    }

    #[test]
    fn overfit_small_set_without_quantization() {
        let spec = toy_spec();
        let io = IoDims { enc_in: 24, dec_out: 24 };
        let mut ae = Autoencoder::init(&spec, io, 5).unwrap();
        let set = toy_set(10, 24, 11);
        let cfg = TrainConfig {
            epochs: 2000,
            batch_size: 10,
            learning_rate: 5e-4,
            bypass_soft_quant: true,
            seed: 42,
            ..TrainConfig::default()
        };
        let report = train(&mut ae, &set, &cfg).unwrap();
        let final_loss = *report.epoch_loss.last().unwrap();
        assert!(final_loss <= 1e-3, "overfit loss {final_loss}");

        // 50-epoch moving average is nonincreasing
        let ma: Vec<f64> = report
            .epoch_loss
            .windows(50)
            .map(|w| w.iter().sum::<f64>() / 50.0)
            .collect();
        for w in ma.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-9),
                "moving average increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn same_seed_identical_histories() {
        let spec = toy_spec();
        let io = IoDims { enc_in: 24, dec_out: 24 };
        let set = toy_set(16, 24, 3);
        let cfg = TrainConfig { epochs: 12, batch_size: 4, ..TrainConfig::default() };

        let mut a = Autoencoder::init(&spec, io, 9).unwrap();
        let ra = train(&mut a, &set, &cfg).unwrap();
        let mut b = Autoencoder::init(&spec, io, 9).unwrap();
        let rb = train(&mut b, &set, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }

    #[test]
    fn beta_ramp_produces_finite_losses_both_ways() {
        let spec = toy_spec();
        let io = IoDims { enc_in: 24, dec_out: 24 };
        let set = toy_set(16, 24, 4);
        for ramp in [None, Some(1)] {
            let cfg = TrainConfig {
                epochs: 10,
                batch_size: 8,
                beta_ramp_epochs: ramp,
                ..TrainConfig::default()
            };
            let mut ae = Autoencoder::init(&spec, io, 13).unwrap();
            let report = train(&mut ae, &set, &cfg).unwrap();
            assert!(report.epoch_loss.iter().all(|l| l.is_finite()));
        }
    }

    #[test]
    fn divergence_is_reported() {
        let spec = toy_spec();
        let io = IoDims { enc_in: 24, dec_out: 24 };
        let set = toy_set(8, 24, 5);
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 8,
            learning_rate: 1e12,
            optimizer: OptimizerTag::Sgd,
            ..TrainConfig::default()
        };
        let mut ae = Autoencoder::init(&spec, io, 2).unwrap();
        match train(&mut ae, &set, &cfg) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn beta_schedule_is_linear_then_flat() {
        let cfg = TrainConfig {
            beta_start: 30.0,
            beta_end: 500.0,
            beta_ramp_epochs: Some(10),
            ..TrainConfig::default()
        };
        assert_eq!(cfg.beta_at(0, 20), 30.0);
        assert!((cfg.beta_at(5, 20) - 265.0).abs() < 1e-12);
        assert_eq!(cfg.beta_at(10, 20), 500.0);
        assert_eq!(cfg.beta_at(19, 20), 500.0);
    }
}
