//! Post-dequantization error correction: a residual three-layer MLP at the
//! decoder that learns to cancel quantization error.
//!
//! The input vector is first centered (its mean subtracted), passed through
//! the FC stack, and the result added back onto the input. The last layer is
//! zero-initialized, so a freshly constructed corrector is exactly the
//! identity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::{FcLayer, FcGrad, Mlp};
use crate::nn::Activation;
use crate::rng::{chacha, derive_seed, STREAM_INIT, STREAM_SHUFFLE};

/// Trainable corrector weights.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetNetParams {
    pub mlp: Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OffsetTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for OffsetTrainConfig {
    fn default() -> Self {
        OffsetTrainConfig { epochs: 200, batch_size: 32, learning_rate: 1e-3, seed: 7 }
    }
}

impl OffsetNetParams {
    /// Three FC layers `len -> 2*len -> 2*len -> len`, zero-initialized last
    /// layer so `apply` starts as the identity.
    pub fn init(feature_len: usize, seed: u64) -> Result<Self> {
        if feature_len == 0 {
            return Err(Error::Config("offset net needs feature_len >= 1".into()));
        }
        let hidden = 2 * feature_len;
        let mut rng = chacha(derive_seed(seed, STREAM_INIT, 1));
        Ok(OffsetNetParams {
            mlp: Mlp {
                layers: vec![
                    FcLayer::init(feature_len, hidden, Activation::Relu, &mut rng),
                    FcLayer::init(hidden, hidden, Activation::Relu, &mut rng),
                    FcLayer::zeros(hidden, feature_len, Activation::Identity),
                ],
            },
        })
    }

    pub fn feature_len(&self) -> usize {
        self.mlp.layers[0].in_dim
    }
}

fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

/// `apply(x) = x + mlp(x - mean(x))`.
pub fn offsetnet_apply(params: &OffsetNetParams, dequantized: &[f64]) -> Result<Vec<f64>> {
    if dequantized.len() != params.feature_len() {
        return Err(Error::Shape(format!(
            "offset net width {} vs input {}",
            params.feature_len(),
            dequantized.len()
        )));
    }
    let correction = params.mlp.forward(&centered(dequantized));
    Ok(dequantized.iter().zip(&correction).map(|(x, c)| x + c).collect())
}

/// Mean squared feature error of `apply` over pairs.
pub fn offsetnet_mse(params: &OffsetNetParams, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for (deq, clean) in pairs {
        let y = offsetnet_apply(params, deq)?;
        acc += y.iter().zip(clean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        n += clean.len();
    }
    Ok(acc / n as f64)
}

/// Trains the corrector on `(dequantized, pre-quantization)` feature pairs by
/// mean squared error with adaptive-moment updates. The codec weights are
/// untouched; only the corrector learns.
pub fn offsetnet_train(
    pairs: &[(Vec<f64>, Vec<f64>)],
    feature_len: usize,
    cfg: &OffsetTrainConfig,
) -> Result<OffsetNetParams> {
    if pairs.is_empty() {
        return Err(Error::Config("offsetnet_train: no pairs".into()));
    }
    for (i, (a, b)) in pairs.iter().enumerate() {
        if a.len() != feature_len || b.len() != feature_len {
            return Err(Error::Shape(format!(
                "pair {i}: widths {}/{} vs feature_len {feature_len}",
                a.len(),
                b.len()
            )));
        }
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("offsetnet_train: bad hyperparameters".into()));
    }

    let mut params = OffsetNetParams::init(feature_len, cfg.seed)?;
    let n_params = params.mlp.param_count();
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut t = 0u64;
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = chacha(derive_seed(cfg.seed, STREAM_SHUFFLE, epoch as u64));
        use rand::Rng;
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }

        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<FcGrad> = params.mlp.grad_zeros();
            for &i in batch {
                let (deq, clean) = &pairs[i];
                let c = centered(deq);
                let (corr, cache) = params.mlp.forward_cached(&c);
                // d/d(corr) of mean((x + corr - clean)^2) over the batch
                let scale = 2.0 / (batch.len() * feature_len) as f64;
                let grad_out: Vec<f64> = deq
                    .iter()
                    .zip(&corr)
                    .zip(clean)
                    .map(|((x, co), cl)| scale * (x + co - cl))
                    .collect();
                params.mlp.backward(&cache, &grad_out, &mut grads);
            }
            t += 1;
            let bc1 = 1.0 - B1.powi(t as i32);
            let bc2 = 1.0 - B2.powi(t as i32);
            let mut cursor = 0usize;
            for (layer, g) in params.mlp.layers.iter_mut().zip(&grads) {
                for (p, &gr) in layer.w.iter_mut().chain(layer.b.iter_mut()).zip(g.dw.iter().chain(g.db.iter())) {
                    let mk = &mut m[cursor];
                    let vk = &mut v[cursor];
                    *mk = B1 * *mk + (1.0 - B1) * gr;
                    *vk = B2 * *vk + (1.0 - B2) * gr * gr;
                    *p -= cfg.learning_rate * (*mk / bc1) / ((*vk / bc2).sqrt() + EPS);
                    cursor += 1;
                }
            }
        }
    }
    Ok(params)
}
