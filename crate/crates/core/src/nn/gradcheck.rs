//! Analytic-vs-numeric gradient verification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::autoencoder::{Autoencoder, IoDims};
use crate::nn::layer::{for_each_param, for_each_param_mut, Block, BlockGrad, NetGrad};
use crate::nn::train::{batch_grads, Projector, TrainSample, TrainSet};
use crate::nn::NetworkSpec;
use crate::rng::{chacha, derive_seed, STREAM_FIT};

/// Hard cap so the exhaustive finite-difference sweep stays cheap.
pub const MAX_PARAMS: usize = 10_000;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradGroup {
    pub name: String,
    pub max_rel_error: f64,
}

/// Per-parameter-group comparison of analytic gradients against central
/// finite differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub step: f64,
    pub param_count: usize,
    pub groups: Vec<GradGroup>,
}

impl GradReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }
}

/// Relative error with an absolute floor: components whose gradients vanish
/// (dead rectifier paths, flat zones of the quantization surrogate) would
/// otherwise report pure finite-difference round-off (~1e-10) as a huge
/// relative error. The floor is ~1e3x the round-off level, so a genuine
/// formula error on any meaningful gradient still surfaces.
const REL_FLOOR: f64 = 1e-4;

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn group_names(prefix: &str, net: &crate::nn::layer::Net) -> Vec<String> {
    let mut names = Vec::new();
    for (bi, block) in net.blocks.iter().enumerate() {
        match block {
            Block::Fc(_) => {
                names.push(format!("{prefix}.block{bi}.w"));
                names.push(format!("{prefix}.block{bi}.b"));
            }
            Block::ReZero { inner, .. } => {
                names.push(format!("{prefix}.block{bi}.alpha"));
                for li in 0..inner.layers.len() {
                    names.push(format!("{prefix}.block{bi}.inner{li}.w"));
                    names.push(format!("{prefix}.block{bi}.inner{li}.b"));
                }
            }
            Block::DeepSplit { layers, .. } => {
                for li in 0..layers.len() {
                    names.push(format!("{prefix}.block{bi}.layer{li}.w"));
                    names.push(format!("{prefix}.block{bi}.layer{li}.b"));
                }
            }
        }
    }
    names
}

fn flatten_grads(g: &NetGrad) -> Vec<Vec<f64>> {
    let mut slices = Vec::new();
    for block in &g.blocks {
        match block {
            BlockGrad::Fc(fg) => {
                slices.push(fg.dw.clone());
                slices.push(fg.db.clone());
            }
            BlockGrad::ReZero { dalpha, inner } => {
                slices.push(vec![*dalpha]);
                for fg in inner {
                    slices.push(fg.dw.clone());
                    slices.push(fg.db.clone());
                }
            }
            BlockGrad::DeepSplit { layers } => {
                for fg in layers {
                    slices.push(fg.dw.clone());
                    slices.push(fg.db.clone());
                }
            }
        }
    }
    slices
}

/// Compares analytic gradients of the full codec loss (encoder -> surrogate
/// -> decoder -> NMSE) to central finite differences, parameter by
/// parameter, on a small random batch.
///
/// Residual-block alphas are randomized away from zero so gradients reach
/// the wrapped layers. Deterministic given `seed`.
pub fn grad_check(spec: &NetworkSpec, io: IoDims, seed: u64) -> Result<GradReport> {
    grad_check_with(spec, io, seed, true)
}

/// [`grad_check`] with the quantization surrogate optionally bypassed, for
/// checking the purely linear/smooth path on its own.
pub fn grad_check_with(
    spec: &NetworkSpec,
    io: IoDims,
    seed: u64,
    include_soft_quant: bool,
) -> Result<GradReport> {
    let mut ae = Autoencoder::init(spec, io, seed)?;
    let n_params = ae.encoder.param_count() + ae.decoder.param_count();
    if n_params > MAX_PARAMS {
        return Err(Error::Config(format!(
            "grad_check limited to {MAX_PARAMS} parameters, spec has {n_params}"
        )));
    }
    let mut rng = chacha(derive_seed(seed, STREAM_FIT, 1));
    use rand::Rng;
    for net in [&mut ae.encoder, &mut ae.decoder] {
        for block in &mut net.blocks {
            if let Block::ReZero { alpha, .. } = block {
                *alpha = rng.random_range(-0.5..0.5);
            }
        }
    }

    // two random samples; inputs roughly unit scale
    let chunks = match ae.spec.mode {
        crate::nn::Mode::Joint => 1,
        crate::nn::Mode::PerPathShared => 2,
    };
    let mut samples = Vec::new();
    for _ in 0..2 {
        let input: Vec<f64> = (0..io.enc_in * chunks).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..io.dec_out * chunks).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h_norm_sq = target.iter().map(|v| v * v).sum::<f64>().max(1e-6);
        samples.push(TrainSample { input, target, h_norm_sq, disc_energy: 0.0 });
    }
    let set = TrainSet { samples, scale: 1.0, projector: Projector::Identity };
    let indices: Vec<usize> = (0..set.samples.len()).collect();
    let beta = spec.soft_quant.beta;
    let bypass = !include_soft_quant;

    let (_, enc_g, dec_g) = batch_grads(&ae, &set, &indices, beta, bypass)?;

    let loss_of = |ae: &Autoencoder| -> Result<f64> {
        let (l, _, _) = batch_grads(ae, &set, &indices, beta, bypass)?;
        Ok(l)
    };

    let mut groups = Vec::new();
    for (side, grads) in [("encoder", &enc_g), ("decoder", &dec_g)] {
        let net_ref = if side == "encoder" { &ae.encoder } else { &ae.decoder };
        let names = group_names(side, net_ref);
        let analytic = flatten_grads(grads);
        debug_assert_eq!(names.len(), analytic.len());

        // record slice lengths so we can locate parameters by flat position
        let mut lens = Vec::new();
        for_each_param(net_ref, &mut |s| lens.push(s.len()));

        for (gi, name) in names.iter().enumerate() {
            let mut worst = 0.0f64;
            for k in 0..analytic[gi].len() {
                let numeric = {
                    let probe = |delta: f64| -> Result<f64> {
                        let mut ae2 = ae.clone();
                        let net = if side == "encoder" { &mut ae2.encoder } else { &mut ae2.decoder };
                        let mut slice_idx = 0usize;
                        for_each_param_mut(net, &mut |s| {
                            if slice_idx == gi {
                                s[k] += delta;
                            }
                            slice_idx += 1;
                        });
                        loss_of(&ae2)
                    };
                    (probe(FD_STEP)? - probe(-FD_STEP)?) / (2.0 * FD_STEP)
                };
                worst = worst.max(rel_error(analytic[gi][k], numeric));
            }
            groups.push(GradGroup { name: name.clone(), max_rel_error: worst });
        }
    }

    Ok(GradReport { step: FD_STEP, param_count: n_params, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mode, SoftQuantSpec};

    #[test]
    fn linear_tiny_net_is_exact_to_roundoff() {
        // Purely linear net and quadratic loss: central differences have no
        // truncation term, so any discrepancy is a formula error. Checked
        // without the relative-error floor.
        use crate::nn::layer::{Block, FcLayer, Net};
        let mut rng = crate::rng::chacha(77);
        use rand::Rng;
        let net = Net {
            blocks: vec![
                Block::Fc(FcLayer::init(5, 6, Activation::Identity, &mut rng)),
                Block::Fc(FcLayer::init(6, 4, Activation::Identity, &mut rng)),
            ],
        };
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(0.5..1.5)).collect();
        let target: Vec<f64> = (0..4).map(|_| rng.random_range(1.0..2.0)).collect();
        let loss_of = |n: &Net| -> f64 {
            n.forward(&x).iter().zip(&target).map(|(y, t)| (y - t) * (y - t)).sum()
        };

        let cache = net.forward_cached(&x);
        let grad_out: Vec<f64> = cache.output.iter().zip(&target).map(|(y, t)| 2.0 * (y - t)).collect();
        let mut grads = net.grad_zeros();
        net.backward(&cache, &grad_out, &mut grads);
        let analytic = flatten_grads(&grads);

        let h = 1e-4; // exact for quadratics; larger step shrinks round-off
        let mut worst = 0.0f64;
        let mut slice_idx_total = 0;
        for (gi, group) in analytic.iter().enumerate() {
            for k in 0..group.len() {
                let mut probe = net.clone();
                let mut slice_idx = 0usize;
                for_each_param_mut(&mut probe, &mut |s| {
                    if slice_idx == gi {
                        s[k] += h;
                    }
                    slice_idx += 1;
                });
                let fp = loss_of(&probe);
                let mut probe = net.clone();
                let mut slice_idx = 0usize;
                for_each_param_mut(&mut probe, &mut |s| {
                    if slice_idx == gi {
                        s[k] -= h;
                    }
                    slice_idx += 1;
                });
                let fm = loss_of(&probe);
                let numeric = (fp - fm) / (2.0 * h);
                let a = group[k];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12));
            }
            slice_idx_total += 1;
        }
        let _ = slice_idx_total;
        assert!(worst <= 1e-8, "max rel {worst}");
    }

    #[test]
    fn full_block_zoo_within_tolerance() {
        let spec = NetworkSpec {
            mode: Mode::Joint,
            encoder_widths: vec![10, 8],
            decoder_widths: vec![8, 10],
            per_path_input: 6,
            feature_len: 4,
            split_fraction: 0.25,
            activation: Activation::Relu,
            rezero: true,
            soft_quant: SoftQuantSpec { bits: 3, beta: 30.0 },
        };
        let report = grad_check(&spec, IoDims { enc_in: 8, dec_out: 8 }, 101).unwrap();
        assert!(report.max_rel_error() <= 1e-5, "max rel {}", report.max_rel_error());
    }

    #[test]
    fn report_is_deterministic() {
        let spec = NetworkSpec {
            mode: Mode::Joint,
            encoder_widths: vec![6],
            decoder_widths: vec![6],
            per_path_input: 4,
            feature_len: 3,
            split_fraction: 0.25,
            activation: Activation::Logistic,
            rezero: false,
            soft_quant: SoftQuantSpec { bits: 2, beta: 20.0 },
        };
        let a = grad_check(&spec, IoDims { enc_in: 5, dec_out: 5 }, 3).unwrap();
        let b = grad_check(&spec, IoDims { enc_in: 5, dec_out: 5 }, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn param_cap_enforced() {
        let spec = NetworkSpec::per_path_wide(16);
        let res = grad_check(&spec, IoDims { enc_in: 32, dec_out: 32 }, 1);
        assert!(matches!(res, Err(Error::Config(_))));
    }
}
