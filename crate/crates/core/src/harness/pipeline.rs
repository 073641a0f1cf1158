//! One pipeline run: synthesize data, preprocess, (optionally) train the
//! codec, fit the quantizer, then evaluate the full UE-side encode and
//! BS-side decode over the test split, counting every feedback bit through
//! real frames.

use std::time::Instant;

use crate::bitstream::{decode_frame, encode_frame, feedback_bit_count, raw_sample_bits, SchemeId};
use crate::channel::{nmse, synth_dataset, ChannelTensor, Dataset, Split};
use crate::error::{Error, Result};
use crate::harness::{AugmentConfig, PipelineConfig, ReportRow, SchemeConfig};
use crate::nn::autoencoder::{Autoencoder, IoDims};
use crate::nn::train::{train, Projector, TrainSample, TrainSet};
use crate::nn::Mode;
use crate::preprocess::{augment, Domain, Plan, PlanSpec, Prepared};
use crate::quantize::artifact::QuantizerArtifact;
use crate::quantize::{
    allocate_path_bits, dequantize_with_spec, lloyd_max_fit, lloyd_refine_from_levels,
    offsetnet_apply, offsetnet_train, quantize_with_spec, vq_decode, vq_encode, vq_fit,
    CompandLaw, OffsetNetParams, QuantKind, QuantizerSpec, ScalarSpec,
};
use crate::rng::{derive_seed, STREAM_AUGMENT, STREAM_FIT};

/// Everything a run produces besides the report row. Artifacts come from the
/// last seed of the run.
#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub plan: Plan,
    pub model: Option<Autoencoder>,
    pub quantizer: Option<QuantizerArtifact>,
    pub offset_net: Option<OffsetNetParams>,
    /// Dataset-level NMSE of each seed's run.
    pub per_seed_nmse: Vec<f64>,
    /// Per-sample NMSE over the test split (last seed).
    pub per_sample_nmse: Vec<f64>,
    pub feedback_bits: u32,
}

/// Scheme with every rate parameter pinned.
#[derive(Debug, Clone, Copy)]
enum ResolvedScheme {
    Scalar { kind: QuantKind, law: Option<CompandLaw>, bits: u8 },
    Vector { sub_dim: usize, bits: u8 },
    PathLevel { max_bits: u8, unit_budget: usize },
}

#[derive(Debug, Clone, Copy)]
struct RatePlan {
    /// Total feature length consumed by the quantizer.
    feature_len: usize,
    /// Features per path slot (path-grouped layouts).
    per_path: usize,
    /// Retained path count (slots).
    retained: usize,
    scheme: Option<ResolvedScheme>,
}

const LLOYD_ITERS: usize = 100;
const LLOYD_TOL: f64 = 1e-6;

/// Fixed retained-path count of a validated config.
fn retained_paths(cfg: &PipelineConfig, plan: &Plan) -> usize {
    plan.fixed_retained().unwrap_or(cfg.channel.n_paths)
}

fn payload_budget(cfg: &PipelineConfig) -> Result<Option<usize>> {
    match cfg.budget_bits {
        None => Ok(None),
        Some(b) => {
            let mask = cfg.channel.n_paths as u32;
            if b <= mask {
                return Err(Error::Config(format!(
                    "budget of {b} bits cannot even cover the {mask}-bit path mask"
                )));
            }
            Ok(Some((b - mask) as usize))
        }
    }
}

/// Pins the feature length and scheme parameters from the config, plan and
/// budget. Trained codecs size the feature length at the configured bits;
/// raw pipelines keep their fixed representation and size the bits.
fn resolve_rate(cfg: &PipelineConfig, plan: &Plan) -> Result<RatePlan> {
    let k = retained_paths(cfg, plan);
    let budget = payload_budget(cfg)?;
    let infeasible = |what: &str| Error::Config(format!("budget infeasible: {what}"));

    match (&cfg.network, &cfg.quantizer) {
        (None, None) => Ok(RatePlan {
            feature_len: plan.codec_paths() * plan.target_per_path(),
            per_path: plan.target_per_path(),
            retained: k,
            scheme: None,
        }),
        (None, Some(q)) => {
            let per_path = plan.target_per_path();
            let len = match plan.spec.domain {
                Domain::AntennaFrequency => plan.codec_paths() * per_path,
                _ => k * per_path,
            };
            let scheme = match *q {
                SchemeConfig::Uniform { bits } => ResolvedScheme::Scalar {
                    kind: QuantKind::Uniform,
                    law: None,
                    bits: fit_bits(bits, budget, len)?,
                },
                SchemeConfig::Companded { law, bits } => ResolvedScheme::Scalar {
                    kind: match law {
                        CompandLaw::Mu => QuantKind::MuLaw,
                        CompandLaw::A => QuantKind::ALaw,
                    },
                    law: Some(law),
                    bits: fit_bits(bits, budget, len)?,
                },
                SchemeConfig::Adaptive { bits } => ResolvedScheme::Scalar {
                    kind: QuantKind::Adaptive,
                    law: None,
                    bits: fit_bits(bits, budget, len)?,
                },
                SchemeConfig::Vector { sub_dim, bits } => {
                    if len % sub_dim != 0 {
                        return Err(Error::Config(format!(
                            "feature length {len} not divisible by sub_dim {sub_dim}"
                        )));
                    }
                    let n_sub = len / sub_dim;
                    ResolvedScheme::Vector { sub_dim, bits: fit_bits(bits, budget, n_sub)? }
                }
                SchemeConfig::PathLevel { max_bits } => {
                    if plan.spec.domain == Domain::AntennaFrequency {
                        return Err(Error::Config(
                            "path-level quantization needs path-grouped features".into(),
                        ));
                    }
                    let unit = match budget {
                        Some(p) => {
                            let u = p / per_path;
                            if u == 0 {
                                return Err(infeasible("fewer payload bits than one per-path unit"));
                            }
                            u.min(k * max_bits as usize)
                        }
                        None => k * max_bits as usize,
                    };
                    ResolvedScheme::PathLevel { max_bits, unit_budget: unit }
                }
            };
            Ok(RatePlan { feature_len: len, per_path, retained: k, scheme: Some(scheme) })
        }
        (Some(net), Some(q)) => {
            let scheme_and_len = match *q {
                SchemeConfig::Uniform { bits }
                | SchemeConfig::Adaptive { bits }
                | SchemeConfig::Companded { bits, .. } => {
                    let (kind, law) = match *q {
                        SchemeConfig::Uniform { .. } => (QuantKind::Uniform, None),
                        SchemeConfig::Adaptive { .. } => (QuantKind::Adaptive, None),
                        SchemeConfig::Companded { law, .. } => (
                            match law {
                                CompandLaw::Mu => QuantKind::MuLaw,
                                CompandLaw::A => QuantKind::ALaw,
                            },
                            Some(law),
                        ),
                        _ => unreachable!(),
                    };
                    let (total, per_path) = match (net.mode, budget) {
                        (Mode::Joint, Some(p)) => {
                            let m = p / bits as usize;
                            if m == 0 {
                                return Err(infeasible("no room for even one symbol"));
                            }
                            (m, 0)
                        }
                        (Mode::Joint, None) => (net.feature_len, 0),
                        (Mode::PerPathShared, Some(p)) => {
                            let m_pp = p / (bits as usize * k);
                            if m_pp == 0 {
                                return Err(infeasible("no room for one symbol per path"));
                            }
                            (m_pp * k, m_pp)
                        }
                        (Mode::PerPathShared, None) => (net.feature_len * k, net.feature_len),
                    };
                    (ResolvedScheme::Scalar { kind, law, bits }, total, per_path)
                }
                SchemeConfig::Vector { sub_dim, bits } => {
                    let (total, per_path) = match (net.mode, budget) {
                        (Mode::Joint, Some(p)) => {
                            let n_sub = p / bits as usize;
                            if n_sub == 0 {
                                return Err(infeasible("no room for one sub-vector"));
                            }
                            (n_sub * sub_dim, 0)
                        }
                        (Mode::Joint, None) => {
                            if net.feature_len % sub_dim != 0 {
                                return Err(Error::Config(format!(
                                    "feature_len {} not divisible by sub_dim {sub_dim}",
                                    net.feature_len
                                )));
                            }
                            (net.feature_len, 0)
                        }
                        (Mode::PerPathShared, Some(p)) => {
                            let sub_pp = p / (bits as usize * k);
                            if sub_pp == 0 {
                                return Err(infeasible("no room for one sub-vector per path"));
                            }
                            (sub_pp * sub_dim * k, sub_pp * sub_dim)
                        }
                        (Mode::PerPathShared, None) => {
                            if net.feature_len % sub_dim != 0 {
                                return Err(Error::Config(format!(
                                    "per-path feature_len {} not divisible by sub_dim {sub_dim}",
                                    net.feature_len
                                )));
                            }
                            (net.feature_len * k, net.feature_len)
                        }
                    };
                    (ResolvedScheme::Vector { sub_dim, bits }, total, per_path)
                }
                SchemeConfig::PathLevel { max_bits } => {
                    // feature length comes from the spec; bits are allocated
                    let m_pp = net.feature_len;
                    let unit = match budget {
                        Some(p) => {
                            let u = p / m_pp;
                            if u == 0 {
                                return Err(infeasible("fewer payload bits than one per-path unit"));
                            }
                            u.min(k * max_bits as usize)
                        }
                        None => k * max_bits as usize,
                    };
                    (
                        ResolvedScheme::PathLevel { max_bits, unit_budget: unit },
                        m_pp * k,
                        m_pp,
                    )
                }
            };
            let (scheme, total, per_path) = scheme_and_len;
            Ok(RatePlan { feature_len: total, per_path, retained: k, scheme: Some(scheme) })
        }
        (Some(_), None) => Err(Error::Config("a trained codec needs a quantizer".into())),
    }
}

/// Largest usable width within the budget, capped by the configured width.
fn fit_bits(configured: u8, budget: Option<usize>, symbols: usize) -> Result<u8> {
    match budget {
        None => Ok(configured),
        Some(p) => {
            let b = (p / symbols.max(1)).min(configured as usize).min(16);
            if b == 0 {
                return Err(Error::Config(format!(
                    "budget infeasible: {p} payload bits across {symbols} symbols"
                )));
            }
            Ok(b as u8)
        }
    }
}

/// Frame scheme id implied by the fitted artifact.
fn artifact_scheme_id(artifact: &QuantizerArtifact) -> SchemeId {
    match artifact {
        QuantizerArtifact::Scalar(spec) => {
            if spec.symbols_per_path.is_some() {
                SchemeId::PathLevel
            } else {
                match spec.kind {
                    QuantKind::Uniform => SchemeId::Uniform,
                    QuantKind::MuLaw | QuantKind::ALaw => SchemeId::Companded,
                    QuantKind::Adaptive => SchemeId::Adaptive,
                }
            }
        }
        QuantizerArtifact::Vector(_) => SchemeId::Vector,
    }
}

/// UE side with fitted artifacts: quantize a feature vector and wrap it in a
/// frame.
pub fn encode_to_frame(
    artifact: &QuantizerArtifact,
    features: &[f64],
    mask_bits: &[bool],
) -> Result<Vec<u8>> {
    let (indices, widths) = match artifact {
        QuantizerArtifact::Scalar(spec) => {
            (quantize_with_spec(features, spec)?, spec.widths(features.len())?)
        }
        QuantizerArtifact::Vector(cb) => {
            let ix = vq_encode(features, cb)?;
            let n = ix.len();
            (ix, vec![cb.bits; n])
        }
    };
    encode_frame(artifact_scheme_id(artifact), mask_bits, &indices, &widths)
}

/// BS side with fitted artifacts: parse the frame, dequantize (applying the
/// offset corrector when the checkpoint carries one) and reconstruct the
/// channel tensor.
pub fn decode_from_frame(
    model: &Autoencoder,
    artifact: &QuantizerArtifact,
    plan: &Plan,
    bytes: &[u8],
) -> Result<ChannelTensor> {
    let frame = decode_frame(bytes, plan.n_paths)?;
    if frame.scheme != artifact_scheme_id(artifact) {
        return Err(Error::Corrupt(format!(
            "frame scheme {:?} does not match the quantizer artifact",
            frame.scheme
        )));
    }
    let mask = crate::preprocess::PathMask::new(frame.mask.clone())?;
    let payload_bits = frame.payload_bit_len as usize;

    let (widths, feature_len) = match artifact {
        QuantizerArtifact::Scalar(spec) => match spec.expected_len() {
            Some(len) => (spec.widths(len)?, len),
            None => {
                let b = spec.specs[0].bits as usize;
                if b == 0 || payload_bits % b != 0 {
                    return Err(Error::Corrupt(format!(
                        "payload of {payload_bits} bits does not divide into {b}-bit symbols"
                    )));
                }
                let n = payload_bits / b;
                (vec![spec.specs[0].bits; n], n)
            }
        },
        QuantizerArtifact::Vector(cb) => {
            let b = cb.bits as usize;
            if payload_bits % b != 0 {
                return Err(Error::Corrupt(format!(
                    "payload of {payload_bits} bits does not divide into {b}-bit indices"
                )));
            }
            let n_sub = payload_bits / b;
            (vec![cb.bits; n_sub], n_sub * cb.dim)
        }
    };
    let declared: usize = widths.iter().map(|&w| w as usize).sum();
    if declared != payload_bits {
        return Err(Error::Corrupt(format!(
            "artifact expects {declared} payload bits, frame carries {payload_bits}"
        )));
    }

    let indices = crate::bitstream::unpack_indices(&frame.payload, &widths)?;
    let mut deq = match artifact {
        QuantizerArtifact::Scalar(spec) => dequantize_with_spec(&indices, spec, feature_len)?,
        QuantizerArtifact::Vector(cb) => vq_decode(&indices, cb)?,
    };
    if let Some(mlp) = &model.offset {
        let params = OffsetNetParams { mlp: mlp.clone() };
        deq = offsetnet_apply(&params, &deq)?;
    }
    model.decode(&deq, &mask, plan)
}

/// Preprocesses a dataset split, expanding augmented copies for training.
fn prepare_split(
    plan: &Plan,
    data: &Dataset,
    augment_cfg: Option<&AugmentConfig>,
) -> Result<Vec<Prepared>> {
    let mut out = Vec::with_capacity(data.samples.len());
    for s in &data.samples {
        out.push(plan.apply(s)?);
    }
    if let Some(a) = augment_cfg {
        for (i, s) in data.samples.iter().enumerate() {
            for c in 0..a.copies {
                let seed = derive_seed(
                    data.config.master_seed,
                    STREAM_AUGMENT,
                    (i * a.copies + c) as u64,
                );
                let varied = augment(s, seed, a.flags, a.prob)?;
                out.push(plan.apply(&varied)?);
            }
        }
    }
    Ok(out)
}

/// Features entering the quantizer for one prepared sample: encoder output
/// for trained codecs, targets mapped from [-1, 1] into [0, 1] otherwise.
fn features_of(model: Option<&Autoencoder>, prep: &Prepared) -> Result<Vec<f64>> {
    match model {
        Some(ae) => ae.encode(&prep.input),
        None => Ok(prep.target.iter().map(|t| (t + 1.0) / 2.0).collect()),
    }
}

/// Inverse of the raw-feature mapping.
fn targets_from_raw_features(f: &[f64]) -> Vec<f64> {
    f.iter().map(|v| 2.0 * v - 1.0).collect()
}

fn fit_quantizer(
    rate: &RatePlan,
    train_features: &[Vec<f64>],
    seed: u64,
) -> Result<Option<QuantizerArtifact>> {
    let Some(scheme) = rate.scheme else {
        return Ok(None);
    };
    let artifact = match scheme {
        ResolvedScheme::Scalar { kind, law, bits } => {
            let spec = match kind {
                QuantKind::Uniform => ScalarSpec::uniform(bits)?,
                QuantKind::MuLaw | QuantKind::ALaw => {
                    ScalarSpec::companded(law.expect("companded law"), bits)?
                }
                QuantKind::Adaptive => {
                    let pool: Vec<f64> = train_features.iter().flatten().copied().collect();
                    lloyd_max_fit(&pool, bits, LLOYD_ITERS, LLOYD_TOL)?.spec
                }
            };
            QuantizerArtifact::Scalar(QuantizerSpec::shared(kind, spec)?)
        }
        ResolvedScheme::Vector { sub_dim, bits } => {
            QuantizerArtifact::Vector(vq_fit(train_features, sub_dim, bits, seed)?)
        }
        ResolvedScheme::PathLevel { max_bits, unit_budget } => {
            let spp = rate.per_path;
            let mut tables = Vec::with_capacity(rate.retained);
            let mut spec_ladder: Vec<Vec<ScalarSpec>> = Vec::with_capacity(rate.retained);
            for slot in 0..rate.retained {
                let values: Vec<f64> = train_features
                    .iter()
                    .flat_map(|f| f[slot * spp..(slot + 1) * spp].iter().copied())
                    .collect();
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let mut ladder = vec![ScalarSpec::constant(mean)];
                let mut table = vec![ladder[0].distortion(&values)];
                for b in 1..=max_bits {
                    // warm start from a superset of the previous levels so the
                    // table is provably nonincreasing, then take the better of
                    // that and a fresh uniform-initialized fit
                    let warm_levels = superset_levels(&ladder[b as usize - 1], &values, b);
                    let warm = lloyd_refine_from_levels(&values, warm_levels, b, LLOYD_ITERS, LLOYD_TOL);
                    let fresh = lloyd_max_fit(&values, b, LLOYD_ITERS, LLOYD_TOL);
                    let best = match (warm, fresh) {
                        (Ok(w), Ok(f)) => {
                            if *w.history.last().unwrap() <= *f.history.last().unwrap() {
                                w
                            } else {
                                f
                            }
                        }
                        (Ok(w), Err(_)) => w,
                        (Err(_), Ok(f)) => f,
                        (Err(e), Err(_)) => return Err(e),
                    };
                    table.push(best.spec.distortion(&values).min(table[b as usize - 1]));
                    ladder.push(best.spec);
                }
                tables.push(table);
                spec_ladder.push(ladder);
            }
            let alloc = allocate_path_bits(&tables, unit_budget)?;
            let specs: Vec<ScalarSpec> = alloc
                .iter()
                .enumerate()
                .map(|(slot, &b)| spec_ladder[slot][b as usize].clone())
                .collect();
            QuantizerArtifact::Scalar(QuantizerSpec::per_path(QuantKind::Adaptive, specs, spp)?)
        }
    };
    Ok(Some(artifact))
}

/// Doubles a level ladder: old levels plus their cell edges, trimmed to
/// `2^bits` values. Keeping every old level guarantees the warm-started fit
/// starts at or below the old distortion.
fn superset_levels(prev: &ScalarSpec, values: &[f64], bits: u8) -> Vec<f64> {
    let want = 1usize << bits;
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut levels = prev.levels.clone();
    levels.extend(prev.boundaries.iter().copied());
    levels.push(lo);
    levels.push(hi);
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup();
    // pad with midpoints if deduplication lost too many
    while levels.len() < want {
        let mut widest = (0usize, 0.0f64);
        for (i, w) in levels.windows(2).enumerate() {
            if w[1] - w[0] > widest.1 {
                widest = (i, w[1] - w[0]);
            }
        }
        let mid = 0.5 * (levels[widest.0] + levels[widest.0 + 1]);
        levels.insert(widest.0 + 1, mid);
    }
    // trim extras farthest from the data range center, keeping old levels
    while levels.len() > want {
        let removable = levels
            .iter()
            .enumerate()
            .filter(|(_, v)| !prev.levels.contains(v))
            .max_by(|(_, a), (_, b)| {
                let c = 0.5 * (lo + hi);
                (*a - c).abs().partial_cmp(&(*b - c).abs()).unwrap()
            })
            .map(|(i, _)| i);
        match removable {
            Some(i) => {
                levels.remove(i);
            }
            None => {
                levels.pop();
            }
        }
    }
    levels
}

struct QuantizedSample {
    dequantized: Vec<f64>,
    feedback_bits: u32,
}

/// UE side to BS side through real frame bytes.
fn quantize_through_frame(
    artifact: &QuantizerArtifact,
    features: &[f64],
    mask_bits: &[bool],
) -> Result<QuantizedSample> {
    let bytes = encode_to_frame(artifact, features, mask_bits)?;
    let frame = decode_frame(&bytes, mask_bits.len())?;
    let widths = match artifact {
        QuantizerArtifact::Scalar(spec) => spec.widths(features.len())?,
        QuantizerArtifact::Vector(cb) => vec![cb.bits; features.len() / cb.dim],
    };
    let got = crate::bitstream::unpack_indices(&frame.payload, &widths)?;
    let dequantized = match artifact {
        QuantizerArtifact::Scalar(spec) => dequantize_with_spec(&got, spec, features.len())?,
        QuantizerArtifact::Vector(cb) => vq_decode(&got, cb)?,
    };
    Ok(QuantizedSample { dequantized, feedback_bits: feedback_bit_count(&frame) })
}

/// Runs one seed: returns (dataset NMSE, per-sample NMSEs, artifacts).
#[allow(clippy::too_many_arguments)]
fn run_seed(
    cfg: &PipelineConfig,
    plan: &Plan,
    rate: &RatePlan,
    train_prep: &[Prepared],
    test_set: &Dataset,
    test_prep: &[Prepared],
    seed: u64,
) -> Result<(f64, Vec<f64>, Option<Autoencoder>, Option<QuantizerArtifact>, Option<OffsetNetParams>, Option<u32>)> {
    // train the codec
    let model = match (&cfg.network, &cfg.train) {
        (Some(spec), Some(tcfg)) => {
            let mut spec = spec.clone();
            spec.feature_len = match spec.mode {
                Mode::Joint => rate.feature_len,
                Mode::PerPathShared => rate.per_path,
            };
            let io = match spec.mode {
                Mode::Joint => IoDims {
                    enc_in: train_prep[0].input.len(),
                    dec_out: train_prep[0].target.len(),
                },
                Mode::PerPathShared => IoDims {
                    enc_in: plan.input_per_path(),
                    dec_out: plan.target_per_path(),
                },
            };
            let mut ae = Autoencoder::init(&spec, io, seed)?;
            let samples: Vec<TrainSample> = train_prep
                .iter()
                .map(|p| TrainSample {
                    input: p.input.clone(),
                    target: p.target.clone(),
                    h_norm_sq: p.h_norm_sq,
                    disc_energy: p.disc_energy,
                })
                .collect();
            let set = TrainSet {
                samples,
                scale: plan.stats.scale,
                projector: match plan.spec.domain {
                    Domain::AntennaFrequency => Projector::Support(plan.clone()),
                    _ => Projector::Identity,
                },
            };
            let mut tcfg = tcfg.clone();
            tcfg.seed = seed;
            train(&mut ae, &set, &tcfg)?;
            Some(ae)
        }
        _ => None,
    };

    // fit the quantizer on (frozen) training features
    let artifact = if rate.scheme.is_some() {
        let feats: Result<Vec<Vec<f64>>> = train_prep
            .iter()
            .map(|p| features_of(model.as_ref(), p))
            .collect();
        fit_quantizer(rate, &feats?, derive_seed(seed, STREAM_FIT, 0))?
    } else {
        None
    };

    // train the offset corrector on dequantized/clean pairs
    let offset = match (&cfg.offset_net, &artifact) {
        (Some(ocfg), Some(art)) => {
            let mut pairs = Vec::with_capacity(train_prep.len());
            for p in train_prep {
                let f = features_of(model.as_ref(), p)?;
                let q = quantize_through_frame(art, &f, p.mask.bits())?;
                pairs.push((q.dequantized, f));
            }
            let mut ocfg = *ocfg;
            ocfg.seed = seed;
            Some(offsetnet_train(&pairs, rate.feature_len, &ocfg)?)
        }
        _ => None,
    };

    // evaluate over the test split
    let mut per_sample = Vec::with_capacity(test_set.samples.len());
    let mut bits_seen: Option<u32> = None;
    for (orig, prep) in test_set.samples.iter().zip(test_prep) {
        let recon: ChannelTensor = match (&artifact, &model) {
            (None, None) => plan.invert(&prep.target, &prep.mask)?,
            _ => {
                let f = features_of(model.as_ref(), prep)?;
                let art = artifact.as_ref().expect("quantizer present");
                let q = quantize_through_frame(art, &f, prep.mask.bits())?;
                match bits_seen {
                    None => bits_seen = Some(q.feedback_bits),
                    Some(b) if b != q.feedback_bits => {
                        return Err(Error::Corrupt(format!(
                            "feedback bits changed across samples: {b} vs {}",
                            q.feedback_bits
                        )));
                    }
                    _ => {}
                }
                let mut deq = q.dequantized;
                if let Some(params) = &offset {
                    deq = offsetnet_apply(params, &deq)?;
                }
                match &model {
                    Some(ae) => ae.decode(&deq, &prep.mask, plan)?,
                    None => plan.invert(&targets_from_raw_features(&deq), &prep.mask)?,
                }
            }
        };
        per_sample.push(nmse(&recon, orig)?);
    }
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok((mean, per_sample, model, artifact, offset, bits_seen))
}

/// Executes the full pipeline for every seed and aggregates the report.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<(ReportRow, PipelineArtifacts)> {
    cfg.validate()?;
    let started = Instant::now();

    let train_data = synth_dataset(&cfg.channel, Split::Train)?;
    let test_data = synth_dataset(&cfg.channel, Split::Test)?;

    let plan = Plan::fit(
        &train_data,
        PlanSpec {
            path_rule: cfg.preprocess.path_rule,
            domain: cfg.preprocess.domain,
            feature_mode: cfg.preprocess.feature_mode,
        },
    )?;
    let rate = resolve_rate(cfg, &plan)?;

    let train_prep = prepare_split(&plan, &train_data, cfg.preprocess.augment.as_ref())?;
    let test_prep = prepare_split(&plan, &test_data, None)?;

    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    let mut last: Option<(Vec<f64>, Option<Autoencoder>, Option<QuantizerArtifact>, Option<OffsetNetParams>, Option<u32>)> = None;
    for &seed in &cfg.seeds {
        let (mean, per_sample, model, artifact, offset, bits) =
            run_seed(cfg, &plan, &rate, &train_prep, &test_data, &test_prep, seed)?;
        per_seed.push(mean);
        last = Some((per_sample, model, artifact, offset, bits));
    }
    let (per_sample, model, artifact, offset, bits_seen) = last.expect("at least one seed");

    // identity pipelines report the raw 32-bit-float accounting
    let feedback_bits = match bits_seen {
        Some(b) => b,
        None => match cfg.preprocess.path_rule {
            None => raw_sample_bits(&cfg.channel) as u32,
            Some(_) => {
                cfg.channel.n_paths as u32
                    + (rate.retained * plan.target_per_path() * 32) as u32
            }
        },
    };

    let n = per_seed.len() as f64;
    let mean = per_seed.iter().sum::<f64>() / n;
    let var = per_seed.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let row = ReportRow {
        config_digest: cfg.digest(),
        scheme: cfg.scheme_name().to_string(),
        feedback_bits,
        nmse_mean: mean,
        nmse_std: var.sqrt(),
        pass: mean <= ReportRow::NMSE_THRESHOLD,
        wall_s: started.elapsed().as_secs_f64(),
    };
    let artifacts = PipelineArtifacts {
        plan,
        model,
        quantizer: artifact,
        offset_net: offset,
        per_seed_nmse: per_seed,
        per_sample_nmse: per_sample,
        feedback_bits,
    };
    Ok((row, artifacts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelConfig;
    use crate::harness::PreprocessConfig;
    use crate::preprocess::{FeatureMode, PathRule};

    fn tiny_channel() -> ChannelConfig {
        ChannelConfig {
            n_train: 24,
            n_test: 8,
            ..ChannelConfig::default()
        }
    }

    #[test]
    fn identity_pipeline_reconstructs_exactly() {
        let cfg = PipelineConfig {
            channel: tiny_channel(),
            ..PipelineConfig::default()
        };
        let (row, art) = run_pipeline(&cfg).unwrap();
        assert!(row.nmse_mean <= 1e-24, "identity NMSE {}", row.nmse_mean);
        assert!(row.pass);
        assert_eq!(row.feedback_bits, 24576);
        assert_eq!(row.scheme, "identity");
        assert!(art.model.is_none());
    }

    #[test]
    fn cut_only_pipeline_nmse_equals_discarded_energy() {
        let cfg = PipelineConfig {
            channel: tiny_channel(),
            preprocess: PreprocessConfig {
                path_rule: Some(PathRule::TopK(10)),
                ..PreprocessConfig::default()
            },
            ..PipelineConfig::default()
        };
        let (row, art) = run_pipeline(&cfg).unwrap();
        // zero-fill residual: per-sample NMSE equals the discarded fraction
        let test_data = synth_dataset(&cfg.channel, Split::Test).unwrap();
        for (i, s) in test_data.samples.iter().enumerate() {
            let prep = art.plan.apply(s).unwrap();
            let expect = prep.disc_energy / prep.h_norm_sq;
            assert!((art.per_sample_nmse[i] - expect).abs() <= 1e-10);
        }
        // mask + retained coefficients at 32-bit floats
        assert_eq!(row.feedback_bits, 24 + 10 * 32 * 32);
    }

    #[test]
    fn raw_quantized_pipeline_counts_bits_exactly() {
        let cfg = PipelineConfig {
            channel: tiny_channel(),
            preprocess: PreprocessConfig {
                path_rule: Some(PathRule::TopK(6)),
                feature_mode: FeatureMode::ReIm2,
                ..PreprocessConfig::default()
            },
            quantizer: Some(SchemeConfig::Uniform { bits: 6 }),
            ..PipelineConfig::default()
        };
        let (row, _) = run_pipeline(&cfg).unwrap();
        // 6 paths x 32 targets x 6 bits + 24 mask bits
        assert_eq!(row.feedback_bits, 24 + 6 * 32 * 6);
        assert!(row.nmse_mean.is_finite());
    }

    #[test]
    fn budget_caps_derive_bits_for_raw_pipelines() {
        let cfg = PipelineConfig {
            channel: tiny_channel(),
            preprocess: PreprocessConfig {
                path_rule: Some(PathRule::TopK(6)),
                ..PreprocessConfig::default()
            },
            quantizer: Some(SchemeConfig::Adaptive { bits: 16 }),
            budget_bits: Some(1000),
            ..PipelineConfig::default()
        };
        let (row, _) = run_pipeline(&cfg).unwrap();
        // 192 symbols: floor(976/192) = 5 bits -> 984 total
        assert_eq!(row.feedback_bits, 24 + 192 * 5);
        assert!(row.feedback_bits <= 1000);
    }

    #[test]
    fn infeasible_budget_fails_before_training() {
        let cfg = PipelineConfig {
            channel: tiny_channel(),
            quantizer: Some(SchemeConfig::Uniform { bits: 4 }),
            budget_bits: Some(20),
            ..PipelineConfig::default()
        };
        assert!(matches!(run_pipeline(&cfg), Err(Error::Config(_))));
    }
}
