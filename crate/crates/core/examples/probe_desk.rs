// probe: desk-scale training loss trajectory
use csi_lab::channel::{synth_dataset, ChannelConfig, Split};
use csi_lab::nn::autoencoder::{Autoencoder, IoDims};
use csi_lab::nn::train::{train, Projector, TrainConfig, TrainSample, TrainSet};
use csi_lab::nn::NetworkSpec;
use csi_lab::preprocess::{Domain, FeatureMode, PathRule, Plan, PlanSpec};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let n_train: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(500);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let bypass: bool = args.get(4).map(|s| s == "bypass").unwrap_or(false);
    let domain = match args.get(5).map(|s| s.as_str()) {
        Some("delay") => Domain::AntennaDelay,
        _ => Domain::AngularDelay,
    };
    let mode = match args.get(6).map(|s| s.as_str()) {
        Some("four") => FeatureMode::ReImPhaseEnergy4,
        _ => FeatureMode::ReIm2,
    };

    let spread: f64 = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let channel = ChannelConfig { n_train, angle_spread: spread, ..ChannelConfig::desk() };
    let train_data = synth_dataset(&channel, Split::Train).unwrap();
    let plan = Plan::fit(
        &train_data,
        PlanSpec {
            path_rule: Some(PathRule::TopK(12)),
            domain,
            feature_mode: mode,
        },
    )
    .unwrap();
    println!("plan stats: offset={:.4} scale={:.4}", plan.stats.offset, plan.stats.scale);

    let in_scale: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let samples: Vec<TrainSample> = train_data
        .samples
        .iter()
        .map(|s| {
            let p = plan.apply(s).unwrap();
            let input = p.input.iter().map(|v| v * in_scale).collect();
            TrainSample { input, target: p.target, h_norm_sq: p.h_norm_sq, disc_energy: p.disc_energy }
        })
        .collect();
    let floor: f64 = samples.iter().map(|s| s.disc_energy / s.h_norm_sq).sum::<f64>() / samples.len() as f64;
    println!("mean discarded-energy floor: {floor:.4}");
    let set = TrainSet { samples, scale: plan.stats.scale, projector: Projector::Identity };

    let arch = args.get(9).map(|s| s.as_str()).unwrap_or("joint");
    let mut spec = NetworkSpec::desk(122);
    match arch {
        "rz" => spec.rezero = true,
        "pp" => {
            spec.mode = csi_lab::nn::Mode::PerPathShared;
            spec.encoder_widths = vec![128, 64];
            spec.decoder_widths = vec![64, 128];
            spec.per_path_input = plan.input_per_path();
            spec.feature_len = 10;
        }
        "ppwide" => {
            spec.mode = csi_lab::nn::Mode::PerPathShared;
            spec.encoder_widths = vec![256, 128];
            spec.decoder_widths = vec![128, 256];
            spec.per_path_input = plan.input_per_path();
            spec.feature_len = 10;
        }
        _ => {}
    }
    let io = match spec.mode {
        csi_lab::nn::Mode::PerPathShared => IoDims { enc_in: plan.input_per_path(), dec_out: plan.target_per_path() },
        csi_lab::nn::Mode::Joint => IoDims { enc_in: set.samples[0].input.len(), dec_out: set.samples[0].target.len() },
    };
    let mut ae = Autoencoder::init(&spec, io, 1234).unwrap();
    let cfg = TrainConfig {
        epochs,
        batch_size: args.get(10).and_then(|s| s.parse().ok()).unwrap_or(32),
        learning_rate: lr,
        bypass_soft_quant: bypass,
        seed: 1234,
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let report = train(&mut ae, &set, &cfg).unwrap();
    let h = &report.epoch_loss;
    print!("loss:");
    for (i, l) in h.iter().enumerate() {
        if i < 5 || i % (epochs / 10).max(1) == 0 || i == h.len() - 1 {
            print!(" [{i}]={l:.4}");
        }
    }
    println!();
    println!(
        "epochs={epochs} n={n_train} lr={lr} bypass={bypass}: final={:.4} wall={:.1}s ({:.2}s/epoch)",
        h.last().unwrap(),
        t.elapsed().as_secs_f64(),
        t.elapsed().as_secs_f64() / epochs as f64
    );
}
