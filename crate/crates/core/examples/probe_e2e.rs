// probe: full pipeline (train + adaptive quantization + frames) at 512 bits
use csi_lab::channel::ChannelConfig;
use csi_lab::harness::{run_pipeline, PipelineConfig, PreprocessConfig, SchemeConfig};
use csi_lab::nn::train::TrainConfig;
use csi_lab::nn::{Mode, NetworkSpec};
use csi_lab::preprocess::{Domain, FeatureMode, PathRule};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1234);
    let mode = match args.get(3).map(|s| s.as_str()) {
        Some("joint") => Mode::Joint,
        _ => Mode::PerPathShared,
    };
    let cut: bool = args.get(4).map(|s| s != "nocut").unwrap_or(true);
    let topk: usize = args.get(4).and_then(|s| s.strip_prefix("cut").and_then(|k| k.parse().ok())).unwrap_or(12);
    let scheme = match args.get(5).map(|s| s.as_str()) {
        Some("uniform") => SchemeConfig::Uniform { bits: 4 },
        Some("b3") => SchemeConfig::Adaptive { bits: 3 },
        Some("b5") => SchemeConfig::Adaptive { bits: 5 },
        Some("u16") => SchemeConfig::Uniform { bits: 16 },
        _ => SchemeConfig::Adaptive { bits: 4 },
    };

    let mut net = NetworkSpec::desk(122);
    if mode == Mode::PerPathShared {
        net.mode = Mode::PerPathShared;
        net.encoder_widths = vec![128, 64];
        net.decoder_widths = vec![64, 128];
        net.per_path_input = 32;
        net.feature_len = 10;
        if args.get(6).map(|s| s == "wide").unwrap_or(false) { net.encoder_widths = vec![256, 128]; net.decoder_widths = vec![128, 256]; }
    }
    let cfg = PipelineConfig {
        channel: ChannelConfig { angle_spread: 0.05, ..ChannelConfig::desk() },
        preprocess: PreprocessConfig {
            path_rule: if cut { Some(PathRule::TopK(topk)) } else { None },
            domain: Domain::AntennaDelay,
            feature_mode: FeatureMode::ReIm2,
            augment: match args.get(9).map(|s| s.as_str()) {
                Some("aug2") => Some(csi_lab::harness::AugmentConfig { flags: csi_lab::preprocess::AugmentFlags { flip_tx: true, flip_rx: true, translate_tx: false, translate_rx: false }, prob: 0.5, copies: 2 }),
                Some("aug4") => Some(csi_lab::harness::AugmentConfig { flags: csi_lab::preprocess::AugmentFlags { flip_tx: true, flip_rx: true, translate_tx: true, translate_rx: true }, prob: 0.5, copies: 4 }),
                _ => None,
            },
        },
        network: Some(net),
        train: Some(TrainConfig {
            epochs,
            batch_size: 8,
            learning_rate: 2e-3,
            ..TrainConfig::default()
        }),
        quantizer: Some(scheme),
        budget_bits: if args.get(7).map(|s| s == "nobudget").unwrap_or(false) { None } else { Some(512) },
        seeds: vec![seed],
        offset_net: if args.get(8).map(|s| s == "off").unwrap_or(false) { Some(Default::default()) } else { None },
    };
    let t = Instant::now();
    match run_pipeline(&cfg) {
        Ok((row, art)) => {
            let mut sorted = art.per_sample_nmse.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            println!(
                "mode={mode:?} cut={cut} scheme={} ep={epochs} seed={seed}: bits={} nmse={:.4} pass={} p50={:.4} p90={:.4} wall={:.0}s",
                row.scheme,
                row.feedback_bits,
                row.nmse_mean,
                row.pass,
                sorted[sorted.len() / 2],
                sorted[9 * sorted.len() / 10],
                t.elapsed().as_secs_f64()
            );
        }
        Err(e) => println!("error: {e}"),
    }
}
