//! Command-line interface for the CSI feedback laboratory.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use csi_lab::channel::{mean_nmse, synth_dataset, ChannelConfig, Dataset, Split};
use csi_lab::dataset_io::{read_dataset, write_dataset};
use csi_lab::harness::{expand_budgets, run_pipeline, sweep, PipelineConfig};
use csi_lab::nn::autoencoder::IoDims;
use csi_lab::nn::checkpoint::{read_model, write_model};
use csi_lab::nn::gradcheck::grad_check;
use csi_lab::nn::{Activation, Mode, NetworkSpec, SoftQuantSpec};
use csi_lab::preprocess::{Plan, PlanSpec};
use csi_lab::quantize::artifact::{read_quantizer, write_quantizer};

#[derive(Parser)]
#[command(name = "csi-lab", version, about = "Desk-scale CSI feedback compression laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a channel dataset and write it to a binary file.
    Generate(GenerateArgs),
    /// Train a codec from a pipeline config; writes model, quantizer and
    /// plan artifacts.
    Train(TrainArgs),
    /// Encode one dataset sample into a feedback frame file.
    Encode(CodecArgs),
    /// Decode a feedback frame file into a one-sample reconstruction dataset.
    Decode(DecodeArgs),
    /// Evaluate reconstructions against a dataset (identity pipeline, a
    /// reconstruction file, or a trained codec).
    Eval(EvalArgs),
    /// Run a budget sweep and emit CSV/JSON reports.
    Sweep(SweepArgs),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Channel config JSON; desk profile when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "train")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Pipeline config JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    quantizer_out: Option<PathBuf>,
    /// Preprocessing plan JSON (needed later by encode/decode).
    #[arg(long)]
    plan_out: Option<PathBuf>,
    /// Report row JSON.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct CodecArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Sample index within the dataset.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    quantizer: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    frame: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    quantizer: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    /// Output reconstruction (a one-sample dataset file).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Evaluate the identity pipeline (preprocess then invert, no
    /// compression).
    #[arg(long, default_value_t = false)]
    identity: bool,
    /// Compare a reconstruction file against sample `--index`.
    #[arg(long)]
    recon: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Evaluate a trained codec over the whole dataset.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    quantizer: Option<PathBuf>,
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Base pipeline config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated feedback budgets in bits.
    #[arg(long, value_delimiter = ',')]
    budgets: Vec<u32>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 101)]
    seed: u64,
    /// Maximum relative error to accept.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

fn parse_split(s: &str) -> anyhow::Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => bail!("unknown split `{other}` (expected train|test)"),
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &PathBuf, what: &str) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {what} {path:?}"))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {path:?}"))
}

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<()> {
    let config: ChannelConfig = match &args.config {
        Some(p) => load_json(p, "channel config")?,
        None => ChannelConfig::desk(),
    };
    let split = parse_split(&args.split)?;
    let ds = synth_dataset(&config, split)?;
    write_dataset(&ds, &args.out)?;
    println!(
        "wrote {} samples ({}x{}x{}) to {}",
        ds.samples.len(),
        config.n_paths,
        config.n_tx,
        config.n_rx,
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let cfg: PipelineConfig = load_json(&args.config, "pipeline config")?;
    let (row, artifacts) = run_pipeline(&cfg)?;
    if let Some(path) = &args.model_out {
        match &artifacts.model {
            Some(model) => write_model(model, path)?,
            None => bail!("pipeline has no trained model to write"),
        }
    }
    if let Some(path) = &args.quantizer_out {
        match &artifacts.quantizer {
            Some(q) => write_quantizer(q, path)?,
            None => bail!("pipeline has no quantizer to write"),
        }
    }
    if let Some(path) = &args.plan_out {
        std::fs::write(path, serde_json::to_string_pretty(&artifacts.plan)?)?;
    }
    if let Some(path) = &args.report_out {
        std::fs::write(path, serde_json::to_string_pretty(&row)?)?;
    }
    println!(
        "digest={} scheme={} feedback_bits={} nmse={:.6} (std {:.6}) pass={}",
        row.config_digest, row.scheme, row.feedback_bits, row.nmse_mean, row.nmse_std, row.pass
    );
    Ok(())
}

fn cmd_encode(args: CodecArgs) -> anyhow::Result<()> {
    let ds = read_dataset(&args.dataset)?;
    let sample = ds
        .samples
        .get(args.index)
        .with_context(|| format!("dataset has {} samples, index {}", ds.samples.len(), args.index))?;
    let model = read_model(&args.model)?;
    let quantizer = read_quantizer(&args.quantizer)?;
    let plan: Plan = load_json(&args.plan, "plan")?;

    let prep = plan.apply(sample)?;
    let features = model.encode(&prep.input)?;
    let bytes = csi_lab::harness::pipeline::encode_to_frame(&quantizer, &features, prep.mask.bits())?;
    std::fs::write(&args.out, &bytes)?;
    println!("wrote {}-byte frame to {}", bytes.len(), args.out.display());
    Ok(())
}

fn cmd_decode(args: DecodeArgs) -> anyhow::Result<()> {
    let bytes = std::fs::read(&args.frame)?;
    let model = read_model(&args.model)?;
    let quantizer = read_quantizer(&args.quantizer)?;
    let plan: Plan = load_json(&args.plan, "plan")?;

    let recon = csi_lab::harness::pipeline::decode_from_frame(&model, &quantizer, &plan, &bytes)?;
    let ds = Dataset {
        config: ChannelConfig {
            n_paths: recon.n_paths(),
            n_tx: recon.n_tx(),
            n_rx: recon.n_rx(),
            n_train: 1,
            n_test: 0,
            ..ChannelConfig::default()
        },
        split: Split::Train,
        samples: vec![recon],
        stats: plan.stats,
    };
    write_dataset(&ds, &args.out)?;
    println!("wrote reconstruction to {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let ds = read_dataset(&args.dataset)?;
    if args.identity {
        let plan = Plan::fit(&ds, PlanSpec::default())?;
        let mut pairs = Vec::with_capacity(ds.samples.len());
        for s in &ds.samples {
            let prep = plan.apply(s)?;
            pairs.push((plan.invert(&prep.target, &prep.mask)?, s.clone()));
        }
        let nmse = mean_nmse(&pairs)?;
        println!("nmse {nmse:e}");
        return Ok(());
    }
    if let Some(recon_path) = &args.recon {
        let recon = read_dataset(recon_path)?;
        let original = ds
            .samples
            .get(args.index)
            .with_context(|| format!("dataset has {} samples", ds.samples.len()))?;
        let rec = recon
            .samples
            .first()
            .context("reconstruction file has no samples")?;
        let nmse = csi_lab::channel::nmse(rec, original)?;
        println!("nmse {nmse:e}");
        return Ok(());
    }
    match (&args.model, &args.quantizer, &args.plan) {
        (Some(m), Some(q), Some(p)) => {
            let model = read_model(m)?;
            let quantizer = read_quantizer(q)?;
            let plan: Plan = load_json(p, "plan")?;
            let mut acc = 0.0;
            for s in &ds.samples {
                let prep = plan.apply(s)?;
                let features = model.encode(&prep.input)?;
                let bytes =
                    csi_lab::harness::pipeline::encode_to_frame(&quantizer, &features, prep.mask.bits())?;
                let recon =
                    csi_lab::harness::pipeline::decode_from_frame(&model, &quantizer, &plan, &bytes)?;
                acc += csi_lab::channel::nmse(&recon, s)?;
            }
            println!("nmse {:e}", acc / ds.samples.len() as f64);
            Ok(())
        }
        _ => bail!("eval needs --identity, --recon, or --model/--quantizer/--plan"),
    }
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    if args.budgets.is_empty() {
        bail!("--budgets requires at least one value");
    }
    let base: PipelineConfig = load_json(&args.config, "pipeline config")?;
    let report = sweep(expand_budgets(&base, &args.budgets))?;
    let csv = report.to_csv()?;
    print!("{csv}");
    if let Some(path) = &args.out_csv {
        report.write_csv(path)?;
    }
    if let Some(path) = &args.out_json {
        report.write_json(path)?;
    }
    let failures: Vec<_> = report.rows.iter().filter(|r| r.error.is_some()).collect();
    for f in &failures {
        eprintln!(
            "row failed (budget {:?}): {}",
            f.config.budget_bits,
            f.error.as_deref().unwrap_or("unknown")
        );
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> anyhow::Result<()> {
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
    let report = grad_check(&spec, IoDims { enc_in: 8, dec_out: 8 }, args.seed)?;
    for g in &report.groups {
        println!("{:40} max_rel_error {:.3e}", g.name, g.max_rel_error);
    }
    let worst = report.max_rel_error();
    println!(
        "gradcheck: {} parameters, step {:.0e}, max relative error {:.3e}",
        report.param_count, report.step, worst
    );
    if worst > args.tolerance {
        bail!("max relative error {worst:e} exceeds tolerance {:e}", args.tolerance);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
