//! Command-line front end: capture profiling, dataset generation, channel
//! injection and extraction, feature CSVs, model training and evaluation,
//! and the two-stage detection pipeline.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use covert6::channels::{
    bytes_from_bits, bytes_from_trits, extract_address, extract_flowlabel, extract_hoplimit,
    extract_length, ChannelKind, HopLimitMode, DEFAULT_ASSUMED_MAX_HOPS,
};
use covert6::crypto::{SharedSecret, DEFAULT_ASCII_SHIFT};
use covert6::dataset::{
    build_mixed_dataset, desk_scale_config, generate_background, inject, read_labels_csv,
    InjectOptions, LabeledCapture, MixConfig, Provenance,
};
use covert6::features::{extract_features, read_features_csv, write_features_csv};
use covert6::flow::flow_membership;
use covert6::ml::{
    evaluate, run_two_stage_pipeline, GradientBoostingParams, ModelKind, RandomForestParams,
    TaskKind,
};
use covert6::packet::LINKTYPE_ETHERNET;
use covert6::pcap::{read_pcap, write_pcap};
use covert6::profile::profile_capture;
use covert6::{Model, PacketFeatures};

/// Nibble permutation used in the worked examples, as 16 hex digits.
const EXAMPLE_SEQUENCE_HEX: &str = "ea712345689bcdf0";

#[derive(Parser)]
#[command(name = "covert6", version, about = "IPv6 header covert channels: embed, detect, classify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Header-field histograms and flow-label behavior of a capture.
    Profile {
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory for the CSV tables and text summary.
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Generate a synthetic capture: background traffic, optionally with
    /// covert packets mixed in per channel.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Label sidecar CSV to write next to the capture.
        #[arg(long)]
        labels: PathBuf,
        /// key=value config file (keys: normal, seed, hoplimit, address,
        /// length, flowlabel). Flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Shorthand for the built-in desk-scale class mix.
        #[arg(long, conflicts_with = "config")]
        desk_scale: bool,
        #[arg(long)]
        normal: Option<usize>,
        #[arg(long)]
        hoplimit: Option<usize>,
        #[arg(long)]
        address: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        flowlabel: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        secret: SecretArgs,
    },
    /// Embed one covert message into an existing capture.
    Inject {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Label sidecar CSV to write for the modified capture.
        #[arg(long)]
        labels: PathBuf,
        /// hoplimit, address, length, or flowlabel.
        #[arg(long)]
        channel: String,
        #[arg(long, group = "msg")]
        message: Option<String>,
        /// Read the message bytes from a file instead.
        #[arg(long, group = "msg")]
        message_file: Option<PathBuf>,
        /// Use the three-symbol hop-limit alphabet instead of two.
        #[arg(long)]
        ternary: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        secret: SecretArgs,
    },
    /// Recover a covert message from a capture.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        channel: String,
        /// Label sidecar CSV; when given, only packets labeled with the
        /// channel are fed to the extractor.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Message length in bytes; without it every recovered byte prints.
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        ternary: bool,
        /// Largest hop count assumed on the path (hoplimit channel).
        #[arg(long, default_value_t = DEFAULT_ASSUMED_MAX_HOPS)]
        max_hops: u8,
        #[command(flatten)]
        secret: SecretArgs,
    },
    /// Extract the per-packet feature matrix as CSV.
    Featurize {
        #[arg(long = "in")]
        input: PathBuf,
        /// Label sidecar CSV; without it every row is labeled normal.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a feature CSV and report held-out metrics.
    Train {
        #[arg(long)]
        features: PathBuf,
        /// rf (random forest) or gb (gradient boosting).
        #[arg(long)]
        model_kind: String,
        /// binary or multiclass.
        #[arg(long)]
        task: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 100)]
        rounds: usize,
        /// Tree depth limit; forests default to unlimited, boosting to 3.
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        learning_rate: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Leading fraction used for training; the rest is held out.
        #[arg(long, default_value_t = 0.75)]
        train_fraction: f64,
    },
    /// Evaluate a saved model against a labeled feature CSV.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Run the two-stage detector over a capture and write per-packet
    /// verdicts.
    Pipeline {
        #[arg(long)]
        binary_model: PathBuf,
        #[arg(long)]
        multiclass_model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Verdict CSV: packet_index,verdict.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SecretArgs {
    /// RC4 key as hex. Prefer the environment variable so the key stays out
    /// of shell history; it is never printed.
    #[arg(long, env = "COVERT6_KEY_HEX", hide_env_values = true)]
    key_hex: Option<String>,
    /// FlowLabel nibble permutation: 16 hex digits, each exactly once.
    #[arg(long, default_value = EXAMPLE_SEQUENCE_HEX)]
    sequence: String,
    /// Length-channel ASCII shift.
    #[arg(long, default_value_t = DEFAULT_ASCII_SHIFT)]
    shift: u8,
}

impl SecretArgs {
    fn build(&self) -> Result<SharedSecret> {
        let key = self
            .key_hex
            .as_deref()
            .context("no key: pass --key-hex or set COVERT6_KEY_HEX")?;
        Ok(SharedSecret::from_hex_parts(key, &self.sequence, self.shift)?)
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Profile { input, out_dir } => cmd_profile(&input, &out_dir),
        Command::Generate {
            out,
            labels,
            config,
            desk_scale,
            normal,
            hoplimit,
            address,
            length,
            flowlabel,
            seed,
            secret,
        } => {
            let mut mix = match (&config, desk_scale) {
                (Some(path), _) => MixConfig::load(path)?,
                (None, true) => desk_scale_config(seed),
                (None, false) => MixConfig::default(),
            };
            if config.is_none() {
                mix.seed = seed;
            }
            if let Some(n) = normal {
                mix.normal_count = n;
            }
            for (kind, count) in [
                (ChannelKind::HopLimit, hoplimit),
                (ChannelKind::Address, address),
                (ChannelKind::Length, length),
                (ChannelKind::FlowLabel, flowlabel),
            ] {
                if let Some(c) = count {
                    mix.covert_counts.insert(kind, c);
                }
            }
            cmd_generate(&mix, &secret, &out, &labels)
        }
        Command::Inject {
            input,
            out,
            labels,
            channel,
            message,
            message_file,
            ternary,
            seed,
            secret,
        } => {
            let message = match (message, message_file) {
                (Some(text), _) => text.into_bytes(),
                (None, Some(path)) => std::fs::read(&path)
                    .with_context(|| format!("reading message file {}", path.display()))?,
                (None, None) => bail!("pass --message or --message-file"),
            };
            let options = InjectOptions {
                seed,
                hoplimit_mode: hoplimit_mode(ternary),
            };
            cmd_inject(&input, &out, &labels, &parse_covert_channel(&channel)?, &message, &secret.build()?, &options)
        }
        Command::Extract {
            input,
            channel,
            labels,
            length,
            ternary,
            max_hops,
            secret,
        } => cmd_extract(
            &input,
            labels.as_deref(),
            &parse_covert_channel(&channel)?,
            length,
            hoplimit_mode(ternary),
            max_hops,
            &secret,
        ),
        Command::Featurize { input, labels, out } => cmd_featurize(&input, labels.as_deref(), &out),
        Command::Train {
            features,
            model_kind,
            task,
            out,
            trees,
            rounds,
            depth,
            learning_rate,
            seed,
            train_fraction,
        } => {
            let kind: ModelKind = model_kind
                .parse()
                .map_err(|e: String| anyhow::anyhow!(e))
                .context("--model-kind")?;
            let task: TaskKind = task
                .parse()
                .map_err(|e: String| anyhow::anyhow!(e))
                .context("--task")?;
            if !(0.0..=1.0).contains(&train_fraction) {
                bail!("--train-fraction must be in [0, 1], got {train_fraction}");
            }
            cmd_train(
                &features,
                kind,
                task,
                &out,
                trees,
                rounds,
                depth,
                learning_rate,
                seed,
                train_fraction,
            )
        }
        Command::Evaluate { model, features } => cmd_evaluate(&model, &features),
        Command::Pipeline {
            binary_model,
            multiclass_model,
            input,
            out,
        } => cmd_pipeline(&binary_model, &multiclass_model, &input, &out),
    }
}

fn hoplimit_mode(ternary: bool) -> HopLimitMode {
    if ternary {
        HopLimitMode::Ternary
    } else {
        HopLimitMode::Binary
    }
}

fn parse_covert_channel(text: &str) -> Result<ChannelKind> {
    let kind: ChannelKind = text.parse().map_err(|e: String| anyhow::anyhow!(e))?;
    if kind == ChannelKind::Normal {
        bail!("--channel must name a covert channel: hoplimit, address, length, or flowlabel");
    }
    Ok(kind)
}

fn read_capture(path: &std::path::Path) -> Result<Vec<covert6::packet::Ipv6Packet>> {
    let read = read_pcap(path)?;
    if read.skipped_non_ipv6 > 0 {
        eprintln!("note: skipped {} non-IPv6 records", read.skipped_non_ipv6);
    }
    Ok(read.packets)
}

fn read_labeled_capture(
    path: &std::path::Path,
    labels: Option<&std::path::Path>,
) -> Result<LabeledCapture> {
    let packets = read_capture(path)?;
    let (labels, provenance) = match labels {
        Some(p) => read_labels_csv(p)?,
        None => (
            vec![ChannelKind::Normal; packets.len()],
            vec![Provenance::Background; packets.len()],
        ),
    };
    if labels.len() != packets.len() {
        bail!(
            "label sidecar has {} rows but the capture has {} packets",
            labels.len(),
            packets.len()
        );
    }
    Ok(LabeledCapture {
        packets,
        labels,
        provenance,
    })
}

fn print_histogram(capture: &LabeledCapture) {
    let parts: Vec<String> = capture
        .label_histogram()
        .iter()
        .map(|(k, v)| format!("{k} {v}"))
        .collect();
    println!("{} packets ({})", capture.len(), parts.join(", "));
}

fn cmd_profile(input: &std::path::Path, out_dir: &std::path::Path) -> Result<()> {
    let packets = read_capture(input)?;
    let (records, _) = flow_membership(&packets);
    let report = profile_capture(&packets, &records);
    report.write_to_dir(out_dir)?;
    print!("{}", report.summary());
    println!("report written to {}", out_dir.display());
    Ok(())
}

fn cmd_generate(
    mix: &MixConfig,
    secret: &SecretArgs,
    out: &std::path::Path,
    labels: &std::path::Path,
) -> Result<()> {
    let capture = if mix.covert_counts.values().all(|&c| c == 0) {
        generate_background(mix)
    } else {
        build_mixed_dataset(mix, &secret.build()?)?
    };
    write_pcap(&capture.packets, out, LINKTYPE_ETHERNET)?;
    capture.write_labels_csv(labels)?;
    print_histogram(&capture);
    Ok(())
}

fn cmd_inject(
    input: &std::path::Path,
    out: &std::path::Path,
    labels_out: &std::path::Path,
    channel: &ChannelKind,
    message: &[u8],
    secret: &SharedSecret,
    options: &InjectOptions,
) -> Result<()> {
    let mut capture = read_labeled_capture(input, None)?;
    let summary = inject(&mut capture, *channel, message, secret, options)?;
    write_pcap(&capture.packets, out, LINKTYPE_ETHERNET)?;
    capture.write_labels_csv(labels_out)?;
    println!(
        "embedded {} bytes over {} {} carriers",
        message.len(),
        summary.carrier_indices.len(),
        channel
    );
    print_histogram(&capture);
    Ok(())
}

fn cmd_extract(
    input: &std::path::Path,
    labels: Option<&std::path::Path>,
    channel: &ChannelKind,
    length: Option<usize>,
    mode: HopLimitMode,
    max_hops: u8,
    secret_args: &SecretArgs,
) -> Result<()> {
    let capture = read_labeled_capture(input, labels)?;
    let packets: Vec<_> = if labels.is_some() {
        capture
            .packets
            .iter()
            .zip(&capture.labels)
            .filter(|(_, &l)| l == *channel)
            .map(|(p, _)| p.clone())
            .collect()
    } else {
        capture.packets
    };
    if packets.is_empty() {
        bail!("no {channel} carrier packets in the capture");
    }
    let bytes = match channel {
        ChannelKind::HopLimit => {
            let symbols = extract_hoplimit(&packets, mode, max_hops);
            let undecodable = symbols.iter().filter(|s| s.is_none()).count();
            if undecodable > 0 {
                eprintln!("note: {undecodable} packets had no decodable hop-limit symbol");
            }
            let symbols: Vec<u8> = symbols.into_iter().flatten().collect();
            let mut bytes = match mode {
                HopLimitMode::Binary => bytes_from_bits(&symbols),
                HopLimitMode::Ternary => bytes_from_trits(&symbols),
            };
            if let Some(n) = length {
                bytes.truncate(n);
            }
            bytes
        }
        ChannelKind::FlowLabel => {
            let extraction = extract_flowlabel(&packets, &secret_args.build()?, length)?;
            if extraction.skipped_non_carriers > 0 {
                eprintln!(
                    "note: skipped {} non-carrier packets",
                    extraction.skipped_non_carriers
                );
            }
            extraction.bytes
        }
        ChannelKind::Length => extract_length(&packets, &secret_args.build()?, length)?,
        ChannelKind::Address => extract_address(&packets, &secret_args.build()?, length)?,
        ChannelKind::Normal => unreachable!("rejected during argument parsing"),
    };
    println!("hex:  {}", hex::encode(&bytes));
    println!("text: {}", String::from_utf8_lossy(&bytes));
    Ok(())
}

fn cmd_featurize(
    input: &std::path::Path,
    labels: Option<&std::path::Path>,
    out: &std::path::Path,
) -> Result<()> {
    let capture = read_labeled_capture(input, labels)?;
    let matrix: PacketFeatures = extract_features(&capture.packets, Some(&capture.labels));
    write_features_csv(&matrix, out)?;
    println!(
        "{} rows x {} features -> {}",
        matrix.len(),
        covert6::features::FEATURE_COUNT,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    features: &std::path::Path,
    kind: ModelKind,
    task: TaskKind,
    out: &std::path::Path,
    trees: usize,
    rounds: usize,
    depth: Option<usize>,
    learning_rate: f64,
    seed: u64,
    train_fraction: f64,
) -> Result<()> {
    let matrix: PacketFeatures = read_features_csv(features)?;
    let (train, test) = matrix.split_sequential(train_fraction);
    if train.is_empty() {
        bail!("training split is empty; lower --train-fraction or add rows");
    }
    let model = match kind {
        ModelKind::RandomForest => Model::fit_random_forest(
            task,
            &train,
            &RandomForestParams {
                n_trees: trees,
                max_depth: depth,
                seed,
                ..RandomForestParams::default()
            },
        )?,
        ModelKind::GradientBoosting => Model::fit_gradient_boosting(
            task,
            &train,
            &GradientBoostingParams {
                n_rounds: rounds,
                learning_rate,
                max_depth: depth.unwrap_or(3),
            },
        )?,
    };
    model.save(out)?;
    println!(
        "trained {kind} ({task}) on {} rows, saved to {}",
        train.len(),
        out.display()
    );
    if test.is_empty() {
        println!("no held-out rows; skipping metrics");
        return Ok(());
    }
    let predicted = model.predict(&test)?;
    let actual = task.targets(&test.labels);
    let report = evaluate(&actual, &predicted, task.n_classes())?;
    let names = task.class_names();
    let names: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    println!("held-out metrics on {} rows:", test.len());
    print!("{}", report.render(&names));
    Ok(())
}

fn cmd_evaluate(model_path: &std::path::Path, features: &std::path::Path) -> Result<()> {
    let model = Model::load(model_path)?;
    let matrix: PacketFeatures = read_features_csv(features)?;
    let predicted = model.predict(&matrix)?;
    let actual = model.task.targets(&matrix.labels);
    let report = evaluate(&actual, &predicted, model.task.n_classes())?;
    let names = model.task.class_names();
    let names: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    print!("{}", report.render(&names));
    Ok(())
}

fn cmd_pipeline(
    binary_model: &std::path::Path,
    multiclass_model: &std::path::Path,
    input: &std::path::Path,
    out: &std::path::Path,
) -> Result<()> {
    let stage1 = Model::load(binary_model)?;
    let stage2 = Model::load(multiclass_model)?;
    let packets = read_capture(input)?;
    let matrix: PacketFeatures = extract_features(&packets, None);
    let verdicts = run_two_stage_pipeline(&stage1, &stage2, &matrix)?;
    let mut csv = String::from("packet_index,verdict\n");
    let mut counts = std::collections::BTreeMap::new();
    for (i, v) in verdicts.iter().enumerate() {
        csv.push_str(&format!("{i},{v}\n"));
        *counts.entry(*v).or_insert(0usize) += 1;
    }
    std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    let parts: Vec<String> = counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
    println!("{} packets ({})", verdicts.len(), parts.join(", "));
    println!("verdicts written to {}", out.display());
    Ok(())
}
