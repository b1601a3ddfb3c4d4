//! `fsd`: ingest, synthesize, train, evaluate, ablate, and inspect detectors.
//!
//! Any config key may also be given as `--key value` (dashes or underscores)
//! and overrides the config file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fsd_core::config::{RunConfig, KEYS};
use fsd_core::Error;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "fsd", version, about = "Fire and smoke detection toolkit")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "fsd-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract frames from videos and write all/train/test manifests.
    Ingest {
        /// Directory of videos (`.gif` files or directories of frames).
        #[arg(long)]
        videos: PathBuf,
        #[arg(long, default_value = "videos")]
        name: String,
    },
    /// Generate a synthetic transparent fire/smoke dataset.
    Synth {
        #[arg(long, default_value = "synth")]
        name: String,
        /// Also write seeded train/test manifests.
        #[arg(long)]
        split: bool,
    },
    /// Train a detector on a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Run a checkpoint over a manifest and report AP, mAP and avg BI.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Compare attention on and off across seeds.
    Ablate {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Comma-separated training seeds.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        seeds: Option<Vec<u64>>,
    },
    /// Mean burning intensity of matched prediction/ground-truth pairs.
    Bi {
        /// Detection store in the record line format.
        #[arg(long)]
        pred: PathBuf,
        /// Ground truth: a record file, or a manifest with `--gt-manifest`.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        gt_manifest: bool,
        #[arg(long)]
        w1: Option<f64>,
        #[arg(long)]
        w2: Option<f64>,
    },
    /// Class activation heatmaps for one image.
    Cam {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Classes to map (fire, smoke); defaults to both.
        #[arg(long = "class", value_delimiter = ',')]
        classes: Vec<String>,
        #[arg(long, default_value_t = 0)]
        level: usize,
        /// Emit a color overlay on the letterboxed input instead of grayscale.
        #[arg(long)]
        overlay: bool,
    },
    /// Parameter count and multiply-adds of the configured model.
    Stats {
        /// Input sizes as HxW, comma separated; defaults to the configured size.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<String>,
    },
}

/// Pulls `--<config key> <value>` pairs out of `args`; the rest goes to clap.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let key = a.strip_prefix("--").map(|k| k.replace('-', "_"));
        match key {
            Some(k) if k != "seed" && KEYS.contains(&k.as_str()) => match it.next() {
                Some(v) => overrides.push((k, v)),
                None => rest.push(a),
            },
            _ => rest.push(a),
        }
    }
    (rest, overrides)
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let (args, mut overrides) = split_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Command::Bi { w1, w2, .. } = &cli.command {
        overrides.extend(w1.map(|w| ("bi_w1".to_string(), w.to_string())));
        overrides.extend(w2.map(|w| ("bi_w2".to_string(), w.to_string())));
    }
    let result = RunConfig::load(cli.config.as_deref(), &overrides).and_then(|cfg| commands::run(&cli, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fsd: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
