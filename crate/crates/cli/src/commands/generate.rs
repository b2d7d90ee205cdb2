//! `zerocast generate`: synthetic series as JSONL, reproducible by seed.

use clap::Args;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use zerocast_core::priors::{sample_training_series, sample_training_series_auto, Phase, PriorConfig};
use zerocast_core::rng::SampleStream;
use zerocast_core::series::{Provenance, SeriesRecord};
use zerocast_core::timefeatures::Frequency;

#[derive(Args)]
pub struct GenerateArgs {
    /// Global seed; identical seeds produce byte-identical output.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of series to emit.
    #[arg(long, default_value_t = 100)]
    pub count: u64,
    /// Length of every series.
    #[arg(long, default_value_t = 256)]
    pub length: usize,
    /// Sampling frequency (e.g. 1H, 1D, 1M). Omit to draw one per series.
    #[arg(long)]
    pub freq: Option<String>,
    /// Share of series drawn from the GP prior.
    #[arg(long, default_value_t = 0.7)]
    pub gp_fraction: f64,
    /// Kernel-bank phase: train or finetune.
    #[arg(long, default_value = "train")]
    pub phase: String,
    /// Output path; '-' writes to stdout.
    #[arg(long, default_value = "-")]
    pub out: String,
}

pub fn run(args: GenerateArgs) -> anyhow::Result<()> {
    let phase = match args.phase.as_str() {
        "train" => Phase::Train,
        "finetune" => Phase::Finetune,
        other => {
            return Err(crate::errjson::UsageError::new(
                format!("unknown phase '{other}' (expected train|finetune)"),
                &["phase"],
            ))
        }
    };
    let freq: Option<Frequency> = match &args.freq {
        Some(s) => Some(s.parse()?),
        None => None,
    };
    let cfg = PriorConfig::default();
    let stream = SampleStream::new(args.seed);

    let mut lines: Vec<u8> = Vec::new();
    for index in 0..args.count {
        let mut rng = stream.rng_for(index);
        let (series, kind) = match freq {
            Some(f) => {
                sample_training_series(&cfg, args.gp_fraction, phase, f, args.length, &mut rng)?
            }
            None => {
                sample_training_series_auto(&cfg, args.gp_fraction, phase, args.length, &mut rng)?
            }
        };
        let record = SeriesRecord::from_series(
            &series,
            Some(Provenance {
                prior: kind.as_str().to_string(),
                seed: args.seed,
                index,
            }),
        );
        serde_json::to_writer(&mut lines, &record)?;
        lines.push(b'\n');
    }

    if args.out == "-" {
        std::io::stdout().write_all(&lines)?;
    } else {
        fs::write(PathBuf::from(&args.out), lines)?;
    }
    Ok(())
}
