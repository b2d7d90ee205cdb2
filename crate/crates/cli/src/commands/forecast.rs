//! `zerocast forecast`: read series JSONL, forecast each with a checkpoint.

use clap::Args;
use serde::Serialize;
use std::fs;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use zerocast_core::inference::{ForecastMode, ForecastRequest, Forecaster};
use zerocast_core::network::ModelParams;
use zerocast_core::series::read_jsonl;
use zerocast_core::timefeatures::Frequency;

#[derive(Args)]
pub struct ForecastArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Input series JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Number of future points per series.
    #[arg(long)]
    pub horizon: usize,
    /// multipoint | autoregressive | ensemble
    #[arg(long, default_value = "multipoint")]
    pub mode: String,
    /// Only the most recent N observations are used.
    #[arg(long, default_value_t = 512)]
    pub context_cap: usize,
    /// Seed for the ensemble dropout masks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; '-' writes to stdout.
    #[arg(long, default_value = "-")]
    pub out: String,
}

#[derive(Serialize)]
struct ForecastRecord {
    start: String,
    freq: Frequency,
    target: Vec<f64>,
    mode: String,
    checkpoint_sha256: String,
    elapsed_ms: f64,
}

pub fn run(args: ForecastArgs) -> anyhow::Result<()> {
    let mode: ForecastMode = args.mode.parse()?;
    let (ckpt, hash) = super::load_checkpoint(args.checkpoint.as_deref())?;
    let params: ModelParams<f32> = ckpt.model;
    let forecaster = Forecaster::new(params, ckpt.config)?;

    let file = fs::File::open(&args.input)?;
    let records = read_jsonl(BufReader::new(file))?;

    let mut out_lines: Vec<u8> = Vec::new();
    for rec in &records {
        let series = rec.to_series()?;
        let fc = forecaster.forecast(
            &series,
            &ForecastRequest {
                horizon: args.horizon,
                mode,
                context_cap: args.context_cap,
                seed: args.seed,
            },
        )?;
        for note in &fc.notes {
            eprintln!("note: {note}");
        }
        let out_rec = ForecastRecord {
            start: fc.timestamps[0].format("%Y-%m-%dT%H:%M:%S").to_string(),
            freq: series.freq,
            target: fc.values,
            mode: mode.as_str().to_string(),
            checkpoint_sha256: hash.clone(),
            elapsed_ms: fc.elapsed.as_secs_f64() * 1e3,
        };
        serde_json::to_writer(&mut out_lines, &out_rec)?;
        out_lines.push(b'\n');
    }

    if args.out == "-" {
        std::io::stdout().write_all(&out_lines)?;
    } else {
        fs::write(PathBuf::from(&args.out), out_lines)?;
    }
    Ok(())
}
