//! `zerocast bench`: inference wall time across modes, batch sizes and
//! prediction lengths. One warmup run per cell is excluded; the reported
//! value is the median of the timed repeats.

use clap::Args;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;
use zerocast_core::inference::{ForecastMode, ForecastRequest, Forecaster};
use zerocast_core::priors::{sample_training_series_auto, Phase, PriorConfig};
use zerocast_core::rng::SampleStream;
use zerocast_core::TimeSeries;

#[derive(Args)]
pub struct BenchArgs {
    /// Trained checkpoint to time.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Pool of synthetic series to draw contexts from.
    #[arg(long, default_value_t = 2048)]
    pub n_series: usize,
    /// Context length fed to the model.
    #[arg(long, default_value_t = 512)]
    pub context: usize,
    /// Comma-separated prediction lengths to sweep.
    #[arg(long, default_value = "16,32,64,128")]
    pub horizons: String,
    /// Comma-separated batch sizes to sweep.
    #[arg(long, default_value = "1,8")]
    pub batches: String,
    /// Comma-separated modes: multipoint, autoregressive.
    #[arg(long, default_value = "multipoint,autoregressive")]
    pub modes: String,
    /// Timed repeats per cell (median reported).
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path; '-' writes to stdout.
    #[arg(long, default_value = "-")]
    pub out: String,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> anyhow::Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<T>()
                .map_err(|_| anyhow::anyhow!("bad {what} entry '{p}'"))
        })
        .collect()
}

/// Median wall time of forecasting `batch` series, over `repeats` runs.
pub fn time_cell(
    forecaster: &Forecaster,
    pool: &[TimeSeries],
    mode: ForecastMode,
    batch: usize,
    horizon: usize,
    context_cap: usize,
    repeats: usize,
) -> anyhow::Result<f64> {
    let req = ForecastRequest {
        horizon,
        mode,
        context_cap,
        seed: 0,
    };
    let run = |offset: usize| -> anyhow::Result<f64> {
        let started = Instant::now();
        for lane in 0..batch {
            let series = &pool[(offset + lane) % pool.len()];
            forecaster.forecast(series, &req)?;
        }
        Ok(started.elapsed().as_secs_f64() * 1e3)
    };
    run(0)?; // warmup, excluded
    let mut times = Vec::with_capacity(repeats);
    for r in 0..repeats.max(1) {
        times.push(run(r * batch)?);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

/// Synthetic context pool for the sweeps.
pub fn build_pool(n_series: usize, context: usize, seed: u64) -> anyhow::Result<Vec<TimeSeries>> {
    let cfg = PriorConfig::default();
    let stream = SampleStream::new(seed).derive("bench-pool");
    let mut pool = Vec::with_capacity(n_series);
    for i in 0..n_series {
        let mut rng = stream.rng_for(i as u64);
        let (series, _) =
            sample_training_series_auto(&cfg, 1.0, Phase::Train, context, &mut rng)?;
        pool.push(series);
    }
    Ok(pool)
}

pub fn run(args: BenchArgs) -> anyhow::Result<()> {
    let (ckpt, _) = super::load_checkpoint(args.checkpoint.as_deref())?;
    let forecaster = Forecaster::new(ckpt.model, ckpt.config)?;

    let horizons: Vec<usize> = parse_list(&args.horizons, "horizon")?;
    let batches: Vec<usize> = parse_list(&args.batches, "batch")?;
    let mode_names: Vec<String> = parse_list(&args.modes, "mode")?;

    // The pool only needs to cover the largest batch's repeats.
    let pool_size = args
        .n_series
        .min(batches.iter().max().copied().unwrap_or(1) * args.repeats.max(1) * 2)
        .max(1);
    let pool = build_pool(pool_size, args.context, args.seed)?;

    let mut csv = Vec::new();
    writeln!(csv, "mode,batch,horizon,wall_ms")?;
    for mode_name in &mode_names {
        let mode: ForecastMode = mode_name.parse()?;
        for &batch in &batches {
            for &horizon in &horizons {
                let ms = time_cell(
                    &forecaster,
                    &pool,
                    mode,
                    batch,
                    horizon,
                    args.context,
                    args.repeats,
                )?;
                writeln!(csv, "{},{},{},{:.3}", mode.as_str(), batch, horizon, ms)?;
                eprintln!(
                    "{} batch={batch} horizon={horizon}: {ms:.1} ms",
                    mode.as_str()
                );
            }
        }
    }

    if args.out == "-" {
        std::io::stdout().write_all(&csv)?;
    } else {
        fs::write(PathBuf::from(&args.out), csv)?;
    }
    Ok(())
}
