//! `zerocast eval`: benchmark forecasters over datasets with seasonal MASE.

use crate::errjson::UsageError;
use clap::Args;
use std::fs;
use std::path::PathBuf;
use zerocast_core::evalharness::{
    aggregate, load_datasets, load_score_csv, run_benchmark, write_plot_csv, ForecastModel,
    NetworkModel, SeasonalNaiveModel,
};
use zerocast_core::inference::{ForecastMode, Forecaster};

#[derive(Args)]
pub struct EvalArgs {
    /// Directory of dataset subdirectories (metadata.json + data.jsonl).
    #[arg(long)]
    pub datasets: PathBuf,
    /// Comma-separated model list: seasonal-naive, multipoint,
    /// autoregressive, ensemble.
    #[arg(long, default_value = "seasonal-naive")]
    pub models: String,
    /// Trained checkpoint (required for the network models).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    pub context_cap: usize,
    /// Seed for the ensemble dropout masks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Merge a published reference score CSV (dataset,model,mase) into the
    /// aggregation.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Report JSON output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Plot-data CSV (dataset,model,mase,rank).
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

pub fn run(args: EvalArgs) -> anyhow::Result<()> {
    let datasets = load_datasets(&args.datasets)?;

    let model_names: Vec<&str> = args
        .models
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    if model_names.is_empty() {
        return Err(UsageError::new("no models requested", &["models"]));
    }

    let needs_network = model_names.iter().any(|m| *m != "seasonal-naive");
    let forecaster = if needs_network {
        let (ckpt, _) = super::load_checkpoint(args.checkpoint.as_deref())?;
        Some(Forecaster::new(ckpt.model, ckpt.config)?)
    } else {
        None
    };

    let naive = SeasonalNaiveModel;
    let mut network_models: Vec<NetworkModel> = Vec::new();
    for name in &model_names {
        if *name == "seasonal-naive" {
            continue;
        }
        let mode: ForecastMode = name.parse()?;
        network_models.push(NetworkModel {
            forecaster: forecaster.as_ref().expect("checked above"),
            mode,
            context_cap: args.context_cap,
            seed: args.seed,
        });
    }
    let mut models: Vec<&dyn ForecastModel> = Vec::new();
    for name in &model_names {
        if *name == "seasonal-naive" {
            models.push(&naive);
        } else {
            let mode: ForecastMode = name.parse()?;
            let nm = network_models
                .iter()
                .find(|m| m.mode == mode)
                .expect("constructed above");
            models.push(nm);
        }
    }

    let mut report = run_benchmark(&datasets, &models, args.context_cap)?;

    if let Some(path) = &args.reference {
        let mut rows = report.rows.clone();
        rows.extend(load_score_csv(&fs::read_to_string(path)?)?);
        let failures = report.failures.clone();
        report = aggregate(&rows)?;
        report.failures = failures;
    }

    fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
    if let Some(path) = &args.plot_data {
        let mut buf = Vec::new();
        write_plot_csv(&report, &mut buf)?;
        fs::write(path, buf)?;
    }

    for (model, gm) in &report.geometric_mean {
        let rank = report.mean_rank.get(model).copied().unwrap_or(f64::NAN);
        eprintln!("{model}: geometric mean MASE {gm:.4}, mean rank {rank:.2}");
    }
    for failure in &report.failures {
        eprintln!("warning: {failure}");
    }
    eprintln!("report written to {}", args.out.display());
    Ok(())
}
