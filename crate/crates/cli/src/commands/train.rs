//! `zerocast train`: run the training loop, writing a checkpoint and a
//! metrics CSV (`round,loss,lr,samples_per_sec`).

use crate::errjson::UsageError;
use clap::Args;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use zerocast_core::network::checkpoint::Checkpoint;
use zerocast_core::network::ModelConfig;
use zerocast_core::priors::PriorConfig;
use zerocast_core::training::{heldout_mse, TrainConfig, Trainer};
use zerocast_core::SampleStream;

#[derive(Args)]
pub struct TrainArgs {
    /// Size preset: desk or paper.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    /// JSON file overriding the training configuration (fields mirror the
    /// preset's).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON file overriding the model configuration.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics CSV output path.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Also write the checkpoint every N rounds (0 = only at the end).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
    /// Resume from an existing checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Data-generation workers; 1 is the fully deterministic mode.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Progress line to stderr every N rounds (0 = quiet).
    #[arg(long, default_value_t = 100)]
    pub progress_every: u64,
    /// Skip the held-out evaluation summary after training.
    #[arg(long, default_value_t = false)]
    pub no_heldout: bool,
}

pub fn run(args: TrainArgs) -> anyhow::Result<()> {
    let (mut train_cfg, model_cfg) = match args.preset.as_str() {
        "desk" => (TrainConfig::desk(), ModelConfig::desk()),
        "paper" => (TrainConfig::paper(), ModelConfig::paper()),
        other => {
            return Err(UsageError::new(
                format!("unknown preset '{other}' (expected desk|paper)"),
                &["preset"],
            ))
        }
    };
    if let Some(path) = &args.config {
        train_cfg = serde_json::from_str(&fs::read_to_string(path)?)?;
    }
    let model_cfg: ModelConfig = match &args.model_config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => model_cfg,
    };
    train_cfg.workers = args.workers;
    if let Err(e) = train_cfg.validate() {
        return Err(UsageError::new(format!("{e}"), &["config"]));
    }

    let priors = PriorConfig::default();
    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            Trainer::resume(ckpt, train_cfg, priors.clone())?
        }
        None => Trainer::new(model_cfg, train_cfg, priors.clone(), args.seed)?,
    };

    let mut metrics: Option<fs::File> = match &args.metrics {
        Some(path) => {
            let mut f = fs::File::create(path)?;
            writeln!(f, "round,loss,lr,samples_per_sec")?;
            Some(f)
        }
        None => None,
    };

    let total = trainer.config.rounds;
    while trainer.round < total {
        let log = match trainer.round_step() {
            Ok(log) => log,
            Err(e) => {
                // Keep the failing state inspectable.
                let diag = args.out.with_extension("diag.ckpt");
                trainer.checkpoint().save(&diag)?;
                eprintln!("aborting; diagnostic checkpoint at {}", diag.display());
                return Err(e.into());
            }
        };
        if let Some(f) = metrics.as_mut() {
            writeln!(
                f,
                "{},{},{},{}",
                log.round, log.loss, log.lr, log.samples_per_sec
            )?;
        }
        if args.progress_every > 0 && log.round % args.progress_every == 0 {
            eprintln!(
                "round {:>7}/{}  loss {:.6}  lr {:.3e}  {:.1} samples/s  phase {:?}",
                log.round, total, log.loss, log.lr, log.samples_per_sec, log.phase
            );
        }
        if args.checkpoint_every > 0 && trainer.round % args.checkpoint_every == 0 {
            trainer.checkpoint().save(&args.out)?;
        }
    }
    trainer.checkpoint().save(&args.out)?;

    if !args.no_heldout {
        let stream = SampleStream::new(trainer.stream.seed());
        let (model_mse, naive_mse) = heldout_mse(
            &trainer.params,
            &trainer.model_config,
            &priors,
            &trainer.config,
            &stream,
            128,
        )?;
        eprintln!(
            "held-out synthetic MSE: model {model_mse:.6}, last-value naive {naive_mse:.6}, ratio {:.3}",
            model_mse / naive_mse
        );
    }
    eprintln!("checkpoint written to {}", args.out.display());
    Ok(())
}
