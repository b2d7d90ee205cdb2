//! Prior-driven training: instance sampling, the MSE objective on target
//! positions, reverse-mode gradients and the optimization loop.

pub mod adamw;

pub use adamw::{lr_at, OptimizerState};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::network::checkpoint::{Checkpoint, TrainState};
use crate::network::{
    forward, tokens_from_parts, BoundParams, ModelConfig, ModelParams, ScalerParams, TargetKind,
    TokenInputs, TokenRecord,
};
use crate::priors::{sample_training_series_auto, Phase, PriorConfig, PriorKind};
use crate::real::Real;
use crate::rng::SampleStream;
use indexmap::IndexMap;
use ndarray::{Array1, ArrayD};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Sequence lengths are sampled uniformly from this inclusive range.
pub const SEQ_LEN_RANGE: (usize, usize) = (30, 512);
/// Prediction lengths are sampled uniformly from this inclusive range.
pub const PRED_LEN_RANGE: (usize, usize) = (10, 60);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub rounds: u64,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub finetune_lr: f64,
    /// Round at which the kernel bank switches to the fine-tune weights;
    /// equal to `rounds` disables the fine-tune phase.
    pub switch_round: u64,
    pub middle_prob: f64,
    pub gp_fraction: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Reserved; the cumulative-mean target task is not implemented.
    pub cum_mean_task: bool,
    pub workers: usize,
}

impl TrainConfig {
    pub fn paper() -> Self {
        TrainConfig {
            rounds: 420_000,
            batch_size: 64,
            lr_start: 1e-5,
            lr_end: 1e-7,
            finetune_lr: 1e-6,
            switch_round: 360_000,
            middle_prob: 0.5,
            gp_fraction: 0.7,
            weight_decay: 0.01,
            grad_clip: 1.0,
            cum_mean_task: false,
            workers: 1,
        }
    }

    /// 5K rounds of batch 16 with a GP-heavy mix; minutes on a CPU.
    pub fn desk() -> Self {
        TrainConfig {
            rounds: 5_000,
            batch_size: 16,
            lr_start: 2e-3,
            lr_end: 1e-4,
            finetune_lr: 2e-4,
            switch_round: 4_500,
            middle_prob: 0.5,
            gp_fraction: 0.8,
            weight_decay: 0.001,
            grad_clip: 1.0,
            cum_mean_task: false,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.rounds == 0 {
            bad.push("rounds must be >= 1");
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be >= 1");
        }
        if self.lr_start <= 0.0 || self.lr_end <= 0.0 || self.finetune_lr <= 0.0 {
            bad.push("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.middle_prob) {
            bad.push("middle_prob must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gp_fraction) {
            bad.push("gp_fraction must be in [0, 1]");
        }
        if self.switch_round > self.rounds {
            bad.push("switch_round must not exceed rounds");
        }
        if self.cum_mean_task {
            bad.push("cum_mean_task is reserved and must be false");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::config(bad.join("; ")))
        }
    }

    pub fn phase_at(&self, round: u64) -> Phase {
        if self.switch_round < self.rounds && round >= self.switch_round {
            Phase::Finetune
        } else {
            Phase::Train
        }
    }

    pub fn lr_at(&self, round: u64) -> f64 {
        lr_at(
            round,
            self.rounds,
            self.switch_round,
            self.lr_start,
            self.lr_end,
            self.finetune_lr,
        )
    }
}

/// One training example: a token sequence with a contiguous target span
/// (suffix in standard mode, interior chunk in middle mode).
#[derive(Debug, Clone)]
pub struct TrainingInstance {
    pub tokens: Vec<TokenRecord>,
    pub target_positions: Vec<usize>,
    /// Scaled-space values the model should predict.
    pub target_values: Vec<f64>,
    pub scaler: ScalerParams,
    pub middle_mode: bool,
    pub prior: PriorKind,
    pub seq_len: usize,
    pub horizon: usize,
}

/// Shape of one training instance, drawn before the series itself so the
/// length and target-placement statistics can be audited cheaply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceLayout {
    pub seq_len: usize,
    pub horizon: usize,
    pub middle_mode: bool,
    /// First target position.
    pub start_pos: usize,
}

impl InstanceLayout {
    pub fn sample<R: Rng>(cfg: &TrainConfig, rng: &mut R) -> Self {
        let seq_len = rng.gen_range(SEQ_LEN_RANGE.0..=SEQ_LEN_RANGE.1);
        let horizon = rng.gen_range(PRED_LEN_RANGE.0..=PRED_LEN_RANGE.1);
        let middle_mode = rng.gen_range(0.0..1.0) < cfg.middle_prob;
        let start_pos = if middle_mode {
            // Observed tokens must continue after the chunk.
            rng.gen_range(1..seq_len)
        } else {
            seq_len
        };
        InstanceLayout {
            seq_len,
            horizon,
            middle_mode,
            start_pos,
        }
    }

    pub fn total_len(&self) -> usize {
        self.seq_len + self.horizon
    }
}

/// Sample one instance: series of length `L + H` from the prior mix, `H`
/// target positions forming either the suffix or (with `middle_prob`) a
/// chunk strictly inside the observed span, value channels zeroed at
/// targets, loss targets scaled by the observation scaler.
pub fn make_instance<R: Rng>(
    priors: &PriorConfig,
    cfg: &TrainConfig,
    phase: Phase,
    rng: &mut R,
) -> Result<TrainingInstance> {
    let layout = InstanceLayout::sample(cfg, rng);
    let (seq_len, horizon) = (layout.seq_len, layout.horizon);
    let total = layout.total_len();
    let (middle_mode, start_pos) = (layout.middle_mode, layout.start_pos);

    let (series, prior) =
        sample_training_series_auto(priors, cfg.gp_fraction, phase, total, rng)?;

    let mut target_mask = vec![false; total];
    for i in start_pos..start_pos + horizon {
        target_mask[i] = true;
    }

    let observed: Vec<f64> = series
        .values
        .iter()
        .zip(target_mask.iter())
        .filter(|(_, m)| !**m)
        .map(|(v, _)| *v)
        .collect();
    let scaler = ScalerParams::fit(&observed)?;
    let scaled: Vec<f64> = series.values.iter().map(|v| scaler.apply(*v)).collect();

    let grid = series.grid();
    let tokens = tokens_from_parts(&grid, &scaled, &target_mask, TargetKind::Point);
    let target_positions: Vec<usize> = (start_pos..start_pos + horizon).collect();
    let target_values: Vec<f64> = target_positions.iter().map(|i| scaled[*i]).collect();

    Ok(TrainingInstance {
        tokens,
        target_positions,
        target_values,
        scaler,
        middle_mode,
        prior,
        seq_len,
        horizon,
    })
}

/// Mean squared error over the target positions.
pub fn mse_loss(predictions_at_targets: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(predictions_at_targets.len(), targets.len());
    assert!(!targets.is_empty());
    predictions_at_targets
        .iter()
        .zip(targets.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / targets.len() as f64
}

/// Forward + reverse over one instance: the loss and exact gradients for
/// every parameter.
pub fn loss_and_grads<F: Real>(
    params: &ModelParams<F>,
    config: &ModelConfig,
    instance: &TrainingInstance,
) -> Result<(f64, IndexMap<String, ArrayD<F>>)> {
    let inputs = TokenInputs::<F>::from_records(&instance.tokens);
    let targets = Array1::from_iter(instance.target_values.iter().map(|v| F::of(*v)));

    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params);
    let preds = forward(&mut tape, &bound, config, &inputs);
    let picked = tape.gather_rows(preds, &instance.target_positions);
    let loss = tape.mse_against(picked, &targets);
    let loss_value = tape.scalar(loss).as_f64();
    if !loss_value.is_finite() {
        return Err(Error::NonFinite(format!("training loss = {loss_value}")));
    }

    let mut store = tape.backward(loss);
    let grads = bound.gradients(&mut store, params);
    for (name, g) in &grads {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of '{name}'")));
        }
    }
    Ok((loss_value, grads))
}

fn add_grads<F: Real>(acc: &mut IndexMap<String, ArrayD<F>>, g: &IndexMap<String, ArrayD<F>>) {
    for (name, arr) in g {
        match acc.get_mut(name) {
            Some(a) => *a += arr,
            None => {
                acc.insert(name.clone(), arr.clone());
            }
        }
    }
}

fn scale_grads<F: Real>(acc: &mut IndexMap<String, ArrayD<F>>, s: F) {
    for arr in acc.values_mut() {
        arr.mapv_inplace(|v| v * s);
    }
}

/// Clip to a global L2 norm; returns the pre-clip norm.
pub fn clip_global_norm<F: Real>(grads: &mut IndexMap<String, ArrayD<F>>, max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for arr in grads.values() {
        for v in arr.iter() {
            let x = v.as_f64();
            sq += x * x;
        }
    }
    let norm = sq.sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = F::of(max_norm / norm);
        scale_grads(grads, s);
    }
    norm
}

/// Per-round telemetry.
#[derive(Debug, Clone, Copy)]
pub struct RoundLog {
    pub round: u64,
    pub loss: f64,
    pub lr: f64,
    pub samples_per_sec: f64,
    pub grad_norm: f64,
    pub phase: Phase,
}

/// The training loop: owns parameters, optimizer state and the sample
/// cursor. Sample index `round * batch_size + lane` keys every draw, so no
/// index is ever consumed twice and a resumed run replays identically.
pub struct Trainer {
    pub model_config: ModelConfig,
    pub config: TrainConfig,
    pub priors: PriorConfig,
    pub params: ModelParams<f32>,
    pub opt: OptimizerState<f32>,
    pub stream: SampleStream,
    pub round: u64,
}

impl Trainer {
    pub fn new(
        model_config: ModelConfig,
        config: TrainConfig,
        priors: PriorConfig,
        seed: u64,
    ) -> Result<Self> {
        model_config.validate()?;
        config.validate()?;
        priors.gp.validate()?;
        let stream = SampleStream::new(seed);
        let mut init_rng = stream.derive("param-init").rng_for(0);
        let params = ModelParams::<f32>::init(&model_config, &mut init_rng);
        let opt = OptimizerState::new(&params, config.weight_decay);
        Ok(Trainer {
            model_config,
            config,
            priors,
            params,
            opt,
            stream,
            round: 0,
        })
    }

    /// Continue from a checkpoint. The optimizer moments and the sample
    /// cursor come from the file, so the continuation is bit-exact.
    pub fn resume(ckpt: Checkpoint, config: TrainConfig, priors: PriorConfig) -> Result<Self> {
        let state = ckpt
            .train_state
            .ok_or_else(|| Error::Checkpoint("checkpoint has no training state".into()))?;
        let mut opt = OptimizerState::new(&ckpt.model, config.weight_decay);
        opt.step = state.opt_step;
        for (name, arr) in &ckpt.optimizer {
            if let Some(param) = name.strip_prefix("opt.m.") {
                opt.m.insert(param.to_string(), arr.clone());
            } else if let Some(param) = name.strip_prefix("opt.v.") {
                opt.v.insert(param.to_string(), arr.clone());
            }
        }
        Ok(Trainer {
            model_config: ckpt.config,
            config,
            priors,
            params: ckpt.model,
            opt,
            stream: SampleStream::at(ckpt.seed, state.next_sample_index),
            round: state.round,
        })
    }

    pub fn sample_index(&self, round: u64, lane: usize) -> u64 {
        round * self.config.batch_size as u64 + lane as u64
    }

    /// One batch: generate instances, average gradients in lane order,
    /// clip, step.
    pub fn round_step(&mut self) -> Result<RoundLog> {
        let round = self.round;
        let phase = self.config.phase_at(round);
        let lr = self.config.lr_at(round);
        let batch = self.config.batch_size;
        let started = Instant::now();

        let lane_result = |lane: usize| -> Result<(f64, IndexMap<String, ArrayD<f32>>)> {
            let idx = self.sample_index(round, lane);
            let mut rng = self.stream.rng_for(idx);
            let instance = make_instance(&self.priors, &self.config, phase, &mut rng)?;
            loss_and_grads(&self.params, &self.model_config, &instance)
        };

        let results: Vec<Result<(f64, IndexMap<String, ArrayD<f32>>)>> =
            if self.config.workers > 1 {
                (0..batch).into_par_iter().map(lane_result).collect()
            } else {
                (0..batch).map(lane_result).collect()
            };

        let mut acc: IndexMap<String, ArrayD<f32>> = IndexMap::new();
        let mut loss_sum = 0.0;
        for r in results {
            let (loss, grads) = r?;
            loss_sum += loss;
            add_grads(&mut acc, &grads);
        }
        let loss = loss_sum / batch as f64;
        scale_grads(&mut acc, 1.0f32 / batch as f32);
        let grad_norm = clip_global_norm(&mut acc, self.config.grad_clip);
        self.opt.apply(&mut self.params, &acc, lr)?;

        self.round += 1;
        self.stream = SampleStream::at(
            self.stream.seed(),
            self.sample_index(self.round, 0),
        );
        let elapsed = started.elapsed().as_secs_f64().max(1e-9);
        Ok(RoundLog {
            round,
            loss,
            lr,
            samples_per_sec: batch as f64 / elapsed,
            grad_norm,
            phase,
        })
    }

    /// Run until `self.config.rounds`, reporting each round. A non-finite
    /// loss or gradient aborts with the error; the caller still owns the
    /// current parameters for a diagnostic checkpoint.
    pub fn run(&mut self, mut on_round: impl FnMut(&RoundLog)) -> Result<()> {
        while self.round < self.config.rounds {
            let log = self.round_step()?;
            on_round(&log);
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut optimizer = IndexMap::new();
        for (name, arr) in &self.opt.m {
            optimizer.insert(format!("opt.m.{name}"), arr.clone());
        }
        for (name, arr) in &self.opt.v {
            optimizer.insert(format!("opt.v.{name}"), arr.clone());
        }
        Checkpoint {
            config: self.model_config.clone(),
            seed: self.stream.seed(),
            model: self.params.clone(),
            optimizer,
            train_state: Some(TrainState {
                round: self.round,
                opt_step: self.opt.step,
                next_sample_index: self.stream.next_index(),
            }),
        }
    }
}

/// Held-out evaluation: fresh suffix-target instances from a derived
/// stream; reports scaled-space MSE for the model and for a repeat-last-
/// observation baseline.
pub fn heldout_mse(
    params: &ModelParams<f32>,
    model_config: &ModelConfig,
    priors: &PriorConfig,
    cfg: &TrainConfig,
    seed_stream: &SampleStream,
    n_series: usize,
) -> Result<(f64, f64)> {
    let stream = seed_stream.derive("heldout");
    let no_middle = TrainConfig {
        middle_prob: 0.0,
        ..cfg.clone()
    };
    let mut model_sq = 0.0;
    let mut naive_sq = 0.0;
    let mut count = 0usize;
    for i in 0..n_series {
        let mut rng = stream.rng_for(i as u64);
        let instance = make_instance(priors, &no_middle, Phase::Train, &mut rng)?;
        let inputs = TokenInputs::<f32>::from_records(&instance.tokens);
        let preds = crate::network::predict(params, model_config, &inputs)?;
        let last_obs = instance.tokens[instance.target_positions[0] - 1].value;
        for (pos, target) in instance
            .target_positions
            .iter()
            .zip(instance.target_values.iter())
        {
            let p = f64::from(preds[*pos]);
            model_sq += (p - target) * (p - target);
            naive_sq += (last_obs - target) * (last_obs - target);
            count += 1;
        }
    }
    Ok((model_sq / count as f64, naive_sq / count as f64))
}
