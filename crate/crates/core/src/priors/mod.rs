//! Synthetic training-data priors.
//!
//! Two generators feed training: a composite-kernel GP prior and a
//! trend/seasonal/noise prior. A Bernoulli draw with the configured GP
//! fraction picks the generator per series; multiplicative spike and step
//! noises are applied on top with small probabilities. Every draw is a pure
//! function of `(config, seed, sample index)`.

pub mod fpfn;
pub mod gp;
pub mod kernel;
pub mod noise;

pub use fpfn::{sample_fpfn, FpfnConfig};
pub use gp::{sample_gp, MeanFn};
pub use kernel::{
    kernel_eval, sample_kernel, BaseKernel, CompositeKernel, KernelWeights, MaternNu, Phase,
};
pub use noise::{apply_spikes, apply_steps};

use crate::error::{Error, Result};
use crate::timefeatures::{FreqUnit, Frequency};
use crate::TimeSeries;
use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Jitter levels and their sampling probabilities, plus mean-function and
/// kernel-bank settings for the GP prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpConfig {
    pub train_weights: KernelWeights,
    pub finetune_weights: KernelWeights,
    pub jitter_levels: [f64; 3],
    pub jitter_probs: [f64; 3],
    /// Probability that the mean function is linear rather than zero.
    pub linear_mean_prob: f64,
    /// Linear-mean slope across the window is uniform in +- this range
    /// (shared with the trend slope range of the other prior).
    pub mean_slope_range: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            train_weights: KernelWeights::train_phase(),
            finetune_weights: KernelWeights::finetune_phase(),
            jitter_levels: [0.1, 0.01, 0.001],
            jitter_probs: [0.1, 0.2, 0.7],
            linear_mean_prob: 0.5,
            mean_slope_range: 1.0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let psum: f64 = self.jitter_probs.iter().sum();
        if (psum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("jitter probs sum to {psum}, not 1")));
        }
        if self.jitter_levels.iter().any(|l| *l <= 0.0) {
            return Err(Error::config("jitter levels must be positive"));
        }
        Ok(())
    }

    pub fn weights_for(&self, phase: Phase) -> &KernelWeights {
        match phase {
            Phase::Train => &self.train_weights,
            Phase::Finetune => &self.finetune_weights,
        }
    }

    pub fn sample_jitter<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen_range(0.0..1.0);
        let mut acc = 0.0;
        for (level, p) in self.jitter_levels.iter().zip(self.jitter_probs.iter()) {
            acc += p;
            if u < acc {
                return *level;
            }
        }
        self.jitter_levels[2]
    }
}

/// Everything the series generator needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorConfig {
    pub fpfn: FpfnConfig,
    pub gp: GpConfig,
    /// Per-series probability of the spike noise.
    pub spike_prob: f64,
    /// Per-series probability of the step noise.
    pub step_prob: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            fpfn: FpfnConfig::default(),
            gp: GpConfig::default(),
            spike_prob: 0.1,
            step_prob: 0.1,
        }
    }
}

/// Which prior produced a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Gp,
    Fpfn,
}

impl PriorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PriorKind::Gp => "gp",
            PriorKind::Fpfn => "fpfn",
        }
    }
}

/// Frequencies the full mix can draw (the trend/seasonal prior only knows a
/// subset; see [`fpfn::granularity_periods`]).
pub const GP_FREQUENCIES: [Frequency; 7] = [
    Frequency::minutely(),
    Frequency::hourly(),
    Frequency::daily(),
    Frequency::business_daily(),
    Frequency::weekly(),
    Frequency::monthly(),
    Frequency::quarterly(),
];

pub const FPFN_FREQUENCIES: [Frequency; 4] = [
    Frequency::minutely(),
    Frequency::hourly(),
    Frequency::daily(),
    Frequency::monthly(),
];

/// A random start timestamp aligned to whole units of the frequency.
pub fn sample_start<R: Rng>(freq: Frequency, rng: &mut R) -> chrono::NaiveDateTime {
    let year = rng.gen_range(2000..2024);
    let month = rng.gen_range(1..=12u32);
    let day = rng.gen_range(1..=28u32);
    let date = NaiveDate::from_ymd_opt(year, month, day).expect("valid date");
    let (hour, minute) = match freq.unit {
        FreqUnit::Minutely => (rng.gen_range(0..24u32), rng.gen_range(0..60u32)),
        FreqUnit::Hourly => (rng.gen_range(0..24u32), 0),
        _ => (0, 0),
    };
    date.and_hms_opt(hour, minute, 0).expect("valid time")
}

/// Draw one training series of length `n` at frequency `freq`:
/// Bernoulli(`gp_fraction`) picks the prior, then the configured signal
/// noises apply with their per-series probabilities.
///
/// If the Bernoulli draw lands on the trend/seasonal prior and `freq` has
/// no seasonal periodicity table, the config error propagates; callers that
/// mix arbitrary frequencies should use
/// [`sample_training_series_auto`] instead.
pub fn sample_training_series<R: Rng>(
    cfg: &PriorConfig,
    gp_fraction: f64,
    phase: Phase,
    freq: Frequency,
    n: usize,
    rng: &mut R,
) -> Result<(TimeSeries, PriorKind)> {
    let kind = if rng.gen_range(0.0..1.0) < gp_fraction {
        PriorKind::Gp
    } else {
        PriorKind::Fpfn
    };
    generate_with_kind(cfg, kind, phase, freq, n, rng)
}

/// Like [`sample_training_series`], but the frequency is drawn here,
/// uniformly from the set the chosen prior supports.
pub fn sample_training_series_auto<R: Rng>(
    cfg: &PriorConfig,
    gp_fraction: f64,
    phase: Phase,
    n: usize,
    rng: &mut R,
) -> Result<(TimeSeries, PriorKind)> {
    let kind = if rng.gen_range(0.0..1.0) < gp_fraction {
        PriorKind::Gp
    } else {
        PriorKind::Fpfn
    };
    let freq = match kind {
        PriorKind::Gp => GP_FREQUENCIES[rng.gen_range(0..GP_FREQUENCIES.len())],
        PriorKind::Fpfn => FPFN_FREQUENCIES[rng.gen_range(0..FPFN_FREQUENCIES.len())],
    };
    generate_with_kind(cfg, kind, phase, freq, n, rng)
}

fn generate_with_kind<R: Rng>(
    cfg: &PriorConfig,
    kind: PriorKind,
    phase: Phase,
    freq: Frequency,
    n: usize,
    rng: &mut R,
) -> Result<(TimeSeries, PriorKind)> {
    let start = sample_start(freq, rng);
    let mut values = match kind {
        PriorKind::Gp => {
            let weights = cfg.gp.weights_for(phase);
            let kernel = sample_kernel(weights, rng);
            let jitter = cfg.gp.sample_jitter(rng);
            let mean = if rng.gen_range(0.0..1.0) < cfg.gp.linear_mean_prob {
                MeanFn::Linear {
                    intercept: rng.gen_range(-1.0..1.0),
                    slope: rng.gen_range(-cfg.gp.mean_slope_range..cfg.gp.mean_slope_range),
                }
            } else {
                MeanFn::Zero
            };
            sample_gp(&kernel, mean, jitter, n, rng)?
        }
        PriorKind::Fpfn => sample_fpfn(&cfg.fpfn, freq, n, rng)?,
    };

    if rng.gen_range(0.0..1.0) < cfg.spike_prob {
        let interval = rng.gen_range(4..=24.min(n.max(5) - 1).max(4));
        let window = rng.gen_range(3..=8);
        apply_spikes(&mut values, interval, window, rng);
    }
    if rng.gen_range(0.0..1.0) < cfg.step_prob {
        apply_steps(&mut values, rng);
    }

    let series = TimeSeries::new(start, freq, values)?;
    Ok((series, kind))
}
