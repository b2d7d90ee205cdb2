//! Trend x seasonal x noise prior.
//!
//! Series decompose as `(a + b t) * (1 + seasonal) * weibull_noise`. Trends
//! are linear only. Seasonality is a sum of sine harmonics drawn for the
//! series' own granularity and the immediately coarser one (8 and 5
//! harmonics respectively); harmonic `k` runs at period `p / k`. The
//! multiplicative Weibull noise factor is constructed to have unit mean.

use crate::error::{Error, Result};
use crate::timefeatures::{FreqUnit, Frequency};
use rand::Rng;
use rand_distr::{Distribution, Weibull};
use serde::{Deserialize, Serialize};

/// Harmonic counts: own granularity, then the next coarser one.
pub const HARMONICS_OWN: usize = 8;
pub const HARMONICS_COARSER: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FpfnConfig {
    /// Total rise/fall of the linear trend across the window is uniform in
    /// `[-trend_slope_range, trend_slope_range]`.
    pub trend_slope_range: f64,
    /// Per-granularity seasonal amplitude is uniform in `[0, max]`.
    pub seasonal_amplitude_max: f64,
    /// Weibull shape is uniform in this range.
    pub noise_shape_range: (f64, f64),
    /// Noise strength sigma is uniform in `[0, max]`; 0 disables noise.
    pub noise_scale_max: f64,
}

impl Default for FpfnConfig {
    fn default() -> Self {
        FpfnConfig {
            trend_slope_range: 1.0,
            seasonal_amplitude_max: 0.6,
            noise_shape_range: (0.5, 3.0),
            noise_scale_max: 0.2,
        }
    }
}

/// Base periodicities, in samples, of the granularities the prior knows.
/// The paired value is the immediately coarser cycle expressed in samples
/// of the own granularity (none above monthly).
pub fn granularity_periods(freq: Frequency) -> Result<(f64, Option<f64>)> {
    match freq.unit {
        FreqUnit::Minutely => Ok((60.0, Some(60.0 * 24.0))),
        FreqUnit::Hourly => Ok((24.0, Some(24.0 * 7.0))),
        FreqUnit::Daily => Ok((7.0, Some(365.25))),
        FreqUnit::Monthly if freq.multiplier == 1 => Ok((12.0, None)),
        _ => Err(Error::config(format!(
            "frequency {freq} has no seasonal periodicity table"
        ))),
    }
}

/// Mean of a Weibull(shape, 1) variable: Gamma(1 + 1/shape).
///
/// Lanczos approximation (g = 7, n = 9), good to ~1e-13 over the shapes
/// this prior draws.
fn gamma_fn(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_31e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

/// One multiplicative noise factor `1 + sigma (w - E[w])`, unit mean by
/// construction.
pub fn weibull_noise_factor<R: Rng>(shape: f64, sigma: f64, rng: &mut R) -> f64 {
    let w: f64 = Weibull::new(1.0, shape).expect("valid shape").sample(rng);
    let expected = gamma_fn(1.0 + 1.0 / shape);
    1.0 + sigma * (w - expected)
}

struct Harmonic {
    amplitude: f64,
    period: f64,
    phase: f64,
}

fn sample_harmonics<R: Rng>(
    count: usize,
    base_period: f64,
    amplitude: f64,
    rng: &mut R,
) -> Vec<Harmonic> {
    (1..=count)
        .map(|k| Harmonic {
            amplitude: amplitude * rng.gen_range(-1.0..1.0) / count as f64,
            period: base_period / k as f64,
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        })
        .collect()
}

/// Draw one series of length `n` from the prior. Zeroed amplitude or noise
/// bounds degrade gracefully to pure-trend output.
pub fn sample_fpfn<R: Rng>(
    cfg: &FpfnConfig,
    freq: Frequency,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::input("series length must be >= 1"));
    }
    let (own_p, coarser_p) = granularity_periods(freq)?;

    let intercept = rng.gen_range(0.5..2.0);
    let total_slope = rng.gen_range(-cfg.trend_slope_range..cfg.trend_slope_range);
    let slope = total_slope / n as f64;

    let sample_amp = |rng: &mut R| {
        if cfg.seasonal_amplitude_max > 0.0 {
            rng.gen_range(0.0..cfg.seasonal_amplitude_max)
        } else {
            0.0
        }
    };
    let amp_own = sample_amp(rng);
    let mut harmonics = sample_harmonics(HARMONICS_OWN, own_p, amp_own, rng);
    if let Some(p) = coarser_p {
        let amp_coarse = sample_amp(rng);
        harmonics.extend(sample_harmonics(HARMONICS_COARSER, p, amp_coarse, rng));
    }

    let noise_shape = rng.gen_range(cfg.noise_shape_range.0..cfg.noise_shape_range.1);
    let noise_sigma = if cfg.noise_scale_max > 0.0 {
        rng.gen_range(0.0..cfg.noise_scale_max)
    } else {
        0.0
    };

    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let tf = t as f64;
        let trend = intercept + slope * tf;
        let seasonal: f64 = harmonics
            .iter()
            .map(|h| h.amplitude * (std::f64::consts::TAU * tf / h.period + h.phase).sin())
            .sum();
        let noise = if noise_sigma > 0.0 {
            weibull_noise_factor(noise_shape, noise_sigma, rng)
        } else {
            1.0
        };
        out.push(trend * (1.0 + seasonal) * noise);
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::generation("fpfn draw produced non-finite values"));
    }
    Ok(out)
}
