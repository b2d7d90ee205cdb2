//! Forecasting modes: single-pass multipoint (default), autoregressive,
//! and a dropout ensemble.

use crate::error::{Error, Result};
use crate::network::{
    assemble_tokens, predict, ModelConfig, ModelParams, ScalerParams, TargetKind, TokenFlag,
    TokenInputs, TokenRecord,
};
use crate::rng::SampleStream;
use crate::timefeatures::{decompose, encode, make_grid};
use crate::TimeSeries;
use chrono::NaiveDateTime;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

pub const DEFAULT_CONTEXT_CAP: usize = 512;

/// Ensemble dropout rates, evenly spaced from 0 to 0.5.
pub const ENSEMBLE_DROPOUT_RATES: [f64; 5] = [0.0, 0.125, 0.25, 0.375, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMode {
    Multipoint,
    Autoregressive,
    Ensemble,
}

impl ForecastMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ForecastMode::Multipoint => "multipoint",
            ForecastMode::Autoregressive => "autoregressive",
            ForecastMode::Ensemble => "ensemble",
        }
    }
}

impl std::str::FromStr for ForecastMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multipoint" => Ok(ForecastMode::Multipoint),
            "autoregressive" => Ok(ForecastMode::Autoregressive),
            "ensemble" => Ok(ForecastMode::Ensemble),
            other => Err(Error::input(format!("unknown forecast mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForecastRequest {
    pub horizon: usize,
    pub mode: ForecastMode,
    pub context_cap: usize,
    /// Seeds the ensemble dropout masks; unused by the other modes.
    pub seed: u64,
}

impl Default for ForecastRequest {
    fn default() -> Self {
        ForecastRequest {
            horizon: 1,
            mode: ForecastMode::Multipoint,
            context_cap: DEFAULT_CONTEXT_CAP,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Forecast {
    pub timestamps: Vec<NaiveDateTime>,
    /// Point forecasts in the original scale.
    pub values: Vec<f64>,
    pub mode: ForecastMode,
    pub elapsed: Duration,
    /// Per-member forecasts (ensemble mode only).
    pub members: Vec<Vec<f64>>,
    /// Degradations applied on the way (e.g. dropout fallbacks).
    pub notes: Vec<String>,
}

/// A loaded model serving forecast requests read-only. Counts network
/// forward passes so the single-pass contract is checkable.
pub struct Forecaster {
    pub params: ModelParams<f32>,
    pub config: ModelConfig,
    forward_calls: AtomicU64,
}

impl Forecaster {
    pub fn new(params: ModelParams<f32>, config: ModelConfig) -> Result<Self> {
        params.validate_shapes(&config)?;
        Ok(Forecaster {
            params,
            config,
            forward_calls: AtomicU64::new(0),
        })
    }

    pub fn forward_calls(&self) -> u64 {
        self.forward_calls.load(Ordering::Relaxed)
    }

    fn run_forward(&self, inputs: &TokenInputs<f32>) -> Result<Vec<f32>> {
        self.forward_calls.fetch_add(1, Ordering::Relaxed);
        predict(&self.params, &self.config, inputs)
    }

    pub fn forecast(&self, series: &TimeSeries, req: &ForecastRequest) -> Result<Forecast> {
        if req.horizon == 0 {
            return Err(Error::input("horizon must be >= 1"));
        }
        if req.context_cap == 0 {
            return Err(Error::input("context cap must be >= 1"));
        }
        let started = Instant::now();
        let capped = series.tail(req.context_cap);
        let horizon_grid = make_grid(capped.next_timestamp(), capped.freq, req.horizon)?;
        let (values, members, notes) = match req.mode {
            ForecastMode::Multipoint => (self.multipoint(&capped, &horizon_grid)?, vec![], vec![]),
            ForecastMode::Autoregressive => {
                (self.autoregressive(&capped, &horizon_grid)?, vec![], vec![])
            }
            ForecastMode::Ensemble => self.ensemble(&capped, &horizon_grid, req.seed)?,
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forecast values".into()));
        }
        Ok(Forecast {
            timestamps: horizon_grid,
            values,
            mode: req.mode,
            elapsed: started.elapsed(),
            members,
            notes,
        })
    }

    /// One forward pass over context plus zero-valued target tokens.
    fn multipoint(&self, context: &TimeSeries, horizon: &[NaiveDateTime]) -> Result<Vec<f64>> {
        let (tokens, scaler) = assemble_tokens(context, horizon, TargetKind::Point)?;
        let inputs = TokenInputs::from_records(&tokens);
        let preds = self.run_forward(&inputs)?;
        let ctx_len = context.len();
        Ok(preds[ctx_len..]
            .iter()
            .map(|p| scaler.invert(f64::from(*p)))
            .collect())
    }

    /// One forward pass per horizon step, feeding each prediction back as
    /// an observed token. The scaler stays fixed to the original context.
    fn autoregressive(&self, context: &TimeSeries, horizon: &[NaiveDateTime]) -> Result<Vec<f64>> {
        let scaler = ScalerParams::fit(&context.values)?;
        let grid = context.grid();
        let mut tokens: Vec<TokenRecord> = grid
            .iter()
            .zip(context.values.iter())
            .map(|(ts, v)| TokenRecord {
                value: scaler.apply(*v),
                flag: TokenFlag::Observed,
                calendar: encode(&decompose(*ts)),
            })
            .collect();

        let mut out = Vec::with_capacity(horizon.len());
        for ts in horizon {
            tokens.push(TokenRecord {
                value: 0.0,
                flag: TokenFlag::Target(TargetKind::Point),
                calendar: encode(&decompose(*ts)),
            });
            let inputs = TokenInputs::from_records(&tokens);
            let preds = self.run_forward(&inputs)?;
            let scaled_pred = f64::from(*preds.last().expect("nonempty"));
            out.push(scaler.invert(scaled_pred));
            // Replace the target token with the prediction as an observation.
            let last = tokens.last_mut().expect("nonempty");
            last.value = scaled_pred;
            last.flag = TokenFlag::Observed;
        }
        Ok(out)
    }

    /// Five members at increasing input dropout; member forecasts are
    /// averaged pointwise. Dropout removes observed tokens before token
    /// assembly; a member that would drop the context below 2 tokens falls
    /// back to the largest feasible dropout.
    #[allow(clippy::type_complexity)]
    fn ensemble(
        &self,
        context: &TimeSeries,
        horizon: &[NaiveDateTime],
        seed: u64,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<String>)> {
        let stream = SampleStream::new(seed);
        let grid = context.grid();
        let n = context.len();
        let mut members: Vec<Vec<f64>> = Vec::with_capacity(ENSEMBLE_DROPOUT_RATES.len());
        let mut notes = Vec::new();

        for (member, rate) in ENSEMBLE_DROPOUT_RATES.iter().enumerate() {
            let mut drop = (rate * n as f64).round() as usize;
            if n.saturating_sub(drop) < 2 {
                let feasible = n.saturating_sub(2).min(n);
                notes.push(format!(
                    "member {member}: dropout {rate} infeasible on {n} tokens; dropping {feasible}"
                ));
                drop = feasible;
            }
            let keep: Vec<usize> = if drop == 0 {
                (0..n).collect()
            } else {
                let mut rng = stream.rng_for(member as u64);
                let mut indices: Vec<usize> = (0..n).collect();
                indices.shuffle(&mut rng);
                let mut kept: Vec<usize> = indices[drop..].to_vec();
                kept.sort_unstable();
                kept
            };

            let kept_values: Vec<f64> = keep.iter().map(|i| context.values[*i]).collect();
            let scaler = ScalerParams::fit(&kept_values)?;
            let mut tokens: Vec<TokenRecord> = keep
                .iter()
                .map(|i| TokenRecord {
                    value: scaler.apply(context.values[*i]),
                    flag: TokenFlag::Observed,
                    calendar: encode(&decompose(grid[*i])),
                })
                .collect();
            for ts in horizon {
                tokens.push(TokenRecord {
                    value: 0.0,
                    flag: TokenFlag::Target(TargetKind::Point),
                    calendar: encode(&decompose(*ts)),
                });
            }
            let inputs = TokenInputs::from_records(&tokens);
            let preds = self.run_forward(&inputs)?;
            let member_values: Vec<f64> = preds[keep.len()..]
                .iter()
                .map(|p| scaler.invert(f64::from(*p)))
                .collect();
            members.push(member_values);
        }

        let h = horizon.len();
        let mut mean = vec![0.0; h];
        for member in &members {
            for (m, v) in mean.iter_mut().zip(member.iter()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= members.len() as f64;
        }
        Ok((mean, members, notes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timefeatures::{parse_timestamp, Frequency};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk_forecaster(seed: u64) -> Forecaster {
        let config = ModelConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::<f32>::init(&config, &mut rng);
        Forecaster::new(params, config).unwrap()
    }

    fn sine_series(n: usize) -> TimeSeries {
        let start = parse_timestamp("2022-05-01T00:00").unwrap();
        let values: Vec<f64> = (0..n)
            .map(|i| 3.0 + (std::f64::consts::TAU * i as f64 / 24.0).sin())
            .collect();
        TimeSeries::new(start, Frequency::hourly(), values).unwrap()
    }

    #[test]
    fn multipoint_is_single_pass() {
        let f = desk_forecaster(1);
        let s = sine_series(64);
        for horizon in [1usize, 7, 24] {
            let before = f.forward_calls();
            let fc = f
                .forecast(
                    &s,
                    &ForecastRequest {
                        horizon,
                        ..Default::default()
                    },
                )
                .unwrap();
            assert_eq!(f.forward_calls() - before, 1, "horizon {horizon}");
            assert_eq!(fc.values.len(), horizon);
            assert!(fc.values.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn autoregressive_calls_forward_per_step() {
        let f = desk_forecaster(2);
        let s = sine_series(48);
        let before = f.forward_calls();
        let fc = f
            .forecast(
                &s,
                &ForecastRequest {
                    horizon: 6,
                    mode: ForecastMode::Autoregressive,
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(f.forward_calls() - before, 6);
        assert_eq!(fc.values.len(), 6);
    }

    #[test]
    fn single_step_modes_coincide() {
        let f = desk_forecaster(3);
        let s = sine_series(32);
        let mp = f
            .forecast(
                &s,
                &ForecastRequest {
                    horizon: 1,
                    ..Default::default()
                },
            )
            .unwrap();
        let ar = f
            .forecast(
                &s,
                &ForecastRequest {
                    horizon: 1,
                    mode: ForecastMode::Autoregressive,
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(mp.values[0].to_bits(), ar.values[0].to_bits());
    }

    #[test]
    fn ensemble_has_five_members_and_averages() {
        let f = desk_forecaster(4);
        let s = sine_series(40);
        let before = f.forward_calls();
        let fc = f
            .forecast(
                &s,
                &ForecastRequest {
                    horizon: 5,
                    mode: ForecastMode::Ensemble,
                    seed: 9,
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(fc.members.len(), 5);
        assert_eq!(f.forward_calls() - before, 5);
        for (i, v) in fc.values.iter().enumerate() {
            let mean: f64 = fc.members.iter().map(|m| m[i]).sum::<f64>() / 5.0;
            assert!((v - mean).abs() < 1e-12);
        }
        // Deterministic given the request seed.
        let again = f
            .forecast(
                &s,
                &ForecastRequest {
                    horizon: 5,
                    mode: ForecastMode::Ensemble,
                    seed: 9,
                    ..Default::default()
                },
            )
            .unwrap();
        for (a, b) in fc.values.iter().zip(again.values.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn context_cap_ignores_older_history() {
        let f = desk_forecaster(5);
        let mut long = sine_series(300);
        let req = ForecastRequest {
            horizon: 4,
            context_cap: 64,
            ..Default::default()
        };
        let a = f.forecast(&long, &req).unwrap();
        // Perturb a value strictly before the capped window.
        long.values[100] += 250.0;
        let b = f.forecast(&long, &req).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        // Perturbing inside the window must change the forecast.
        long.values[299] += 1.0;
        let c = f.forecast(&long, &req).unwrap();
        assert_ne!(a.values[0].to_bits(), c.values[0].to_bits());
    }

    #[test]
    fn zero_horizon_rejected() {
        let f = desk_forecaster(6);
        let s = sine_series(16);
        let err = f
            .forecast(
                &s,
                &ForecastRequest {
                    horizon: 0,
                    ..Default::default()
                },
            )
            .unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn constant_context_still_forecasts() {
        let f = desk_forecaster(7);
        let start = parse_timestamp("2021-01-01").unwrap();
        let s = TimeSeries::new(start, Frequency::daily(), vec![5.5; 40]).unwrap();
        let fc = f
            .forecast(
                &s,
                &ForecastRequest {
                    horizon: 8,
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(fc.values.len(), 8);
        assert!(fc.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn forecast_timestamps_continue_the_grid() {
        let f = desk_forecaster(8);
        let s = sine_series(30);
        let fc = f
            .forecast(
                &s,
                &ForecastRequest {
                    horizon: 3,
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(fc.timestamps[0], s.next_timestamp());
        assert_eq!(fc.timestamps[1], s.freq.step(fc.timestamps[0]));
    }
}
