//! Token assembly: scaled values, target flags and calendar features per
//! timestep.

use super::scaler::ScalerParams;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::timefeatures::{decompose, encode, ENCODED_LEN};
use crate::TimeSeries;
use chrono::NaiveDateTime;
use ndarray::Array2;

/// What a target token asks the model to predict. The flag value feeds the
/// network's flag channel: 0 for point forecasts, 1 for cumulative-mean
/// targets (always 0 during inference).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Point,
    CumMean,
}

impl TargetKind {
    pub fn flag_value(&self) -> f64 {
        match self {
            TargetKind::Point => 0.0,
            TargetKind::CumMean => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TokenFlag {
    Observed,
    Target(TargetKind),
}

/// One model input token.
#[derive(Debug, Clone)]
pub struct TokenRecord {
    /// Scaled observation for observed tokens, 0 for targets.
    pub value: f64,
    pub flag: TokenFlag,
    pub calendar: [f64; ENCODED_LEN],
}

impl TokenRecord {
    pub fn is_target(&self) -> bool {
        matches!(self.flag, TokenFlag::Target(_))
    }
}

/// Context tokens followed by `horizon` zero-valued target tokens, strictly
/// chronological. Returns the fitted scaler alongside.
pub fn assemble_tokens(
    series: &TimeSeries,
    horizon: &[NaiveDateTime],
    kind: TargetKind,
) -> Result<(Vec<TokenRecord>, ScalerParams)> {
    if horizon.is_empty() {
        return Err(Error::input("horizon must contain at least one timestamp"));
    }
    let scaler = ScalerParams::fit(&series.values)?;
    let grid = series.grid();
    let mut tokens = Vec::with_capacity(grid.len() + horizon.len());
    for (ts, v) in grid.iter().zip(series.values.iter()) {
        tokens.push(TokenRecord {
            value: scaler.apply(*v),
            flag: TokenFlag::Observed,
            calendar: encode(&decompose(*ts)),
        });
    }
    for ts in horizon {
        tokens.push(TokenRecord {
            value: 0.0,
            flag: TokenFlag::Target(kind),
            calendar: encode(&decompose(*ts)),
        });
    }
    Ok((tokens, scaler))
}

/// Token sequence from explicit parts; target positions get value 0 and the
/// target flag. Used by training, where targets may sit mid-sequence.
pub fn tokens_from_parts(
    timestamps: &[NaiveDateTime],
    scaled_values: &[f64],
    target_mask: &[bool],
    kind: TargetKind,
) -> Vec<TokenRecord> {
    assert_eq!(timestamps.len(), scaled_values.len());
    assert_eq!(timestamps.len(), target_mask.len());
    timestamps
        .iter()
        .zip(scaled_values.iter().zip(target_mask.iter()))
        .map(|(ts, (v, is_target))| TokenRecord {
            value: if *is_target { 0.0 } else { *v },
            flag: if *is_target {
                TokenFlag::Target(kind)
            } else {
                TokenFlag::Observed
            },
            calendar: encode(&decompose(*ts)),
        })
        .collect()
}

/// Dense feature matrices the network consumes: value channel `(T, 1)`,
/// flag channel `(T, 2)` as `[is_target, flag_value]`, calendar `(T, 14)`.
#[derive(Debug, Clone)]
pub struct TokenInputs<F: Real> {
    pub values: Array2<F>,
    pub flags: Array2<F>,
    pub calendar: Array2<F>,
}

impl<F: Real> TokenInputs<F> {
    pub fn from_records(tokens: &[TokenRecord]) -> Self {
        let t = tokens.len();
        let mut values = Array2::zeros((t, 1));
        let mut flags = Array2::zeros((t, 2));
        let mut calendar = Array2::zeros((t, ENCODED_LEN));
        for (i, tok) in tokens.iter().enumerate() {
            values[[i, 0]] = F::of(tok.value);
            match tok.flag {
                TokenFlag::Observed => {}
                TokenFlag::Target(kind) => {
                    flags[[i, 0]] = F::one();
                    flags[[i, 1]] = F::of(kind.flag_value());
                }
            }
            for (j, c) in tok.calendar.iter().enumerate() {
                calendar[[i, j]] = F::of(*c);
            }
        }
        TokenInputs {
            values,
            flags,
            calendar,
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}
