//! The universal exchange type: a timestamp grid plus observations.

use crate::error::{Error, Result};
use crate::timefeatures::{make_grid, parse_timestamp, Frequency};
use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// A univariate series on a regular calendar grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub start: NaiveDateTime,
    pub freq: Frequency,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start: NaiveDateTime, freq: Frequency, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("series must contain at least one value"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("series value {v}")));
        }
        Ok(TimeSeries {
            start,
            freq,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Timestamps for every observation.
    pub fn grid(&self) -> Vec<NaiveDateTime> {
        make_grid(self.start, self.freq, self.len()).expect("len >= 1")
    }

    /// Timestamp of the step immediately after the last observation.
    pub fn next_timestamp(&self) -> NaiveDateTime {
        let last = *self.grid().last().expect("len >= 1");
        self.freq.step(last)
    }

    /// The trailing `cap` observations (start timestamp adjusted).
    pub fn tail(&self, cap: usize) -> TimeSeries {
        if self.len() <= cap {
            return self.clone();
        }
        let grid = self.grid();
        let skip = self.len() - cap;
        TimeSeries {
            start: grid[skip],
            freq: self.freq,
            values: self.values[skip..].to_vec(),
        }
    }
}

/// One JSONL line: GluonTS-compatible `start`/`freq`/`target` plus optional
/// provenance emitted by the generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub start: String,
    pub freq: Frequency,
    pub target: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// How a generated series came to be.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Provenance {
    /// "gp" or "fpfn"
    pub prior: String,
    pub seed: u64,
    pub index: u64,
}

impl SeriesRecord {
    pub fn from_series(s: &TimeSeries, provenance: Option<Provenance>) -> Self {
        SeriesRecord {
            start: s.start.format("%Y-%m-%dT%H:%M:%S").to_string(),
            freq: s.freq,
            target: s.values.clone(),
            provenance,
        }
    }

    pub fn to_series(&self) -> Result<TimeSeries> {
        TimeSeries::new(parse_timestamp(&self.start)?, self.freq, self.target.clone())
    }
}

/// Read a JSONL stream of series records.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<SeriesRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SeriesRecord = serde_json::from_str(&line)
            .map_err(|e| Error::input(format!("line {}: {e}", lineno + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Write series records as JSONL.
pub fn write_jsonl<W: Write>(mut writer: W, records: &[SeriesRecord]) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
