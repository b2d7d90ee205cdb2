//! Dataset ingestion: a dataset is a directory with `metadata.json`
//! (`name`, `freq`, `prediction_length`) and `data.jsonl` holding one full
//! series per line; the trailing `prediction_length` points of each series
//! are the held-out future.

use crate::error::{Error, Result};
use crate::series::read_jsonl;
use crate::timefeatures::Frequency;
use crate::TimeSeries;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub name: String,
    pub freq: Frequency,
    pub prediction_length: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub freq: Frequency,
    pub prediction_length: usize,
    /// (context, held-out future) pairs; the future has exactly
    /// `prediction_length` values.
    pub entries: Vec<(TimeSeries, Vec<f64>)>,
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join("metadata.json");
    let meta: DatasetMetadata = serde_json::from_str(
        &fs::read_to_string(&meta_path)
            .map_err(|e| Error::input(format!("{}: {e}", meta_path.display())))?,
    )?;
    if meta.prediction_length == 0 {
        return Err(Error::config(format!(
            "dataset '{}' has prediction_length 0",
            meta.name
        )));
    }
    let data_path = dir.join("data.jsonl");
    let file = fs::File::open(&data_path)
        .map_err(|e| Error::input(format!("{}: {e}", data_path.display())))?;
    let records = read_jsonl(std::io::BufReader::new(file))?;

    let mut entries = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let series = rec.to_series()?;
        if series.freq != meta.freq && !(series.freq.is_quarterly() && meta.freq.is_quarterly()) {
            return Err(Error::config(format!(
                "dataset '{}' series {} has freq {} but metadata says {}",
                meta.name, i, series.freq, meta.freq
            )));
        }
        if series.len() <= meta.prediction_length {
            return Err(Error::config(format!(
                "dataset '{}' series {} too short ({}) for prediction length {}",
                meta.name,
                i,
                series.len(),
                meta.prediction_length
            )));
        }
        let split = series.len() - meta.prediction_length;
        let future = series.values[split..].to_vec();
        let context = TimeSeries::new(series.start, series.freq, series.values[..split].to_vec())?;
        entries.push((context, future));
    }
    Ok(Dataset {
        name: meta.name,
        freq: meta.freq,
        prediction_length: meta.prediction_length,
        entries,
    })
}

/// Load every subdirectory of `root` that contains a `metadata.json`.
pub fn load_datasets(root: &Path) -> Result<Vec<Dataset>> {
    let mut out = Vec::new();
    let mut dirs: Vec<_> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join("metadata.json").exists())
        .collect();
    dirs.sort();
    for dir in dirs {
        out.push(load_dataset(&dir)?);
    }
    if out.is_empty() {
        return Err(Error::input(format!(
            "no datasets found under {}",
            root.display()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{write_jsonl, SeriesRecord};
    use crate::timefeatures::parse_timestamp;

    fn write_dataset(dir: &Path, name: &str, freq: &str, pred: usize, lens: &[usize]) {
        fs::create_dir_all(dir).unwrap();
        let meta = format!(
            "{{\"name\": \"{name}\", \"freq\": \"{freq}\", \"prediction_length\": {pred}}}"
        );
        fs::write(dir.join("metadata.json"), meta).unwrap();
        let records: Vec<SeriesRecord> = lens
            .iter()
            .map(|n| {
                let s = TimeSeries::new(
                    parse_timestamp("2020-01-01").unwrap(),
                    freq.parse().unwrap(),
                    (0..*n).map(|i| i as f64).collect(),
                )
                .unwrap();
                SeriesRecord::from_series(&s, None)
            })
            .collect();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &records).unwrap();
        fs::write(dir.join("data.jsonl"), buf).unwrap();
    }

    #[test]
    fn loads_and_splits() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("toy");
        write_dataset(&dir, "toy", "1D", 7, &[40, 50]);
        let ds = load_dataset(&dir).unwrap();
        assert_eq!(ds.entries.len(), 2);
        let (ctx, future) = &ds.entries[0];
        assert_eq!(ctx.len(), 33);
        assert_eq!(future.len(), 7);
        assert_eq!(future[0], 33.0);
    }

    #[test]
    fn rejects_series_shorter_than_horizon() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("bad");
        write_dataset(&dir, "bad", "1D", 30, &[10]);
        assert!(load_dataset(&dir).is_err());
    }

    #[test]
    fn loads_all_subdirectories() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(&tmp.path().join("a"), "a", "1H", 24, &[100]);
        write_dataset(&tmp.path().join("b"), "b", "1M", 12, &[60]);
        let all = load_datasets(tmp.path()).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].name, "a");
        assert_eq!(all[1].name, "b");
    }
}
