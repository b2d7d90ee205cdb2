//! Seasonal MASE metric, seasonal-naive baseline, aggregation, and the
//! benchmark runner.

pub mod ingest;
pub mod runner;

pub use ingest::{load_dataset, load_datasets, Dataset};
pub use runner::{run_benchmark, ForecastModel, NetworkModel, SeasonalNaiveModel};

use crate::error::{Error, Result};
use crate::timefeatures::{FreqUnit, Frequency};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// Seasonal period per frequency, the conventional table:
/// hourly 24, daily 7, business-daily 5, weekly 1, monthly 12,
/// quarterly 4, minutely 60.
pub fn seasonality_of(freq: Frequency) -> Result<usize> {
    let m = match (freq.unit, freq.multiplier) {
        (FreqUnit::Minutely, 1) => 60,
        (FreqUnit::Hourly, 1) => 24,
        (FreqUnit::Daily, 1) => 7,
        (FreqUnit::BusinessDaily, 1) => 5,
        (FreqUnit::Weekly, 1) => 1,
        (FreqUnit::Monthly, 1) => 12,
        (FreqUnit::Monthly, 3) | (FreqUnit::Quarterly, 1) => 4,
        _ => {
            return Err(Error::config(format!(
                "no seasonality defined for frequency {freq}"
            )))
        }
    };
    Ok(m)
}

/// Repeat the value observed one season earlier; short contexts fall back
/// to repeating the last value.
pub fn seasonal_naive(context: &[f64], m: usize, horizon: usize) -> Vec<f64> {
    assert!(!context.is_empty(), "context must be nonempty");
    let m = m.max(1);
    let len = context.len();
    (0..horizon)
        .map(|t| {
            if len >= m {
                context[len - m + (t % m)]
            } else {
                context[len - 1]
            }
        })
        .collect()
}

/// Mean absolute forecast error scaled by the in-sample mean absolute
/// seasonal difference of the context. A zero denominator yields the
/// `+inf` sentinel (flagged and excluded from aggregation).
pub fn mase(forecast: &[f64], actual: &[f64], context: &[f64], m: usize) -> Result<f64> {
    if forecast.len() != actual.len() {
        return Err(Error::input("forecast and actual lengths differ"));
    }
    if forecast.is_empty() {
        return Err(Error::input("empty forecast"));
    }
    if context.len() <= m {
        return Err(Error::input(format!(
            "context length {} must exceed the seasonality {m}",
            context.len()
        )));
    }
    let numerator = forecast
        .iter()
        .zip(actual.iter())
        .map(|(f, a)| (f - a).abs())
        .sum::<f64>()
        / forecast.len() as f64;
    let denom = context
        .windows(m + 1)
        .map(|w| (w[m] - w[0]).abs())
        .sum::<f64>()
        / (context.len() - m) as f64;
    if denom == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(numerator / denom)
}

/// exp(mean(log scores)); all scores must be finite and positive.
pub fn geometric_mean(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::input("geometric mean of an empty set"));
    }
    if scores.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::input("geometric mean needs finite positive scores"));
    }
    let log_mean = scores.iter().map(|s| s.ln()).sum::<f64>() / scores.len() as f64;
    Ok(log_mean.exp())
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn rank_scores(scores: &[f64]) -> Vec<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the mean 1-based rank.
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// One scored (dataset, model) cell.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalRow {
    pub dataset: String,
    pub model: String,
    pub mase: f64,
}

/// Aggregated benchmark results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Geometric-mean MASE per model over its finite rows.
    pub geometric_mean: IndexMap<String, f64>,
    /// Mean rank per model across datasets.
    pub mean_rank: IndexMap<String, f64>,
    /// (dataset, model) cells excluded from the geometric mean because the
    /// score was non-finite.
    pub excluded: Vec<(String, String)>,
    /// Per-series failures recorded while scoring, per dataset.
    pub failures: Vec<String>,
}

/// Aggregate rows into geometric means and mean ranks.
pub fn aggregate(rows: &[EvalRow]) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::input("no rows to aggregate"));
    }
    let mut models: Vec<String> = Vec::new();
    let mut datasets: Vec<String> = Vec::new();
    for row in rows {
        if !models.contains(&row.model) {
            models.push(row.model.clone());
        }
        if !datasets.contains(&row.dataset) {
            datasets.push(row.dataset.clone());
        }
    }

    let mut excluded = Vec::new();
    let mut geometric_mean = IndexMap::new();
    for model in &models {
        let mut scores = Vec::new();
        for row in rows.iter().filter(|r| &r.model == model) {
            if row.mase.is_finite() && row.mase > 0.0 {
                scores.push(row.mase);
            } else if row.mase.is_finite() && row.mase == 0.0 {
                // A zero score would null the product; keep it out of the
                // log-mean but remember it.
                excluded.push((row.dataset.clone(), row.model.clone()));
            } else {
                excluded.push((row.dataset.clone(), row.model.clone()));
            }
        }
        if !scores.is_empty() {
            geometric_mean.insert(model.clone(), geometric_mean_unchecked(&scores));
        }
    }

    let mut rank_sum: IndexMap<String, (f64, usize)> = IndexMap::new();
    for dataset in &datasets {
        let cells: Vec<&EvalRow> = rows
            .iter()
            .filter(|r| &r.dataset == dataset && r.mase.is_finite())
            .collect();
        if cells.len() < 1 {
            continue;
        }
        let scores: Vec<f64> = cells.iter().map(|c| c.mase).collect();
        let ranks = rank_scores(&scores);
        for (cell, rank) in cells.iter().zip(ranks.iter()) {
            let entry = rank_sum.entry(cell.model.clone()).or_insert((0.0, 0));
            entry.0 += rank;
            entry.1 += 1;
        }
    }
    let mean_rank: IndexMap<String, f64> = rank_sum
        .into_iter()
        .map(|(model, (sum, count))| (model, sum / count as f64))
        .collect();

    Ok(EvalReport {
        rows: rows.to_vec(),
        geometric_mean,
        mean_rank,
        excluded,
        failures: Vec::new(),
    })
}

fn geometric_mean_unchecked(scores: &[f64]) -> f64 {
    (scores.iter().map(|s| s.ln()).sum::<f64>() / scores.len() as f64).exp()
}

/// Parse a `dataset,model,mase` CSV (header required). Dataset and model
/// names must not contain commas.
pub fn load_score_csv(text: &str) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::new();
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::input("empty score CSV"))?;
    if header.trim() != "dataset,model,mase" {
        return Err(Error::input(format!(
            "score CSV header must be 'dataset,model,mase', got '{header}'"
        )));
    }
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.splitn(3, ',').collect();
        if parts.len() != 3 {
            return Err(Error::input(format!("score CSV line {}: '{line}'", i + 2)));
        }
        rows.push(EvalRow {
            dataset: parts[0].trim().to_string(),
            model: parts[1].trim().to_string(),
            mase: parts[2]
                .trim()
                .parse()
                .map_err(|_| Error::input(format!("bad mase on line {}", i + 2)))?,
        });
    }
    Ok(rows)
}

/// Emit the plot-data CSV: `dataset,model,mase,rank`.
pub fn write_plot_csv<W: std::io::Write>(report: &EvalReport, mut w: W) -> Result<()> {
    writeln!(w, "dataset,model,mase,rank")?;
    let mut datasets: Vec<String> = Vec::new();
    for row in &report.rows {
        if !datasets.contains(&row.dataset) {
            datasets.push(row.dataset.clone());
        }
    }
    for dataset in &datasets {
        let cells: Vec<&EvalRow> = report
            .rows
            .iter()
            .filter(|r| &r.dataset == dataset && r.mase.is_finite())
            .collect();
        let scores: Vec<f64> = cells.iter().map(|c| c.mase).collect();
        let ranks = rank_scores(&scores);
        for (cell, rank) in cells.iter().zip(ranks.iter()) {
            writeln!(w, "{},{},{},{}", cell.dataset, cell.model, cell.mase, rank)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seasonality_table() {
        assert_eq!(seasonality_of("1H".parse().unwrap()).unwrap(), 24);
        assert_eq!(seasonality_of("1D".parse().unwrap()).unwrap(), 7);
        assert_eq!(seasonality_of("1B".parse().unwrap()).unwrap(), 5);
        assert_eq!(seasonality_of("1W".parse().unwrap()).unwrap(), 1);
        assert_eq!(seasonality_of("1M".parse().unwrap()).unwrap(), 12);
        assert_eq!(seasonality_of("3M".parse().unwrap()).unwrap(), 4);
        assert_eq!(seasonality_of("1Q".parse().unwrap()).unwrap(), 4);
        assert_eq!(seasonality_of("1T".parse().unwrap()).unwrap(), 60);
        assert!(seasonality_of("2H".parse().unwrap()).is_err());
    }

    #[test]
    fn seasonal_naive_hand_walk() {
        assert_eq!(seasonal_naive(&[1.0, 2.0, 3.0, 4.0], 2, 3), vec![3.0, 4.0, 3.0]);
        assert_eq!(seasonal_naive(&[1.0, 2.0, 3.0], 1, 2), vec![3.0, 3.0]);
        // Context shorter than m falls back to the last value.
        assert_eq!(seasonal_naive(&[5.0, 6.0], 7, 2), vec![6.0, 6.0]);
    }

    #[test]
    fn seasonal_naive_continues_periodic_context() {
        let context: Vec<f64> = (0..12).map(|i| f64::from(i % 4)).collect();
        let fc = seasonal_naive(&context, 4, 8);
        for (t, v) in fc.iter().enumerate() {
            assert_eq!(*v, f64::from(t as u32 % 4));
        }
    }

    #[test]
    fn mase_perfect_forecast_is_zero() {
        let ctx = [1.0, 5.0, 2.0, 8.0, 3.0];
        let actual = [4.0, 2.0];
        assert_eq!(mase(&actual, &actual, &ctx, 1).unwrap(), 0.0);
    }

    #[test]
    fn mase_equals_one_on_constructed_equality() {
        // Context whose seasonal differences all have magnitude d, and a
        // forecast off by exactly d everywhere: score 1.
        let ctx = [0.0, 1.0, 2.0, 3.0, 4.0];
        let actual = [5.0, 6.0];
        let forecast = [4.0, 5.0];
        let score = mase(&forecast, &actual, &ctx, 1).unwrap();
        assert!((score - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mase_degenerate_denominator_is_flagged_infinite() {
        let ctx = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        let score = mase(&[2.0, 1.0], &[1.0, 2.0], &ctx, 2).unwrap();
        assert!(score.is_infinite());
    }

    #[test]
    fn mase_rejects_short_context() {
        assert!(mase(&[1.0], &[1.0], &[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn mase_is_scale_invariant() {
        let ctx: Vec<f64> = (0..30).map(|i| (f64::from(i) * 0.7).sin() * 3.0 + 5.0).collect();
        let actual: Vec<f64> = (0..6).map(|i| f64::from(i) * 0.3 + 4.0).collect();
        let forecast: Vec<f64> = actual.iter().map(|v| v + 0.2).collect();
        let base = mase(&forecast, &actual, &ctx, 7).unwrap();
        for alpha in [0.01, 1.0, 100.0] {
            let f: Vec<f64> = forecast.iter().map(|v| v * alpha).collect();
            let a: Vec<f64> = actual.iter().map(|v| v * alpha).collect();
            let c: Vec<f64> = ctx.iter().map(|v| v * alpha).collect();
            let scaled = mase(&f, &a, &c, 7).unwrap();
            assert!(
                (scaled - base).abs() / base < 1e-12,
                "alpha={alpha}: {scaled} vs {base}"
            );
        }
    }

    #[test]
    fn geometric_mean_known_values() {
        assert!((geometric_mean(&[1.0, 4.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!((geometric_mean(&[0.5, 2.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(geometric_mean(&[]).is_err());
        assert!(geometric_mean(&[1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn geometric_mean_is_multiplicative() {
        let scores = [0.8, 1.3, 2.1, 0.6];
        let base = geometric_mean(&scores).unwrap();
        let scaled: Vec<f64> = scores.iter().map(|s| s * 3.0).collect();
        let got = geometric_mean(&scaled).unwrap();
        assert!((got - 3.0 * base).abs() < 1e-12);
    }

    #[test]
    fn ranks_with_ties() {
        let ranks = rank_scores(&[0.5, 0.5, 1.0]);
        assert_eq!(ranks, vec![1.5, 1.5, 3.0]);
        let ranks = rank_scores(&[3.0, 1.0, 2.0]);
        assert_eq!(ranks, vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn rank_invariant_under_monotone_transform() {
        let scores = [0.9f64, 1.7, 0.3, 2.4];
        let transformed: Vec<f64> = scores.iter().map(|s| s.powi(3) + 1.0).collect();
        assert_eq!(rank_scores(&scores), rank_scores(&transformed));
    }

    #[test]
    fn aggregate_single_model_rank_one() {
        let rows = vec![
            EvalRow {
                dataset: "a".into(),
                model: "m".into(),
                mase: 1.2,
            },
            EvalRow {
                dataset: "b".into(),
                model: "m".into(),
                mase: 0.8,
            },
        ];
        let rep = aggregate(&rows).unwrap();
        assert_eq!(rep.mean_rank["m"], 1.0);
        let gm = rep.geometric_mean["m"];
        assert!((gm - (1.2f64 * 0.8).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn aggregate_excludes_infinite_rows() {
        let rows = vec![
            EvalRow {
                dataset: "a".into(),
                model: "m".into(),
                mase: 2.0,
            },
            EvalRow {
                dataset: "b".into(),
                model: "m".into(),
                mase: f64::INFINITY,
            },
        ];
        let rep = aggregate(&rows).unwrap();
        assert_eq!(rep.geometric_mean["m"], 2.0);
        assert_eq!(rep.excluded.len(), 1);
    }

    #[test]
    fn score_csv_round_trip() {
        let text = "dataset,model,mase\nCIF 2016,alpha,0.925\nTraffic,beta,1.12\n";
        let rows = load_score_csv(text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].dataset, "CIF 2016");
        assert_eq!(rows[0].mase, 0.925);
        assert!(load_score_csv("bad header\n").is_err());
    }
}
