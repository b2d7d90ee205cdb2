//! Benchmark runner: score forecasters over datasets with a capped context.

use super::ingest::Dataset;
use super::{aggregate, mase, seasonal_naive, seasonality_of, EvalReport, EvalRow};
use crate::error::Result;
use crate::inference::{Forecast, ForecastMode, ForecastRequest, Forecaster};
use crate::TimeSeries;

/// Anything that can produce a point forecast for a context series.
pub trait ForecastModel: Sync {
    fn name(&self) -> String;
    fn forecast(&self, context: &TimeSeries, horizon: usize) -> Result<Vec<f64>>;
}

/// The built-in statistical baseline.
pub struct SeasonalNaiveModel;

impl ForecastModel for SeasonalNaiveModel {
    fn name(&self) -> String {
        "seasonal-naive".into()
    }

    fn forecast(&self, context: &TimeSeries, horizon: usize) -> Result<Vec<f64>> {
        let m = seasonality_of(context.freq)?;
        Ok(seasonal_naive(&context.values, m, horizon))
    }
}

/// A loaded network checkpoint driven in one of the inference modes.
pub struct NetworkModel<'a> {
    pub forecaster: &'a Forecaster,
    pub mode: ForecastMode,
    pub context_cap: usize,
    pub seed: u64,
}

impl ForecastModel for NetworkModel<'_> {
    fn name(&self) -> String {
        self.mode.as_str().to_string()
    }

    fn forecast(&self, context: &TimeSeries, horizon: usize) -> Result<Vec<f64>> {
        let fc: Forecast = self.forecaster.forecast(
            context,
            &ForecastRequest {
                horizon,
                mode: self.mode,
                context_cap: self.context_cap,
                seed: self.seed,
            },
        )?;
        Ok(fc.values)
    }
}

/// Score every model on every dataset: forecast the declared prediction
/// length from the capped context, compute per-series MASE, average per
/// dataset, aggregate. Per-series failures are recorded and the affected
/// cell is skipped (dataset marked partial in the failure note).
pub fn run_benchmark(
    datasets: &[Dataset],
    models: &[&dyn ForecastModel],
    context_cap: usize,
) -> Result<EvalReport> {
    let mut rows = Vec::new();
    let mut failures = Vec::new();

    for dataset in datasets {
        let m = seasonality_of(dataset.freq)?;
        for model in models {
            let mut scores = Vec::new();
            let mut failed = 0usize;
            let mut degenerate = 0usize;
            for (i, (context, future)) in dataset.entries.iter().enumerate() {
                let capped = context.tail(context_cap);
                let result = model
                    .forecast(&capped, dataset.prediction_length)
                    .and_then(|fc| mase(&fc, future, &capped.values, m));
                match result {
                    Ok(score) if score.is_finite() => scores.push(score),
                    Ok(_) => degenerate += 1,
                    Err(e) => {
                        failed += 1;
                        if failed <= 3 {
                            failures.push(format!(
                                "{} / {} series {i}: {e}",
                                dataset.name,
                                model.name()
                            ));
                        }
                    }
                }
            }
            if failed > 0 {
                failures.push(format!(
                    "{} / {}: partial ({failed} of {} series failed)",
                    dataset.name,
                    model.name(),
                    dataset.entries.len()
                ));
            }
            if degenerate > 0 {
                failures.push(format!(
                    "{} / {}: {degenerate} series with degenerate seasonal denominator",
                    dataset.name,
                    model.name()
                ));
            }
            if !scores.is_empty() {
                rows.push(EvalRow {
                    dataset: dataset.name.clone(),
                    model: model.name(),
                    mase: scores.iter().sum::<f64>() / scores.len() as f64,
                });
            }
        }
    }

    let mut report = aggregate(&rows)?;
    report.failures = failures;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timefeatures::{parse_timestamp, Frequency};

    /// Periodic series with a non-periodic head so the MASE denominator is
    /// nonzero while the seasonal-naive forecast is exact.
    fn periodic_dataset() -> Dataset {
        let mut entries = Vec::new();
        for amp in [1.0, 2.5] {
            let mut values = vec![9.0 * amp];
            for i in 0..48 {
                values.push(amp * f64::from(i % 12));
            }
            let context = TimeSeries::new(
                parse_timestamp("2019-01-01").unwrap(),
                Frequency::monthly(),
                values.clone(),
            )
            .unwrap();
            // Future continues the 12-periodic pattern: context ends at
            // i=47 -> i%12 = 11, so the future starts at 0.
            let future: Vec<f64> = (0..12).map(|i| amp * f64::from(i % 12)).collect();
            entries.push((context, future));
        }
        Dataset {
            name: "periodic-toy".into(),
            freq: Frequency::monthly(),
            prediction_length: 12,
            entries,
        }
    }

    #[test]
    fn seasonal_naive_scores_zero_on_periodic_future() {
        let ds = periodic_dataset();
        let models: Vec<&dyn ForecastModel> = vec![&SeasonalNaiveModel];
        let report = run_benchmark(&[ds], &models, 512).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(
            report.rows[0].mase.abs() < 1e-12,
            "mase = {}",
            report.rows[0].mase
        );
    }

    #[test]
    fn row_count_is_datasets_times_models() {
        let ds1 = periodic_dataset();
        let mut ds2 = periodic_dataset();
        ds2.name = "periodic-toy-2".into();
        struct Biased;
        impl ForecastModel for Biased {
            fn name(&self) -> String {
                "biased".into()
            }
            fn forecast(&self, context: &TimeSeries, horizon: usize) -> Result<Vec<f64>> {
                Ok(vec![*context.values.last().unwrap() + 1.0; horizon])
            }
        }
        let models: Vec<&dyn ForecastModel> = vec![&SeasonalNaiveModel, &Biased];
        let report = run_benchmark(&[ds1, ds2], &models, 512).unwrap();
        assert_eq!(report.rows.len(), 4);
        // Two models per dataset: ranks average to 1 and 2.
        assert!(report.mean_rank["seasonal-naive"] < report.mean_rank["biased"]);
    }
}
