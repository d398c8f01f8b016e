//! Relative error metrics. Both are sums over the evaluated days, not means;
//! [`MetricScale::PerDay`] divides by the day count when horizons differ.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{CountrySeries, Features, N_FEATURES};
use crate::error::{Error, Result};
use crate::forecast::ForecastResult;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricScale {
    /// Sum over days.
    #[default]
    Sum,
    /// Sum divided by the number of days.
    PerDay,
}

fn relative_errors(original: &[f64], predicted: &[f64]) -> Result<Vec<f64>> {
    if original.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            original: original.len(),
            predicted: predicted.len(),
        });
    }
    original
        .iter()
        .zip(predicted)
        .enumerate()
        .map(|(i, (o, p))| {
            if *o == 0.0 {
                Err(Error::ZeroOriginal { index: i })
            } else {
                Ok((o - p) / o)
            }
        })
        .collect()
}

/// `Σ ((original − predicted) / original)²`
pub fn rmse_relative(original: &[f64], predicted: &[f64]) -> Result<f64> {
    Ok(relative_errors(original, predicted)?.iter().map(|e| e * e).sum())
}

/// `Σ |(original − predicted) / original|`
pub fn rmae_relative(original: &[f64], predicted: &[f64]) -> Result<f64> {
    Ok(relative_errors(original, predicted)?.iter().map(|e| e.abs()).sum())
}

/// Per-variable relative errors of one forecast against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub member_id: String,
    pub start_date: NaiveDate,
    pub horizon: usize,
    pub scale: MetricScale,
    pub rmse: Features,
    pub rmae: Features,
    /// Signed `(original − predicted) / original`, one row per day.
    pub daily_relative_error: Vec<Features>,
}

pub fn evaluate_forecast(truth: &CountrySeries, forecast: &ForecastResult) -> Result<EvaluationReport> {
    evaluate_forecast_scaled(truth, forecast, MetricScale::Sum)
}

pub fn evaluate_forecast_scaled(
    truth: &CountrySeries,
    forecast: &ForecastResult,
    scale: MetricScale,
) -> Result<EvaluationReport> {
    let actual = truth_rows(truth, forecast)?;
    let d = forecast.horizon();
    let mut rmse = [0.0; N_FEATURES];
    let mut rmae = [0.0; N_FEATURES];
    let mut daily = vec![[0.0; N_FEATURES]; d];
    for v in 0..N_FEATURES {
        let original: Vec<f64> = actual.iter().map(|r| r[v]).collect();
        let predicted: Vec<f64> = forecast.values.iter().map(|r| r[v]).collect();
        let errors = relative_errors(&original, &predicted)?;
        for (row, e) in daily.iter_mut().zip(&errors) {
            row[v] = *e;
        }
        rmse[v] = errors.iter().map(|e| e * e).sum();
        rmae[v] = errors.iter().map(|e| e.abs()).sum();
        if scale == MetricScale::PerDay {
            rmse[v] /= d as f64;
            rmae[v] /= d as f64;
        }
    }
    Ok(EvaluationReport {
        member_id: forecast.member_id.clone(),
        start_date: forecast.start_date,
        horizon: d,
        scale,
        rmse,
        rmae,
        daily_relative_error: daily,
    })
}

fn truth_rows(truth: &CountrySeries, forecast: &ForecastResult) -> Result<Vec<Features>> {
    forecast
        .dates()
        .map(|date| {
            truth.record(date).map(|r| r.features()).ok_or_else(|| {
                Error::DateMisalignment(format!(
                    "truth {}..={} does not cover forecast day {date}",
                    truth.start_date(),
                    truth.end_date()
                ))
            })
        })
        .collect()
}
