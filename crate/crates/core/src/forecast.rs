//! Recursive multi-day forecasting: every one-step prediction is appended
//! to the input window and the oldest row dropped, so the model always sees
//! exactly `lookback` rows.

use std::io::{Read, Write};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::data::{normalize_by_density, CountrySeries, FeatureScaler, Features, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::train::GruModel;

pub const DEFAULT_HORIZON: usize = 7;

/// Anything that maps a scaled window to the next scaled day.
pub trait OneStepModel {
    fn lookback(&self) -> usize;
    fn scaler(&self) -> &FeatureScaler;
    fn predict_scaled(&self, window: &[Features]) -> Result<Features>;
    fn member_id(&self) -> String;
}

impl OneStepModel for GruModel {
    fn lookback(&self) -> usize {
        self.lookback
    }

    fn scaler(&self) -> &FeatureScaler {
        &self.scaler
    }

    fn predict_scaled(&self, window: &[Features]) -> Result<Features> {
        GruModel::predict_scaled(self, window)
    }

    fn member_id(&self) -> String {
        self.provenance.clone()
    }
}

/// `horizon` consecutive days of predicted counts for one member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub start_date: NaiveDate,
    pub values: Vec<Features>,
    pub member_id: String,
}

impl ForecastResult {
    pub fn new(start_date: NaiveDate, values: Vec<Features>, member_id: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("forecast horizon must be at least 1".into()));
        }
        if let Some((i, _)) = values
            .iter()
            .enumerate()
            .find(|(_, row)| row.iter().any(|v| !v.is_finite() || *v < 0.0))
        {
            return Err(Error::NonFinitePrediction { step: i + 1 });
        }
        Ok(Self {
            start_date,
            values,
            member_id: member_id.into(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.values.len()).map(|i| self.start_date + Days::new(i as u64))
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date + Days::new(self.values.len() as u64 - 1)
    }
}

/// Forecasts `horizon` days after the last context day.
///
/// `context` holds raw counts for exactly `model.lookback()` days; it is
/// density-normalized and scaled with the model's scaler. Predictions are
/// fed back unclamped; only the returned counts are clamped at zero.
pub fn recursive_forecast<M: OneStepModel + ?Sized>(
    model: &M,
    context: &CountrySeries,
    horizon: usize,
) -> Result<ForecastResult> {
    let lookback = model.lookback();
    if context.len() != lookback {
        return Err(Error::ContextLengthMismatch {
            expected: lookback,
            actual: context.len(),
        });
    }
    if horizon == 0 {
        return Err(Error::InvalidConfig("forecast horizon must be at least 1".into()));
    }
    if horizon > lookback {
        log::warn!(
            "horizon {horizon} exceeds look-back {lookback}: the last {} steps see only predicted days",
            horizon - lookback
        );
    }

    let density = context.population_density();
    let scaler = model.scaler();
    let mut window = scaler.apply_rows(&normalize_by_density(context)?.features());
    let mut scaled = Vec::with_capacity(horizon);
    for step in 1..=horizon {
        let next = model.predict_scaled(&window)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinitePrediction { step });
        }
        scaled.push(next);
        window.remove(0);
        window.push(next);
    }

    let values = scaled
        .iter()
        .map(|row| scaler.invert(*row).map(|v| (v * density).max(0.0)))
        .collect();
    let start = context.end_date() + Days::new(1);
    ForecastResult::new(start, values, model.member_id())
}

pub const PERSISTENCE_ID: &str = "persistence";

/// Repeats the last observed day.
pub fn persistence_baseline(context: &CountrySeries, horizon: usize) -> Result<ForecastResult> {
    let last = context.values()[context.len() - 1].features();
    ForecastResult::new(context.end_date() + Days::new(1), vec![last; horizon], PERSISTENCE_ID)
}

pub const FORECAST_HEADER: [&str; 5] = ["date", "new_cases", "new_deaths", "active_cases", "member_id"];

pub fn write_forecasts<'a>(forecasts: impl IntoIterator<Item = &'a ForecastResult>, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FORECAST_HEADER)?;
    for f in forecasts {
        for (date, row) in f.dates().zip(&f.values) {
            w.write_record([
                date.format("%Y-%m-%d").to_string(),
                row[0].to_string(),
                row[1].to_string(),
                row[2].to_string(),
                f.member_id.clone(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<forecast csv>", e))?;
    Ok(())
}

/// Reads a forecast CSV; consecutive rows of one member with consecutive
/// dates form one forecast.
pub fn read_forecasts(reader: impl Read) -> Result<Vec<ForecastResult>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(FORECAST_HEADER.iter().copied()) {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("expected header `{}`", FORECAST_HEADER.join(",")),
        });
    }
    let mut out: Vec<ForecastResult> = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| Error::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        let mut row = [0.0; 3];
        for (f, slot) in row.iter_mut().enumerate() {
            *slot = record[f + 1].parse().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("bad number in {}", FEATURE_NAMES[f]),
            })?;
        }
        let member = &record[4];
        match out.last_mut() {
            Some(last) if last.member_id == member && last.end_date() + Days::new(1) == date => {
                last.values.push(row);
            }
            _ => out.push(ForecastResult {
                start_date: date,
                values: vec![row],
                member_id: member.to_string(),
            }),
        }
    }
    out.into_iter()
        .map(|f| ForecastResult::new(f.start_date, f.values, f.member_id))
        .collect()
}
