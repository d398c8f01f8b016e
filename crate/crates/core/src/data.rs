//! Country series ingestion and the preprocessing chain that turns raw daily
//! counts into supervised samples: density normalization, min-max scaling,
//! date slicing and sliding windows.

use std::io::Write;
use std::path::Path;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of modelled variables per day.
pub const N_FEATURES: usize = 3;

/// Column names, in feature order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["new_cases", "new_deaths", "active_cases"];

/// One day's features in `FEATURE_NAMES` order.
pub type Features = [f64; N_FEATURES];

pub const CSV_HEADER: [&str; 4] = ["date", "new_cases", "new_deaths", "active_cases"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub date: NaiveDate,
    pub new_cases: f64,
    pub new_deaths: f64,
    pub active_cases: f64,
}

impl DayRecord {
    pub fn new(date: NaiveDate, features: Features) -> Self {
        Self {
            date,
            new_cases: features[0],
            new_deaths: features[1],
            active_cases: features[2],
        }
    }

    pub fn features(&self) -> Features {
        [self.new_cases, self.new_deaths, self.active_cases]
    }
}

/// A contiguous daily series for one country.
///
/// Immutable once built: every constructor checks that dates advance by
/// exactly one day and that every value is finite and non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountrySeries {
    country_name: String,
    population_density: f64,
    values: Vec<DayRecord>,
}

impl CountrySeries {
    pub fn new(country_name: impl Into<String>, population_density: f64, values: Vec<DayRecord>) -> Result<Self> {
        if !(population_density.is_finite() && population_density > 0.0) {
            return Err(Error::ZeroDensity(population_density));
        }
        if values.is_empty() {
            return Err(Error::InvalidSeries("series has no days".into()));
        }
        for pair in values.windows(2) {
            let expected = next_day(pair[0].date);
            if pair[1].date != expected {
                return Err(Error::MissingDate {
                    expected,
                    found: pair[1].date,
                });
            }
        }
        for (i, rec) in values.iter().enumerate() {
            for (f, v) in rec.features().into_iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidSeries(format!(
                        "non-finite {} on {}",
                        FEATURE_NAMES[f], rec.date
                    )));
                }
                if v < 0.0 {
                    return Err(Error::NegativeValue {
                        line: i + 2,
                        column: FEATURE_NAMES[f],
                        value: v,
                    });
                }
            }
        }
        Ok(Self {
            country_name: country_name.into(),
            population_density,
            values,
        })
    }

    /// Builds a series from consecutive feature rows starting at `start_date`.
    pub fn from_features(
        country_name: impl Into<String>,
        population_density: f64,
        start_date: NaiveDate,
        rows: &[Features],
    ) -> Result<Self> {
        let values = rows
            .iter()
            .enumerate()
            .map(|(i, f)| DayRecord::new(start_date + Days::new(i as u64), *f))
            .collect();
        Self::new(country_name, population_density, values)
    }

    pub fn country_name(&self) -> &str {
        &self.country_name
    }

    pub fn population_density(&self) -> f64 {
        self.population_density
    }

    pub fn start_date(&self) -> NaiveDate {
        self.values[0].date
    }

    pub fn end_date(&self) -> NaiveDate {
        self.values[self.values.len() - 1].date
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[DayRecord] {
        &self.values
    }

    pub fn features(&self) -> Vec<Features> {
        self.values.iter().map(DayRecord::features).collect()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.values.iter().map(|r| r.date)
    }

    /// Position of `date` in the series, if covered.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start_date()).num_days();
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.index_of(date).is_some()
    }

    pub fn record(&self, date: NaiveDate) -> Option<&DayRecord> {
        self.index_of(date).map(|i| &self.values[i])
    }

    /// The `days` days immediately before `first_forecast_day`.
    pub fn context_before(&self, first_forecast_day: NaiveDate, days: usize) -> Result<Self> {
        let last = first_forecast_day - Days::new(1);
        let first = first_forecast_day - Days::new(days as u64);
        split_by_dates(self, first, last)
    }

    /// Applies `f` to every feature row, keeping dates and metadata.
    pub fn map_features(&self, mut f: impl FnMut(Features) -> Features) -> Result<Self> {
        let values = self
            .values
            .iter()
            .map(|r| DayRecord::new(r.date, f(r.features())))
            .collect();
        Self::new(self.country_name.clone(), self.population_density, values)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.country_name = name.into();
        self
    }
}

fn next_day(date: NaiveDate) -> NaiveDate {
    date + Days::new(1)
}

/// Reads a `date,new_cases,new_deaths,active_cases` CSV snapshot.
///
/// Rows may appear in any order; they are sorted by date before the
/// contiguity check. Zero counts are legal.
pub fn load_series(path: impl AsRef<Path>, country_name: &str, population_density: f64) -> Result<CountrySeries> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_series(&bytes, path, country_name, population_density)
}

pub fn parse_series(bytes: &[u8], path: &Path, country_name: &str, population_density: f64) -> Result<CountrySeries> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(Error::EmptyFile {
            path: path.display().to_string(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!(
                "expected header `{}`, found `{}`",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut rows: Vec<(usize, DayRecord)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != CSV_HEADER.len() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected {} columns, found {}", CSV_HEADER.len(), record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| Error::MalformedRow {
            line,
            reason: format!("bad date `{}`: {e}", &record[0]),
        })?;
        let mut features = [0.0; N_FEATURES];
        for (f, slot) in features.iter_mut().enumerate() {
            let raw = &record[f + 1];
            let value: f64 = raw.parse().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("bad number `{raw}` in column {}", FEATURE_NAMES[f]),
            })?;
            if !value.is_finite() {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("non-finite value in column {}", FEATURE_NAMES[f]),
                });
            }
            if value < 0.0 {
                return Err(Error::NegativeValue {
                    line,
                    column: FEATURE_NAMES[f],
                    value,
                });
            }
            *slot = value;
        }
        rows.push((line, DayRecord::new(date, features)));
    }

    if rows.is_empty() {
        return Err(Error::EmptyFile {
            path: path.display().to_string(),
        });
    }
    rows.sort_by_key(|(_, r)| r.date);
    for pair in rows.windows(2) {
        if pair[0].1.date == pair[1].1.date {
            return Err(Error::MalformedRow {
                line: pair[1].0,
                reason: format!("duplicate date {}", pair[1].1.date),
            });
        }
    }
    if rows.len() < 2 {
        return Err(Error::InvalidSeries(format!(
            "{}: need at least 2 days, found 1",
            path.display()
        )));
    }
    CountrySeries::new(
        country_name,
        population_density,
        rows.into_iter().map(|(_, r)| r).collect(),
    )
}

/// Writes a series in the ingestion CSV schema.
pub fn write_series(series: &CountrySeries, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for rec in series.values() {
        w.write_record([
            rec.date.format("%Y-%m-%d").to_string(),
            rec.new_cases.to_string(),
            rec.new_deaths.to_string(),
            rec.active_cases.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn normalize_by_density(series: &CountrySeries) -> Result<CountrySeries> {
    let density = series.population_density();
    if density <= 0.0 {
        return Err(Error::ZeroDensity(density));
    }
    series.map_features(|f| f.map(|v| v / density))
}

/// Per-feature min-max scaler onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    min: Features,
    max: Features,
}

impl FeatureScaler {
    pub fn new(min: Features, max: Features) -> Result<Self> {
        for f in 0..N_FEATURES {
            if !(min[f].is_finite() && max[f].is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "scaler bounds for {} must be finite",
                    FEATURE_NAMES[f]
                )));
            }
            if max[f] <= min[f] {
                return Err(Error::ConstantFeature {
                    feature: FEATURE_NAMES[f],
                    value: min[f],
                });
            }
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> Features {
        self.min
    }

    pub fn max(&self) -> Features {
        self.max
    }

    pub fn apply(&self, x: Features) -> Features {
        std::array::from_fn(|f| (x[f] - self.min[f]) / (self.max[f] - self.min[f]))
    }

    pub fn invert(&self, y: Features) -> Features {
        std::array::from_fn(|f| y[f] * (self.max[f] - self.min[f]) + self.min[f])
    }

    pub fn apply_rows(&self, rows: &[Features]) -> Vec<Features> {
        rows.iter().map(|r| self.apply(*r)).collect()
    }

    pub fn invert_rows(&self, rows: &[Features]) -> Vec<Features> {
        rows.iter().map(|r| self.invert(*r)).collect()
    }
}

pub fn fit_scaler(series: &CountrySeries) -> Result<FeatureScaler> {
    if series.len() < 2 {
        return Err(Error::SeriesTooShort {
            length: series.len(),
            lookback: 1,
        });
    }
    let mut min = [f64::INFINITY; N_FEATURES];
    let mut max = [f64::NEG_INFINITY; N_FEATURES];
    for rec in series.values() {
        for (f, v) in rec.features().into_iter().enumerate() {
            min[f] = min[f].min(v);
            max[f] = max[f].max(v);
        }
    }
    FeatureScaler::new(min, max)
}

pub fn apply_scaler(rows: &[Features], scaler: &FeatureScaler) -> Vec<Features> {
    scaler.apply_rows(rows)
}

pub fn invert_scaler(rows: &[Features], scaler: &FeatureScaler) -> Vec<Features> {
    scaler.invert_rows(rows)
}

/// Inclusive sub-series `[from, to]`.
pub fn split_by_dates(series: &CountrySeries, from: NaiveDate, to: NaiveDate) -> Result<CountrySeries> {
    let out_of_range = || Error::OutOfRange {
        from,
        to,
        start: series.start_date(),
        end: series.end_date(),
    };
    if from > to {
        return Err(out_of_range());
    }
    let lo = series.index_of(from).ok_or_else(out_of_range)?;
    let hi = series.index_of(to).ok_or_else(out_of_range)?;
    CountrySeries::new(
        series.country_name(),
        series.population_density(),
        series.values()[lo..=hi].to_vec(),
    )
}

/// Inclusive calendar interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl DateRange {
    pub fn new(from: NaiveDate, to: NaiveDate) -> Result<Self> {
        if from > to {
            return Err(Error::InvalidConfig(format!("date range {from}..={to} is reversed")));
        }
        Ok(Self { from, to })
    }

    /// Number of calendar days covered.
    pub fn days(&self) -> usize {
        ((self.to - self.from).num_days() + 1).max(0) as usize
    }

    pub fn slice(&self, series: &CountrySeries) -> Result<CountrySeries> {
        split_by_dates(series, self.from, self.to)
    }
}

impl std::fmt::Display for DateRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..={}", self.from, self.to)
    }
}

/// Supervised (window, next day) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    lookback: usize,
    inputs: Vec<Vec<Features>>,
    targets: Vec<Features>,
    target_dates: Vec<NaiveDate>,
    scaler: Option<FeatureScaler>,
}

impl WindowedDataset {
    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<Features>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Features] {
        &self.targets
    }

    pub fn target_dates(&self) -> &[NaiveDate] {
        &self.target_dates
    }

    /// Scaler the samples were transformed with, if any.
    pub fn scaler(&self) -> Option<&FeatureScaler> {
        self.scaler.as_ref()
    }

    /// Applies `scaler` to every input row and target.
    pub fn scaled(&self, scaler: FeatureScaler) -> Self {
        Self {
            lookback: self.lookback,
            inputs: self.inputs.iter().map(|w| scaler.apply_rows(w)).collect(),
            targets: scaler.apply_rows(&self.targets),
            target_dates: self.target_dates.clone(),
            scaler: Some(scaler),
        }
    }
}

pub fn make_windows(series: &CountrySeries, lookback: usize) -> Result<WindowedDataset> {
    if lookback == 0 {
        return Err(Error::InvalidConfig("look-back must be at least 1".into()));
    }
    if series.len() <= lookback {
        return Err(Error::SeriesTooShort {
            length: series.len(),
            lookback,
        });
    }
    let rows = series.features();
    let n = rows.len() - lookback;
    let inputs = (0..n).map(|k| rows[k..k + lookback].to_vec()).collect();
    let targets = (0..n).map(|k| rows[k + lookback]).collect();
    let target_dates = series.values()[lookback..].iter().map(|r| r.date).collect();
    Ok(WindowedDataset {
        lookback,
        inputs,
        targets,
        target_dates,
        scaler: None,
    })
}
