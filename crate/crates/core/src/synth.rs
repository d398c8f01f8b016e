//! Deterministic epidemic-like series for tests and demos.
//!
//! New cases are logistic-derivative pulses on top of a constant floor,
//! deaths are a lagged fraction of cases, and active cases are the sum of
//! cases minus deaths over a trailing recovery window.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{CountryEntry, ExperimentConfig};
use crate::data::{CountrySeries, Features};
use crate::error::{Error, Result};
use crate::gru::sigmoid;
use crate::train::TrainConfig;

/// Days from 2020-02-15 through 2021-06-04, the default study calendar.
pub const STUDY_DAYS: usize = 476;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    LogisticWave,
    TwoWave,
    Noisy,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic-wave" => Ok(Self::LogisticWave),
            "two-wave" => Ok(Self::TwoWave),
            "noisy" => Ok(Self::Noisy),
            other => Err(Error::InvalidConfig(format!("unknown synthetic kind `{other}`"))),
        }
    }
}

/// One logistic-derivative pulse peaking at `amplitude` on day `peak`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub peak: f64,
    pub amplitude: f64,
    pub width: f64,
}

impl Pulse {
    pub fn at(&self, t: f64) -> f64 {
        let s = sigmoid((t - self.peak) / self.width);
        4.0 * self.amplitude * s * (1.0 - s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub name: String,
    pub population_density: f64,
    pub start_date: NaiveDate,
    pub first: Pulse,
    /// Added on top of `first` by `TwoWave` only.
    pub second: Pulse,
    pub floor: f64,
    pub death_lag: usize,
    pub death_fraction: f64,
    pub recovery_days: usize,
    /// Relative standard deviation of multiplicative noise. `Noisy` uses
    /// 0.05 when this is zero; the other kinds ignore it.
    pub noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            name: "Synthland".into(),
            population_density: 100.0,
            start_date: NaiveDate::from_ymd_opt(2020, 2, 15).expect("valid date"),
            first: Pulse {
                peak: 120.0,
                amplitude: 20_000.0,
                width: 12.0,
            },
            second: Pulse {
                peak: 330.0,
                amplitude: 35_000.0,
                width: 10.0,
            },
            floor: 50.0,
            death_lag: 14,
            death_fraction: 0.02,
            recovery_days: 14,
            noise: 0.0,
        }
    }
}

pub fn generate_synthetic(kind: SynthKind, days: usize, seed: u64, params: &SynthParams) -> Result<CountrySeries> {
    if days < 2 {
        return Err(Error::InvalidConfig("synthetic series needs at least 2 days".into()));
    }
    let cases = |t: f64| -> f64 {
        let mut c = params.floor + params.first.at(t);
        if kind == SynthKind::TwoWave {
            c += params.second.at(t);
        }
        c
    };
    let deaths = |t: f64| params.death_fraction * cases(t - params.death_lag as f64);

    let mut rows: Vec<Features> = (0..days)
        .map(|day| {
            let t = day as f64;
            let active: f64 = (0..params.recovery_days.max(1))
                .map(|k| cases(t - k as f64) - deaths(t - k as f64))
                .sum();
            [cases(t), deaths(t), active.max(0.0)]
        })
        .collect();

    let noise = match kind {
        SynthKind::Noisy if params.noise == 0.0 => 0.05,
        SynthKind::Noisy => params.noise,
        _ => 0.0,
    };
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for row in &mut rows {
            for v in row.iter_mut() {
                *v = (*v * (1.0 + normal.sample(&mut rng))).max(0.0);
            }
        }
    }
    CountrySeries::from_features(params.name.clone(), params.population_density, params.start_date, &rows)
}

/// Noiseless source wave and an amplitude- and phase-shifted target that
/// peaks late in the default fine-tune window.
pub fn transfer_pair() -> Result<(CountrySeries, CountrySeries)> {
    let source = SynthParams {
        name: "Source".into(),
        first: Pulse {
            peak: 330.0,
            amplitude: 20_000.0,
            width: 12.0,
        },
        ..SynthParams::default()
    };
    let target = SynthParams {
        name: "Target".into(),
        first: Pulse {
            peak: 400.0,
            amplitude: 2_000.0,
            width: 12.0,
        },
        ..SynthParams::default()
    };
    Ok((
        generate_synthetic(SynthKind::LogisticWave, STUDY_DAYS, 0, &source)?,
        generate_synthetic(SynthKind::LogisticWave, STUDY_DAYS, 0, &target)?,
    ))
}

const SOURCE_NAMES: [&str; 8] = ["Alpha", "Beta", "Gamma", "Delta", "Epsilon", "Zeta", "Eta", "Theta"];

/// A small study of `sources` synthetic source countries plus a target
/// named `Target`, with a fast training setup. CSV paths are `<name>.csv`.
pub fn demo_study(kind: SynthKind, sources: usize, seed: u64) -> Result<(ExperimentConfig, Vec<CountrySeries>)> {
    if sources == 0 || sources > SOURCE_NAMES.len() {
        return Err(Error::InvalidConfig(format!(
            "demo study supports 1..={} sources",
            SOURCE_NAMES.len()
        )));
    }
    let mut params: Vec<SynthParams> = (0..sources)
        .map(|i| {
            let k = i as f64;
            SynthParams {
                name: SOURCE_NAMES[i].into(),
                population_density: 50.0 + 40.0 * k,
                first: Pulse {
                    peak: 320.0 + 12.0 * k,
                    amplitude: 25_000.0 + 5_000.0 * k,
                    width: 11.0 + k,
                },
                second: Pulse {
                    peak: 110.0 + 15.0 * k,
                    amplitude: 12_000.0 + 4_000.0 * k,
                    width: 10.0 + k,
                },
                ..SynthParams::default()
            }
        })
        .collect();
    params.push(SynthParams {
        name: "Target".into(),
        population_density: 400.0,
        first: Pulse {
            peak: 400.0,
            amplitude: 8_000.0,
            width: 12.0,
        },
        second: Pulse {
            peak: 150.0,
            amplitude: 5_000.0,
            width: 12.0,
        },
        ..SynthParams::default()
    });
    let series = params
        .iter()
        .enumerate()
        .map(|(i, p)| generate_synthetic(kind, STUDY_DAYS, seed.wrapping_add(i as u64), p))
        .collect::<Result<Vec<_>>>()?;
    let config = ExperimentConfig {
        countries: params
            .iter()
            .map(|p| CountryEntry {
                name: p.name.clone(),
                csv_path: format!("{}.csv", p.name).into(),
                population_density: p.population_density,
            })
            .collect(),
        target: "Target".into(),
        seeds: (0..5).collect(),
        train: TrainConfig {
            learning_rate: 5e-3,
            epochs: 20,
            hidden_size: 8,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    };
    config.validate()?;
    Ok((config, series))
}
