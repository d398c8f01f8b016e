//! Study configuration (TOML).

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{load_series, CountrySeries, DateRange};
use crate::ensemble::{RmseAggregation, WeightMode};
use crate::error::{Error, Result};
use crate::forecast::DEFAULT_HORIZON;
use crate::metrics::MetricScale;
use crate::train::TrainConfig;

pub const DEFAULT_LOOKBACK: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountryEntry {
    pub name: String,
    pub csv_path: PathBuf,
    pub population_density: f64,
}

/// Pre-train, fine-tune, validation and test windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolDates {
    pub pretrain_from: NaiveDate,
    pub pretrain_to: NaiveDate,
    pub finetune_from: NaiveDate,
    pub finetune_to: NaiveDate,
    pub validate_from: NaiveDate,
    pub validate_to: NaiveDate,
    pub test_from: NaiveDate,
    pub test_to: NaiveDate,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

impl Default for ProtocolDates {
    fn default() -> Self {
        Self {
            pretrain_from: ymd(2020, 2, 15),
            pretrain_to: ymd(2021, 4, 16),
            finetune_from: ymd(2021, 1, 1),
            finetune_to: ymd(2021, 3, 31),
            validate_from: ymd(2021, 4, 1),
            validate_to: ymd(2021, 4, 15),
            test_from: ymd(2021, 4, 16),
            test_to: ymd(2021, 6, 4),
        }
    }
}

impl ProtocolDates {
    pub fn pretrain(&self) -> DateRange {
        DateRange {
            from: self.pretrain_from,
            to: self.pretrain_to,
        }
    }

    pub fn finetune(&self) -> DateRange {
        DateRange {
            from: self.finetune_from,
            to: self.finetune_to,
        }
    }

    pub fn validate(&self) -> DateRange {
        DateRange {
            from: self.validate_from,
            to: self.validate_to,
        }
    }

    pub fn test(&self) -> DateRange {
        DateRange {
            from: self.test_from,
            to: self.test_to,
        }
    }

    fn check(&self) -> Result<()> {
        for (name, r) in [
            ("pretrain", self.pretrain()),
            ("finetune", self.finetune()),
            ("validate", self.validate()),
            ("test", self.test()),
        ] {
            if r.from > r.to {
                return Err(Error::InvalidConfig(format!("{name} range {r} is reversed")));
            }
        }
        if self.finetune_to >= self.validate_from || self.validate_to >= self.test_from {
            return Err(Error::InvalidConfig(
                "fine-tune, validation and test ranges must be disjoint and in that order".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub countries: Vec<CountryEntry>,
    pub target: String,
    pub dates: ProtocolDates,
    /// Training range of the target-only model; defaults to
    /// `pretrain_from..=finetune_to`, i.e. everything before validation.
    pub target_only_range: Option<DateRange>,
    pub lookback: usize,
    pub horizon: usize,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub finetune_enabled: bool,
    pub ensemble_mode: WeightMode,
    pub rmse_aggregation: RmseAggregation,
    pub metric_scale: MetricScale,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            countries: Vec::new(),
            target: String::new(),
            dates: ProtocolDates::default(),
            target_only_range: None,
            lookback: DEFAULT_LOOKBACK,
            horizon: DEFAULT_HORIZON,
            seed: 0,
            seeds: (0..20).collect(),
            finetune_enabled: true,
            ensemble_mode: WeightMode::Literal,
            rmse_aggregation: RmseAggregation::PerVariable,
            metric_scale: MetricScale::Sum,
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; relative CSV paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: Self = toml::from_str(text)?;
        for c in &mut config.countries {
            if c.csv_path.is_relative() {
                c.csv_path = base_dir.join(&c.csv_path);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.countries.iter().any(|c| c.name == self.target) {
            return Err(Error::InvalidConfig(format!(
                "target `{}` is not among the configured countries",
                self.target
            )));
        }
        if self.source_names().is_empty() {
            return Err(Error::InvalidConfig("at least one source country is required".into()));
        }
        let mut names: Vec<&str> = self.countries.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("country names must be unique".into()));
        }
        for c in &self.countries {
            if c.population_density.is_nan() || c.population_density <= 0.0 {
                return Err(Error::ZeroDensity(c.population_density));
            }
        }
        if self.lookback == 0 {
            return Err(Error::InvalidConfig("look-back must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.horizon > self.lookback {
            log::warn!(
                "horizon {} exceeds look-back {}; late forecast steps will condition only on predictions",
                self.horizon,
                self.lookback
            );
        }
        self.dates.check()?;
        if let Some(r) = self.target_only_range {
            if r.to >= self.dates.validate_from {
                return Err(Error::InvalidConfig(
                    "target-only training range must end before validation".into(),
                ));
            }
        }
        self.train.validate()
    }

    /// Source countries in configuration order.
    pub fn source_names(&self) -> Vec<String> {
        self.countries
            .iter()
            .filter(|c| c.name != self.target)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn target_only_range(&self) -> DateRange {
        self.target_only_range.unwrap_or(DateRange {
            from: self.dates.pretrain_from,
            to: self.dates.finetune_to,
        })
    }

    /// Reads every configured CSV.
    pub fn load_series(&self) -> Result<Vec<CountrySeries>> {
        self.countries
            .iter()
            .map(|c| load_series(&c.csv_path, &c.name, c.population_density))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
target = "India"
lookback = 14
horizon = 7
seed = 3
ensemble_mode = "inverse"

[[countries]]
name = "Spain"
csv_path = "spain.csv"
population_density = 94.0

[[countries]]
name = "India"
csv_path = "/abs/india.csv"
population_density = 464.0

[dates]
pretrain_from = "2020-02-15"
pretrain_to = "2021-04-16"
finetune_from = "2021-01-01"
finetune_to = "2021-03-31"
validate_from = "2021-04-01"
validate_to = "2021-04-15"
test_from = "2021-04-16"
test_to = "2021-06-04"

[train]
learning_rate = 0.005
epochs = 40
"#;

    #[test]
    fn parses_and_resolves_paths() {
        let c = ExperimentConfig::from_toml(SAMPLE, Path::new("/data")).unwrap();
        assert_eq!(c.countries[0].csv_path, PathBuf::from("/data/spain.csv"));
        assert_eq!(c.countries[1].csv_path, PathBuf::from("/abs/india.csv"));
        assert_eq!(c.source_names(), vec!["Spain".to_string()]);
        assert_eq!(c.ensemble_mode, WeightMode::Inverse);
        assert_eq!(c.train.epochs, 40);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.dates, ProtocolDates::default());
        assert_eq!(c.target_only_range().to, ymd(2021, 3, 31));
    }

    #[test]
    fn rejects_missing_target_and_bad_values() {
        let bad = SAMPLE.replace("target = \"India\"", "target = \"Peru\"");
        assert!(ExperimentConfig::from_toml(&bad, Path::new(".")).is_err());
        let bad = SAMPLE.replace("lookback = 14", "lookback = 0");
        assert!(ExperimentConfig::from_toml(&bad, Path::new(".")).is_err());
        let bad = SAMPLE.replace("epochs = 40", "epochs = 0");
        assert!(ExperimentConfig::from_toml(&bad, Path::new(".")).is_err());
        let bad = SAMPLE.replace("population_density = 94.0", "population_density = 0.0");
        assert!(ExperimentConfig::from_toml(&bad, Path::new(".")).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::from_toml(SAMPLE, Path::new("/data")).unwrap();
        let text = c.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text, Path::new("/elsewhere")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn shipped_protocol_file_parses() {
        let text = include_str!("../../../configs/default_protocol.toml");
        let c = ExperimentConfig::from_toml(text, Path::new("configs")).unwrap();
        assert_eq!(c.dates, ProtocolDates::default());
        assert_eq!(c.source_names().len(), 4);
        assert_eq!(c.seeds.len(), 20);
    }
}
