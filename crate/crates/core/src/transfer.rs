//! Pre-training on a source country, fine-tuning on the target country, and
//! the target-only baseline.

use serde::{Deserialize, Serialize};

use crate::data::{
    fit_scaler, make_windows, normalize_by_density, CountrySeries, DateRange, FeatureScaler, WindowedDataset,
};
use crate::error::{Error, Result};
use crate::train::{train, GruModel, TrainConfig, TrainHistory};

/// Density-normalizes, slices to `range`, and builds scaled windows.
///
/// The scaler is fit on the slice unless one is supplied.
pub fn prepare_dataset(
    series: &CountrySeries,
    range: DateRange,
    lookback: usize,
    scaler: Option<FeatureScaler>,
) -> Result<WindowedDataset> {
    let slice = range.slice(&normalize_by_density(series)?)?;
    let windows = make_windows(&slice, lookback)?;
    let scaler = match scaler {
        Some(s) => s,
        None => fit_scaler(&slice)?,
    };
    Ok(windows.scaled(scaler))
}

/// Trains a fresh model on `range` of the source series.
pub fn pretrain(
    source: &CountrySeries,
    range: DateRange,
    lookback: usize,
    config: &TrainConfig,
) -> Result<(GruModel, TrainHistory)> {
    config.validate()?;
    let dataset = prepare_dataset(source, range, lookback, None)?;
    let (model, history) = train(&dataset, config, None)?;
    Ok((model.with_provenance(source.country_name()), history))
}

/// Continues training every parameter on the target slice at the reduced
/// fine-tuning learning rate. The returned model owns a scaler refit on the
/// target slice.
pub fn finetune(
    model: &GruModel,
    target: &CountrySeries,
    range: DateRange,
    config: &TrainConfig,
) -> Result<(GruModel, TrainHistory)> {
    config.validate()?;
    let dataset = prepare_dataset(target, range, model.lookback, None)?;
    let (tuned, history) = train(&dataset, &config.for_finetune(), Some(model.params.clone()))?;
    let provenance = format!("{}, fine-tuned on {}", model.provenance, target.country_name());
    Ok((tuned.with_provenance(provenance), history))
}

/// The baseline trained only on the target country.
pub fn train_target_only(
    target: &CountrySeries,
    range: DateRange,
    lookback: usize,
    config: &TrainConfig,
) -> Result<(GruModel, TrainHistory)> {
    let (model, history) = pretrain(target, range, lookback, config)?;
    let provenance = target_only_label(target.country_name());
    Ok((model.with_provenance(provenance), history))
}

pub fn target_only_label(target: &str) -> String {
    format!("{target}-only")
}

/// One source → target transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferPlan {
    pub source: String,
    pub pretrain_range: DateRange,
    pub target: String,
    pub finetune_range: DateRange,
    pub finetune_enabled: bool,
}

impl TransferPlan {
    pub fn validate(&self, lookback: usize) -> Result<()> {
        for (name, range) in [("pretrain", self.pretrain_range), ("finetune", self.finetune_range)] {
            if range.days() <= lookback {
                return Err(Error::InvalidConfig(format!(
                    "{name} range {range} spans {} days; look-back {lookback} needs more",
                    range.days()
                )));
            }
        }
        Ok(())
    }

    /// Pre-trains on `source` and, when enabled, fine-tunes on `target`.
    /// With fine-tuning disabled the pre-trained model is returned as is.
    pub fn run(
        &self,
        source: &CountrySeries,
        target: &CountrySeries,
        lookback: usize,
        config: &TrainConfig,
    ) -> Result<GruModel> {
        self.validate(lookback)?;
        if source.country_name() != self.source || target.country_name() != self.target {
            return Err(Error::InvalidConfig(format!(
                "plan {} → {} given series {} → {}",
                self.source,
                self.target,
                source.country_name(),
                target.country_name()
            )));
        }
        let (pretrained, _) = pretrain(source, self.pretrain_range, lookback, config)?;
        self.apply_finetune(pretrained, target, config)
    }

    /// The fine-tuning half of [`run`](Self::run).
    pub fn apply_finetune(
        &self,
        pretrained: GruModel,
        target: &CountrySeries,
        config: &TrainConfig,
    ) -> Result<GruModel> {
        if !self.finetune_enabled {
            return Ok(pretrained);
        }
        Ok(finetune(&pretrained, target, self.finetune_range, config)?.0)
    }
}
