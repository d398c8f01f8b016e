//! Transfer-learned GRU forecasting of daily epidemic counts with
//! validation-weighted ensembles over source countries.

#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod forecast;
pub mod gru;
pub mod metrics;
pub mod optim;
pub mod synth;
pub mod train;
pub mod transfer;

pub use config::{CountryEntry, ExperimentConfig, ProtocolDates, DEFAULT_LOOKBACK};
pub use data::{
    load_series, make_windows, normalize_by_density, split_by_dates, CountrySeries, DateRange, DayRecord,
    FeatureScaler, Features, WindowedDataset, FEATURE_NAMES, N_FEATURES,
};
pub use ensemble::{
    combine, compute_weights, compute_weights_with, enumerate_combinations, EnsembleReport, EnsembleSpec,
    RmseAggregation, ValidationScore, WeightMode,
};
pub use error::{Error, Result};
pub use experiment::{ExperimentOutput, Regime, ResultRow, ResultTable, Study};
pub use forecast::{recursive_forecast, ForecastResult, OneStepModel, DEFAULT_HORIZON};
pub use gru::{GruParams, Matrix};
pub use metrics::{
    evaluate_forecast, evaluate_forecast_scaled, rmae_relative, rmse_relative, EvaluationReport, MetricScale,
};
pub use optim::{AdamConfig, AdamState};
pub use synth::{generate_synthetic, SynthKind, SynthParams};
pub use train::{train, GruModel, TrainConfig, TrainHistory};
pub use transfer::{finetune, pretrain, TransferPlan};
