//! Study orchestration: source models with or without fine-tuning, every
//! source combination as a validation-weighted ensemble, the target-only
//! baseline, and the look-back / seed / hyper-parameter sweeps built on top.
//!
//! Test errors are averaged over rolling, non-overlapping forecast origins
//! (`test_from`, `test_from + horizon`, ...); a trailing window shorter than
//! the horizon is dropped. Validation uses the same scheme.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{CountrySeries, DateRange, Features, FEATURE_NAMES, N_FEATURES};
use crate::ensemble::{
    combination_label, combine, compute_weights_with, ensemble_id, enumerate_combinations, EnsembleReport,
    ValidationScore, WeightMode,
};
use crate::error::{Error, Result};
use crate::forecast::{persistence_baseline, recursive_forecast, write_forecasts, ForecastResult, PERSISTENCE_ID};
use crate::metrics::{evaluate_forecast_scaled, EvaluationReport, MetricScale};
use crate::train::{GruModel, TrainConfig};
use crate::transfer::{finetune, pretrain, target_only_label, train_target_only};

/// Loaded series for one study.
#[derive(Debug, Clone)]
pub struct Study {
    pub sources: Vec<CountrySeries>,
    pub target: CountrySeries,
}

impl Study {
    /// Picks the configured countries out of `series` by name.
    pub fn from_series(config: &ExperimentConfig, series: Vec<CountrySeries>) -> Result<Self> {
        let find = |name: &str| {
            series
                .iter()
                .find(|s| s.country_name() == name)
                .cloned()
                .ok_or_else(|| Error::InvalidConfig(format!("no series for country `{name}`")))
        };
        let sources = config
            .source_names()
            .iter()
            .map(|n| find(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sources,
            target: find(&config.target)?,
        })
    }

    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        Self::from_series(config, config.load_series()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    FineTuned,
    NotFineTuned,
}

impl Regime {
    pub fn from_flag(finetune_enabled: bool) -> Self {
        if finetune_enabled {
            Regime::FineTuned
        } else {
            Regime::NotFineTuned
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::FineTuned => "fine-tuned",
            Regime::NotFineTuned => "not-fine-tuned",
        })
    }
}

/// First days of the full-length forecast windows inside `range`.
pub fn forecast_origins(range: DateRange, horizon: usize) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    if horizon == 0 {
        return out;
    }
    let mut origin = range.from;
    while origin + Days::new(horizon as u64 - 1) <= range.to {
        out.push(origin);
        origin = origin + Days::new(horizon as u64);
    }
    out
}

/// Mixes the run seed with a per-model stream so each country gets an
/// independent, reproducible seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn country_stream(config: &ExperimentConfig, name: &str) -> u64 {
    config
        .countries
        .iter()
        .position(|c| c.name == name)
        .unwrap_or(usize::MAX) as u64
}

fn train_config_for(config: &ExperimentConfig, name: &str, seed: u64) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(seed, country_stream(config, name)),
        ..config.train
    }
}

/// A source model scored on the target.
#[derive(Debug, Clone)]
pub struct Member {
    pub name: String,
    pub model: GruModel,
    pub validation: ValidationScore,
    pub test_forecasts: Vec<ForecastResult>,
}

fn forecasts_at(
    name: &str,
    model: &GruModel,
    target: &CountrySeries,
    origins: &[NaiveDate],
    horizon: usize,
) -> Result<Vec<ForecastResult>> {
    origins
        .iter()
        .map(|&origin| {
            let context = target.context_before(origin, model.lookback)?;
            let mut f = recursive_forecast(model, &context, horizon)?;
            f.member_id = name.to_string();
            Ok(f)
        })
        .collect()
}

fn evaluate_all(
    target: &CountrySeries,
    forecasts: &[ForecastResult],
    scale: MetricScale,
) -> Result<Vec<EvaluationReport>> {
    forecasts
        .iter()
        .map(|f| evaluate_forecast_scaled(target, f, scale))
        .collect()
}

/// Mean over origins of the per-origin RMSE and RMAE.
pub fn mean_over_origins(reports: &[EvaluationReport]) -> (Features, Features) {
    let n = reports.len().max(1) as f64;
    let mut rmse = [0.0; N_FEATURES];
    let mut rmae = [0.0; N_FEATURES];
    for r in reports {
        for v in 0..N_FEATURES {
            rmse[v] += r.rmse[v];
            rmae[v] += r.rmae[v];
        }
    }
    (rmse.map(|x| x / n), rmae.map(|x| x / n))
}

/// Trains every source model (pre-train, then fine-tune when enabled).
pub fn train_sources(config: &ExperimentConfig, study: &Study, seed: u64) -> Result<Vec<GruModel>> {
    let dates = config.dates;
    study
        .sources
        .par_iter()
        .map(|source| {
            let name = source.country_name();
            let cfg = train_config_for(config, name, seed);
            let run = || -> Result<GruModel> {
                let (model, _) = pretrain(source, dates.pretrain(), config.lookback, &cfg)?;
                if config.finetune_enabled {
                    Ok(finetune(&model, &study.target, dates.finetune(), &cfg)?.0)
                } else {
                    Ok(model)
                }
            };
            run().map_err(|e| Error::PartialFailure {
                member: name.to_string(),
                source: Box::new(e),
            })
        })
        .collect()
}

/// Validation score and test forecasts for each trained source model.
pub fn score_members(config: &ExperimentConfig, study: &Study, models: Vec<GruModel>) -> Result<Vec<Member>> {
    let val_origins = forecast_origins(config.dates.validate(), config.horizon);
    let test_origins = forecast_origins(config.dates.test(), config.horizon);
    if val_origins.is_empty() || test_origins.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "validation and test ranges must each hold at least one {}-day window",
            config.horizon
        )));
    }
    study
        .sources
        .iter()
        .zip(models)
        .map(|(source, model)| {
            let name = source.country_name().to_string();
            let wrap = |e: Error| Error::PartialFailure {
                member: name.clone(),
                source: Box::new(e),
            };
            let val = forecasts_at(&name, &model, &study.target, &val_origins, config.horizon).map_err(wrap)?;
            let reports = evaluate_all(&study.target, &val, config.metric_scale).map_err(wrap)?;
            let (rmse, _) = mean_over_origins(&reports);
            let validation = ValidationScore::new(name.clone(), rmse).map_err(wrap)?;
            let test_forecasts =
                forecasts_at(&name, &model, &study.target, &test_origins, config.horizon).map_err(wrap)?;
            Ok(Member {
                name,
                model,
                validation,
                test_forecasts,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    Combination,
    TargetOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub label: String,
    pub member_id: String,
    pub kind: RowKind,
    pub rmse: Features,
    pub rmae: Features,
}

/// One row per source combination plus the target-only row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub regime: Regime,
    pub mode: WeightMode,
    pub scale: MetricScale,
    pub horizon: usize,
    pub origins: Vec<NaiveDate>,
    pub rows: Vec<ResultRow>,
}

const TABLE_COLUMNS: [&str; 8] = [
    "combination",
    "member_id",
    "rmse_new_cases",
    "rmae_new_cases",
    "rmse_new_deaths",
    "rmae_new_deaths",
    "rmse_active_cases",
    "rmae_active_cases",
];

impl ResultTable {
    pub fn row(&self, label: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn combination_rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.kind == RowKind::Combination)
    }

    /// Lowest RMSE per variable over the combination rows.
    pub fn best_rmse(&self) -> Features {
        let mut best = [f64::INFINITY; N_FEATURES];
        for r in self.combination_rows() {
            for v in 0..N_FEATURES {
                best[v] = best[v].min(r.rmse[v]);
            }
        }
        best
    }

    /// CSV with `#` header lines recording regime, weighting and origins.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut writer = writer;
        let origins: Vec<String> = self.origins.iter().map(|d| d.to_string()).collect();
        let header = format!(
            "# regime: {}\n# ensemble-mode: {}\n# metric: relative error summed over each {}-day forecast{}, averaged over origins\n# origins: rolling non-overlapping {}-day windows starting {}\n",
            self.regime,
            self.mode,
            self.horizon,
            if self.scale == MetricScale::PerDay { " and divided by its length" } else { "" },
            self.horizon,
            origins.join(" ")
        );
        writer
            .write_all(header.as_bytes())
            .map_err(|e| Error::io("<results table>", e))?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TABLE_COLUMNS)?;
        for r in &self.rows {
            let mut record = vec![r.label.clone(), r.member_id.clone()];
            for v in 0..N_FEATURES {
                record.push(r.rmse[v].to_string());
                record.push(r.rmae[v].to_string());
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<results table>", e))?;
        Ok(())
    }
}

/// Data rows of a results CSV: `(combination, member_id, rmse, rmae)`.
pub fn read_results_csv(reader: impl Read) -> Result<Vec<(String, String, Features, Features)>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let num = |i: usize| -> Result<f64> {
            record[i].parse().map_err(|_| Error::MalformedRow {
                line: record.position().map_or(0, |p| p.line() as usize),
                reason: format!("bad number `{}`", &record[i]),
            })
        };
        let rmse = [num(2)?, num(4)?, num(6)?];
        let rmae = [num(3)?, num(5)?, num(7)?];
        out.push((record[0].to_string(), record[1].to_string(), rmse, rmae));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    /// Member, ensemble, target-only and persistence forecasts at every test origin.
    pub forecasts: Vec<ForecastResult>,
    /// Weights over all sources.
    pub ensemble: EnsembleReport,
    pub persistence: ResultRow,
    pub members: Vec<Member>,
}

/// Trains, scores and tabulates one full study for `seed`.
pub fn run_full_experiment(config: &ExperimentConfig, study: &Study, seed: u64) -> Result<ExperimentOutput> {
    config.validate()?;
    let test_origins = forecast_origins(config.dates.test(), config.horizon);
    let scale = config.metric_scale;

    let models = train_sources(config, study, seed)?;
    let members = score_members(config, study, models)?;
    let names: Vec<String> = members.iter().map(|m| m.name.clone()).collect();
    let scores: Vec<ValidationScore> = members.iter().map(|m| m.validation.clone()).collect();

    let mut forecasts: Vec<ForecastResult> = members.iter().flat_map(|m| m.test_forecasts.clone()).collect();
    let mut rows = Vec::new();
    for subset in enumerate_combinations(&names)? {
        let picked: Vec<&Member> = subset
            .iter()
            .map(|n| members.iter().find(|m| &m.name == n).expect("subset of members"))
            .collect();
        let subset_scores: Vec<ValidationScore> = picked.iter().map(|m| m.validation.clone()).collect();
        let spec = compute_weights_with(&subset_scores, config.ensemble_mode, config.rmse_aggregation)?;
        let combined = (0..test_origins.len())
            .map(|k| {
                let at_origin: Vec<ForecastResult> = picked.iter().map(|m| m.test_forecasts[k].clone()).collect();
                combine(&at_origin, &spec)
            })
            .collect::<Result<Vec<_>>>()?;
        let (rmse, rmae) = mean_over_origins(&evaluate_all(&study.target, &combined, scale)?);
        rows.push(ResultRow {
            label: combination_label(&subset),
            member_id: ensemble_id(&subset),
            kind: RowKind::Combination,
            rmse,
            rmae,
        });
        forecasts.extend(combined);
    }

    let target_name = study.target.country_name();
    let only_id = target_only_label(target_name);
    let only_cfg = train_config_for(config, target_name, seed);
    let (only_model, _) = train_target_only(&study.target, config.target_only_range(), config.lookback, &only_cfg)
        .map_err(|e| Error::PartialFailure {
            member: only_id.clone(),
            source: Box::new(e),
        })?;
    let only = forecasts_at(&only_id, &only_model, &study.target, &test_origins, config.horizon)?;
    let (rmse, rmae) = mean_over_origins(&evaluate_all(&study.target, &only, scale)?);
    rows.push(ResultRow {
        label: format!("{target_name} Model"),
        member_id: only_id,
        kind: RowKind::TargetOnly,
        rmse,
        rmae,
    });
    forecasts.extend(only);

    let persistence = test_origins
        .iter()
        .map(|&o| persistence_baseline(&study.target.context_before(o, config.lookback)?, config.horizon))
        .collect::<Result<Vec<_>>>()?;
    let (rmse, rmae) = mean_over_origins(&evaluate_all(&study.target, &persistence, scale)?);
    let persistence_row = ResultRow {
        label: "persistence".into(),
        member_id: PERSISTENCE_ID.into(),
        kind: RowKind::Combination,
        rmse,
        rmae,
    };
    forecasts.extend(persistence);

    let all_spec = compute_weights_with(&scores, config.ensemble_mode, config.rmse_aggregation)?;
    Ok(ExperimentOutput {
        table: ResultTable {
            regime: Regime::from_flag(config.finetune_enabled),
            mode: config.ensemble_mode,
            scale,
            horizon: config.horizon,
            origins: test_origins,
            rows,
        },
        forecasts,
        ensemble: EnsembleReport::new(&all_spec, &scores),
        persistence: persistence_row,
        members,
    })
}

/// File-name-safe form of a member id.
pub fn member_slug(member_id: &str) -> String {
    let mut slug = String::with_capacity(member_id.len());
    for c in member_id.chars() {
        if c.is_ascii_alphanumeric() || c == '-' {
            slug.push(c);
        } else if !slug.ends_with('_') {
            slug.push('_');
        }
    }
    slug.trim_matches('_').to_string()
}

pub fn forecast_file_name(f: &ForecastResult) -> String {
    format!("forecast_{}_{}.csv", member_slug(&f.member_id), f.start_date)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `results_table.csv`, `ensemble_report.json`, `baseline.csv` and
/// one `forecast_<member>_<origin>.csv` per forecast into `dir`.
pub fn write_experiment_outputs(dir: &Path, output: &ExperimentOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    output.table.write_csv(create(&dir.join("results_table.csv"))?)?;
    let baseline = ResultTable {
        rows: vec![output.persistence.clone()],
        ..output.table.clone()
    };
    baseline.write_csv(create(&dir.join("baseline.csv"))?)?;
    let json = serde_json::to_string_pretty(&output.ensemble)?;
    let path = dir.join("ensemble_report.json");
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    for f in &output.forecasts {
        write_forecasts([f], create(&dir.join(forecast_file_name(f)))?)?;
    }
    Ok(())
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lookback: usize,
    /// Mean over seeds of the best combination RMSE, per variable.
    pub mean_rmse: Features,
    pub per_seed: Vec<Features>,
}

/// One full experiment per (look-back, seed); each point averages the
/// per-seed best-combination RMSE.
pub fn lookback_sweep(
    config: &ExperimentConfig,
    study: &Study,
    lookbacks: &[usize],
    seeds: &[u64],
) -> Result<Vec<SweepPoint>> {
    if lookbacks.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "look-back sweep needs look-backs and seeds".into(),
        ));
    }
    if let Some(bad) = lookbacks.iter().find(|l| **l == 0) {
        return Err(Error::InvalidConfig(format!("look-back {bad} is not allowed")));
    }
    let cells: Vec<(usize, u64)> = lookbacks
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(lookback, seed)| {
            let cfg = ExperimentConfig {
                lookback,
                ..config.clone()
            };
            run_full_experiment(&cfg, study, seed).map(|out| out.table.best_rmse())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(lookbacks
        .iter()
        .zip(results.chunks(seeds.len()))
        .map(|(&lookback, per_seed)| {
            let mut mean_rmse = [0.0; N_FEATURES];
            for v in 0..N_FEATURES {
                mean_rmse[v] = per_seed.iter().map(|r| r[v]).sum::<f64>() / per_seed.len() as f64;
            }
            SweepPoint {
                lookback,
                mean_rmse,
                per_seed: per_seed.to_vec(),
            }
        })
        .collect())
}

/// Look-back with the lowest RMSE averaged over variables; ties go to the
/// shorter look-back.
pub fn select_lookback(points: &[SweepPoint]) -> Option<usize> {
    let score = |p: &SweepPoint| p.mean_rmse.iter().sum::<f64>() / N_FEATURES as f64;
    let mut best: Option<&SweepPoint> = None;
    for p in points {
        match best {
            Some(b) if score(p) > score(b) || (score(p) == score(b) && p.lookback > b.lookback) => {}
            _ => best = Some(p),
        }
    }
    best.map(|p| p.lookback)
}

pub fn write_sweep_csv(points: &[SweepPoint], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "lookback",
        "rmse_new_cases",
        "rmse_new_deaths",
        "rmse_active_cases",
        "seeds",
    ])?;
    for p in points {
        w.write_record([
            p.lookback.to_string(),
            p.mean_rmse[0].to_string(),
            p.mean_rmse[1].to_string(),
            p.mean_rmse[2].to_string(),
            p.per_seed.len().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<sweep csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub label: String,
    pub variable: String,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub runs: usize,
}

/// Mean and population standard deviation of every row's RMSE across
/// tables that share a row layout.
pub fn summarize_tables(tables: &[ResultTable]) -> Result<Vec<StabilityRow>> {
    let first = tables
        .first()
        .ok_or_else(|| Error::InvalidConfig("no runs to summarize".into()))?;
    for t in tables {
        let same = t.rows.len() == first.rows.len() && t.rows.iter().zip(&first.rows).all(|(a, b)| a.label == b.label);
        if !same {
            return Err(Error::MemberMismatch("result tables have different rows".into()));
        }
    }
    let mut out = Vec::new();
    for (i, row) in first.rows.iter().enumerate() {
        for (v, name) in FEATURE_NAMES.iter().enumerate() {
            let xs: Vec<f64> = tables.iter().map(|t| t.rows[i].rmse[v]).collect();
            let (mean_rmse, std_rmse) = mean_std(&xs);
            out.push(StabilityRow {
                label: row.label.clone(),
                variable: name.to_string(),
                mean_rmse,
                std_rmse,
                runs: xs.len(),
            });
        }
    }
    Ok(out)
}

pub fn multi_seed_stability(config: &ExperimentConfig, study: &Study, seeds: &[u64]) -> Result<Vec<StabilityRow>> {
    if seeds.len() < 2 {
        return Err(Error::InvalidConfig("stability analysis needs at least 2 seeds".into()));
    }
    let tables = seeds
        .par_iter()
        .map(|&s| run_full_experiment(config, study, s).map(|o| o.table))
        .collect::<Result<Vec<_>>>()?;
    summarize_tables(&tables)
}

pub fn write_stability_csv(rows: &[StabilityRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["combination", "variable", "mean_rmse", "std_rmse", "runs"])?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.variable.clone(),
            r.mean_rmse.to_string(),
            r.std_rmse.to_string(),
            r.runs.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<stability csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub learning_rates: Vec<f64>,
    pub epochs: Vec<usize>,
    pub hidden_sizes: Vec<usize>,
}

impl Grid {
    /// Points in lexicographic (learning rate, epochs, hidden size) order.
    pub fn points(&self) -> Vec<(f64, usize, usize)> {
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            for &ep in &self.epochs {
                for &h in &self.hidden_sizes {
                    out.push((lr, ep, h));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub learning_rate: f64,
    pub epochs: usize,
    pub hidden_size: usize,
    /// Validation RMSE averaged over members and variables.
    pub validation_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    pub best_index: usize,
    pub best: TrainConfig,
}

/// Index of the lowest score; the earliest wins ties.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if best.is_none_or(|b| *s < scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Exhaustive search scored by validation RMSE only; test data is untouched.
pub fn grid_search(config: &ExperimentConfig, study: &Study, grid: &Grid, seed: u64) -> Result<GridResult> {
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::InvalidConfig("grid has no points".into()));
    }
    let rows = points
        .par_iter()
        .map(|&(learning_rate, epochs, hidden_size)| {
            let cfg = ExperimentConfig {
                train: TrainConfig {
                    learning_rate,
                    epochs,
                    hidden_size,
                    ..config.train
                },
                ..config.clone()
            };
            cfg.validate()?;
            let members = score_members(&cfg, study, train_sources(&cfg, study, seed)?)?;
            let total: f64 = members
                .iter()
                .map(|m| m.validation.rmse_per_variable.iter().sum::<f64>())
                .sum();
            Ok(GridRow {
                learning_rate,
                epochs,
                hidden_size,
                validation_rmse: total / (members.len() * N_FEATURES) as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = rows.iter().map(|r| r.validation_rmse).collect();
    let best_index = select_best(&scores).expect("non-empty grid");
    let r = &rows[best_index];
    Ok(GridResult {
        best: TrainConfig {
            learning_rate: r.learning_rate,
            epochs: r.epochs,
            hidden_size: r.hidden_size,
            ..config.train
        },
        best_index,
        rows,
    })
}

pub fn write_grid_csv(result: &GridResult, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["learning_rate", "epochs", "hidden_size", "validation_rmse", "best"])?;
    for (i, r) in result.rows.iter().enumerate() {
        w.write_record([
            r.learning_rate.to_string(),
            r.epochs.to_string(),
            r.hidden_size.to_string(),
            r.validation_rmse.to_string(),
            (i == result.best_index).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<grid csv>", e))?;
    Ok(())
}
